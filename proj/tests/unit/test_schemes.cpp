#include "sdeadapt/problems.hpp"
#include "sdeadapt/schemes.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace sdeadapt;

namespace {

Vector scalar(double v) { return Vector::Constant(1, v); }

SdeSystem zero_system(std::size_t d = 1) {
  SdeSystem s;
  s.state_dim = d;
  s.noise_dim = d;
  s.drift = [](const Vector&, Vector& out) { out.setZero(); };
  s.diffusion = [](const Vector&, Matrix& out) { out.setZero(); };
  s.initial_state = Vector::Constant(static_cast<Eigen::Index>(d), 1.0);
  return s;
}

SdeSystem linear_system(double a, double b) {
  SdeSystem s;
  s.drift = [a](const Vector& x, Vector& out) { out = a * x; };
  s.diffusion = [b](const Vector& x, Matrix& out) { out(0, 0) = b * x[0]; };
  s.initial_state = scalar(1.0);
  return s;
}

// Root of y = 2 + (-y - y^3)/16 by bisection on [0, 2], evaluated independently.
constexpr double kGlImplicitRoot = 1.6283676859356206;
constexpr double kGlSqrt31 = 5.5677643628300215;
constexpr double kGlTruncationRadius = 14.219259286331676;

}  // namespace

TEST(SchemeSpec, NamesRoundTrip) {
  for (const char* n : {"ats-tem", "ats-tamed2", "ats-tamed1", "em", "fs-tem", "fs-taem", "fs-bem",
                        "as-bem"}) {
    EXPECT_EQ(scheme_from_name(n).name(), n);
  }
  EXPECT_THROW(scheme_from_name("milstein"), std::invalid_argument);
  EXPECT_THROW(SchemeSpec::fixed(SchemeKind::Ats, 0.1), std::invalid_argument);
}

TEST(SchemeSpec, Validation) {
  SchemeSpec s = SchemeSpec::fixed(SchemeKind::FsTem, 0.1);
  s.gamma = 0.6;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.gamma = 0.5;
  EXPECT_NO_THROW(s.validate());
  EXPECT_THROW(SchemeSpec::fixed(SchemeKind::Em, -1.0).validate(), std::invalid_argument);
  NewtonConfig n;
  n.max_iterations = 0;
  EXPECT_THROW(n.validate(), std::invalid_argument);
}

TEST(AtsStep, OriginIsAbsorbing) {
  const ProblemCatalogEntry gl = ginzburg_landau(0.0);
  BrownianPath path(1, 1);
  const StepResult r = ats_step(gl.system, gl.default_env, gl.default_cfg, scalar(0.0), 0.0, path);
  EXPECT_EQ(r.state[0], 0.0);
  EXPECT_EQ(r.time, gl.default_cfg.delta_max);
  EXPECT_FALSE(r.used_backstop);
}

TEST(AtsStep, BackstopWithZeroNoiseUsesTruncatedDrift) {
  const ProblemCatalogEntry gl = ginzburg_landau();
  const Vector x = scalar(16.0);
  const Vector y = ats_update(gl.system, gl.default_env, gl.default_cfg, x, 0x1p-20, Vector::Zero(1));
  const double pi = kGlTruncationRadius;
  EXPECT_NEAR(y[0], 16.0 + (-pi - pi * pi * pi) * 0x1p-20, 1e-12);
}

TEST(AtsStep, EqualBoundsGiveTheArgumentTruncatedUpdate) {
  const ProblemCatalogEntry gl = ginzburg_landau();
  AdaptiveConfig cfg{0x1p-10, 0x1p-10, Backstop::TruncatedEM};
  BrownianPath path(5, 1);
  const Vector x = scalar(40.0);
  const StepResult r = ats_step(gl.system, gl.default_env, cfg, x, 0.0, path);
  const Vector p = truncate(gl.default_env, cfg.delta_min, x);
  const Vector expect = x + gl.system.f(p) * 0x1p-10 + gl.system.g(p) * path.increment(0.0, 0x1p-10);
  EXPECT_EQ(r.state, expect);
  EXPECT_TRUE(r.used_backstop);
}

TEST(EmStep, Examples) {
  const SdeSystem zero = zero_system();
  BrownianPath path(2, 1);
  EXPECT_EQ(em_step(zero, scalar(3.0), 0.0, 0.25, path).state[0], 3.0);
  SdeSystem decay = linear_system(-1.0, 0.0);
  EXPECT_EQ(em_update(decay, scalar(1.0), 0.5, Vector::Zero(1))[0], 0.5);
  const StepResult r = em_step(decay, scalar(1.0), 0.25, 0.5, path);
  EXPECT_EQ(r.time, 0.75);
}

TEST(FsTemStep, ProjectsPredictedState) {
  const ProblemCatalogEntry gl = ginzburg_landau();
  const SdeSystem zero = zero_system();
  const Vector dw = Vector::Zero(1);
  EXPECT_NEAR(fs_tem_update(zero, gl.default_env, scalar(50.0), 0x1p-12, dw)[0], kGlSqrt31, 1e-12);
  EXPECT_EQ(fs_tem_update(zero, gl.default_env, scalar(3.0), 0x1p-12, dw)[0], 3.0);
  EXPECT_EQ(fs_tem_update(zero, gl.default_env, scalar(0.0), 0x1p-12, dw)[0], 0.0);
}

TEST(FsTaemStep, Examples) {
  const ProblemCatalogEntry gl = ginzburg_landau();
  const Vector y = fs_taem_update(gl.system, scalar(2.0), 0x1p-8, 0.5, Vector::Zero(1));
  EXPECT_NEAR(y[0], 2.0 - 10.0 * 0x1p-8 / (1.0 + 0x1p-4 * 14.0), 1e-15);
  EXPECT_NEAR(y[0], 1.9791666666666667, 1e-15);
  EXPECT_EQ(fs_taem_update(zero_system(), scalar(2.0), 0.1, 0.5, scalar(0.3))[0], 2.0);
  // |x' - x| <= |f h + g dW| since the divisor is at least one.
  const Vector dw = scalar(0.7);
  const Vector x = scalar(5.0);
  const Vector tamed = fs_taem_update(gl.system, x, 0.1, 0.5, dw);
  const Vector raw = em_update(gl.system, x, 0.1, dw);
  EXPECT_LE((tamed - x).norm(), (raw - x).norm());
}

TEST(BemStep, ZeroDriftEqualsEm) {
  SdeSystem s = linear_system(0.0, 0.8);
  BrownianPath a(17, 1);
  BrownianPath b(17, 1);
  const ImplicitStepResult imp = bem_step(s, scalar(1.5), 0.0, 0.1, a);
  const StepResult exp = em_step(s, scalar(1.5), 0.0, 0.1, b);
  EXPECT_NEAR(imp.state[0], exp.state[0], 1e-15);
}

TEST(BemStep, LinearDriftMatchesClosedForm) {
  for (double a : {-50.0, -2.0, 0.5}) {
    SdeSystem s = linear_system(a, 0.3);
    const double h = 0.125;
    const Vector x = scalar(1.7);
    const Vector dw = scalar(-0.4);
    const ImplicitSolution sol = bem_update(s, x, h, dw, {});
    const double exact = (x[0] + 0.3 * x[0] * dw[0]) / (1.0 - a * h);
    EXPECT_NEAR(sol.state[0], exact, 1e-10);
    EXPECT_LE(sol.residual, 1e-12);
  }
}

TEST(BemStep, GinzburgLandauMatchesBisectionOracle) {
  const ProblemCatalogEntry gl = ginzburg_landau();
  const ImplicitSolution sol = bem_update(gl.system, scalar(2.0), 0x1p-4, Vector::Zero(1), {});
  EXPECT_NEAR(sol.state[0], kGlImplicitRoot, 1e-6);
  EXPECT_LE(sol.residual, 1e-12);
}

TEST(BemStep, UnsolvableEquationRaises) {
  // y = x + h (y + 1) with h = 1 has no solution.
  SdeSystem s;
  s.drift = [](const Vector& y, Vector& out) { out[0] = y[0] + 1.0; };
  s.diffusion = [](const Vector&, Matrix& out) { out.setZero(); };
  s.initial_state = scalar(0.0);
  EXPECT_THROW(bem_update(s, scalar(0.0), 1.0, Vector::Zero(1), {}), ImplicitSolveError);
}

TEST(Simulate, ShortHorizonIsOneClampedStep) {
  const ProblemCatalogEntry gl = ginzburg_landau();
  BrownianPath path(3, 1);
  const double T = 1e-5;
  AdaptiveConfig cfg{0x1p-20, 0x1p-12, Backstop::TruncatedEM};
  const Trajectory traj = simulate(SchemeSpec::ats(cfg), gl.system, gl.default_env, path, T);
  ASSERT_EQ(traj.step_count(), 1u);
  EXPECT_EQ(traj.times.back(), T);
  EXPECT_EQ(traj.steps[0], T);
}

TEST(Simulate, TrajectoryInvariants) {
  const ProblemCatalogEntry st = stiff_cubic();
  AdaptiveConfig cfg{0x1p-16, 0x1p-2, Backstop::TruncatedEM};
  BrownianPath path(8, 1);
  const double T = 1.0;
  const Trajectory traj = simulate(SchemeSpec::ats(cfg), st.system, st.default_env, path, T);
  ASSERT_FALSE(traj.diverged);
  EXPECT_EQ(traj.times.front(), 0.0);
  EXPECT_EQ(traj.times.back(), T);
  const double total = std::accumulate(traj.steps.begin(), traj.steps.end(), 0.0);
  EXPECT_NEAR(total, T, 1e-12);
  for (std::size_t n = 0; n < traj.step_count(); ++n) {
    ASSERT_LT(traj.times[n], traj.times[n + 1]);
    ASSERT_NEAR(traj.times[n + 1] - traj.times[n], traj.steps[n], 4e-16 * traj.times[n + 1]);
    const Vector& x = traj.states[n];
    ASSERT_TRUE(traj.states[n + 1].allFinite());
    ASSERT_EQ(traj.backstop_flags[n], is_backstop(st.default_env, cfg, x));
    if (n + 1 < traj.step_count()) {
      ASSERT_EQ(traj.steps[n], adaptive_step(st.default_env, cfg, x));
      ASSERT_GE(traj.steps[n], cfg.delta_min);
    }
    ASSERT_LE(traj.steps[n], cfg.delta_max);
  }
}

TEST(Simulate, FinalStepUsesUnclampedIndicator) {
  const ProblemCatalogEntry gl = ginzburg_landau(20.0);
  // phi(20) = 401 > rho = 256, so the first step is a backstop step; T cuts it short.
  AdaptiveConfig cfg{0x1p-20, 0x1p-12, Backstop::TruncatedEM};
  BrownianPath path(4, 1);
  const double T = 0x1p-22;
  const Trajectory traj = simulate(SchemeSpec::ats(cfg), gl.system, gl.default_env, path, T);
  ASSERT_EQ(traj.step_count(), 1u);
  EXPECT_TRUE(traj.backstop_flags[0]);
  const Vector p = truncate(gl.default_env, cfg.delta_min, gl.system.initial_state);
  const Vector expect = gl.system.initial_state + gl.system.f(p) * T +
                        gl.system.g(p) * path.increment(0.0, T);
  EXPECT_EQ(traj.terminal_state, expect);
}

TEST(Simulate, FixedStepGridAndClamp) {
  const ProblemCatalogEntry gl = ginzburg_landau();
  BrownianPath path(6, 1);
  const Trajectory traj =
      simulate(SchemeSpec::fixed(SchemeKind::Em, 0.3), gl.system, gl.default_env, path, 1.0);
  ASSERT_EQ(traj.step_count(), 4u);
  EXPECT_DOUBLE_EQ(traj.times[3], 0.9);
  EXPECT_EQ(traj.times[4], 1.0);
  EXPECT_NEAR(traj.steps[3], 0.1, 1e-15);
}

TEST(Simulate, DegeneratesToFixedStepTruncatedUpdate) {
  const ProblemCatalogEntry gl = ginzburg_landau(3.0);
  const double h = 0x1p-9;
  AdaptiveConfig cfg{h, h, Backstop::TruncatedEM};
  BrownianPath path(21, 1);
  const Trajectory traj = simulate(SchemeSpec::ats(cfg), gl.system, gl.default_env, path, 1000 * h);
  ASSERT_EQ(traj.step_count(), 1000u);
  Vector x = gl.system.initial_state;
  for (std::size_t n = 0; n < 1000; ++n) {
    const Vector p = truncate(gl.default_env, h, x);
    x = x + gl.system.f(p) * h + gl.system.g(p) * path.increment(traj.times[n], traj.times[n + 1]);
    ASSERT_LE((x - traj.states[n + 1]).norm(), 1e-12 * std::max(1.0, x.norm()));
  }
}

TEST(Simulate, SchemesOnOnePathShareBrownianValues) {
  const ProblemCatalogEntry lz = lorenz();
  BrownianPath path(44, 3);
  const Trajectory ats = simulate(SchemeSpec::ats(lz.default_cfg), lz.system, lz.default_env, path, 0.1);
  // A second scheme refines the same path between the adaptive knots.
  simulate(SchemeSpec::fixed(SchemeKind::Em, 0x1p-13), lz.system, lz.default_env, path, 0.1);
  Vector x = lz.system.initial_state;
  for (std::size_t n = 0; n < ats.step_count(); ++n) {
    const Vector dw = path.increment(ats.times[n], ats.times[n + 1]);
    x = ats_update(lz.system, lz.default_env, lz.default_cfg, x, ats.steps[n], dw);
    ASSERT_EQ(x, ats.states[n + 1]) << "step " << n;
  }
}

TEST(Simulate, ImplicitResidualsWithinTolerance) {
  const ProblemCatalogEntry st = stiff_cubic();
  AdaptiveConfig cfg{0x1p-20, 0x1p-4, Backstop::TruncatedEM};
  BrownianPath path(12, 1);
  const Trajectory traj = simulate(SchemeSpec::as_bem(cfg), st.system, st.default_env, path, 0.5);
  ASSERT_EQ(traj.residuals.size(), traj.step_count());
  for (double r : traj.residuals) ASSERT_LE(r, 1e-12);
  BrownianPath fixed_path(12, 1);
  const Trajectory fixed = simulate(SchemeSpec::fixed(SchemeKind::FsBem, 0x1p-10), st.system,
                                    st.default_env, fixed_path, 0.5);
  for (double r : fixed.residuals) ASSERT_LE(r, 1e-12);
}

TEST(Simulate, BitwiseDeterministic) {
  const ProblemCatalogEntry st = stiff_cubic();
  for (const char* name : {"ats-tem", "ats-tamed1", "fs-taem", "as-bem"}) {
    SchemeSpec s = scheme_from_name(name);
    s.adaptive = AdaptiveConfig{0x1p-20, 0x1p-3, s.adaptive.backstop};
    s.step = 0x1p-11;
    BrownianPath a(77, 1);
    BrownianPath b(77, 1);
    const Trajectory ta = simulate(s, st.system, st.default_env, a, 0.2);
    const Trajectory tb = simulate(s, st.system, st.default_env, b, 0.2);
    ASSERT_EQ(ta.times, tb.times) << name;
    ASSERT_EQ(ta.terminal_state, tb.terminal_state) << name;
  }
}

TEST(Simulate, DivergenceIsFlaggedNotThrown) {
  const ProblemCatalogEntry gl = ginzburg_landau(2.0);
  bool any = false;
  for (std::uint64_t i = 0; i < 200 && !any; ++i) {
    BrownianPath path(derive_seed(42, i), 1);
    const Trajectory t =
        simulate(SchemeSpec::fixed(SchemeKind::Em, 0.3704), gl.system, gl.default_env, path, 10.0);
    if (t.diverged) {
      any = true;
      EXPECT_TRUE(!t.terminal_state.allFinite() || t.terminal_state.norm() > kDivergenceGuard);
    }
  }
  EXPECT_TRUE(any);
}

TEST(RunScheme, ReleasingHistoryDoesNotChangeResults) {
  const ProblemCatalogEntry st = stiff_cubic();
  AdaptiveConfig cfg{0x1p-20, 0x1p-1, Backstop::TruncatedEM};
  BrownianPath a(90, 1);
  BrownianPath b(90, 1);
  const Trajectory full = simulate(SchemeSpec::ats(cfg), st.system, st.default_env, a, 2.0);
  RunOptions opts;
  opts.release_history = true;
  std::size_t observed = 0;
  opts.observer = [&](double, const Vector&) { ++observed; };
  const RunSummary s = run_scheme(SchemeSpec::ats(cfg), st.system, st.default_env, b, 2.0, opts);
  EXPECT_EQ(s.terminal_state, full.terminal_state);
  EXPECT_EQ(s.steps, full.step_count());
  EXPECT_EQ(observed, full.step_count() + 1);
  EXPECT_LT(b.knot_count(), a.knot_count());
}

TEST(RunScheme, RejectsBadInputs) {
  const ProblemCatalogEntry gl = ginzburg_landau();
  BrownianPath path(1, 2);
  EXPECT_THROW(simulate(SchemeSpec::ats(gl.default_cfg), gl.system, gl.default_env, path, 1.0),
               std::invalid_argument);
  BrownianPath ok(1, 1);
  EXPECT_THROW(simulate(SchemeSpec::ats(gl.default_cfg), gl.system, gl.default_env, ok, 0.0),
               std::invalid_argument);
}
