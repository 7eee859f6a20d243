#include "sdeadapt/experiment.hpp"
#include "sdeadapt/problems.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace sdeadapt;

namespace {

RmseRow synthetic_row(double delta_max, double rmse) {
  RmseRow r;
  r.delta_max = delta_max;
  r.rmse = rmse;
  return r;
}

StudyConfig small_study(std::size_t paths, double horizon, unsigned threads = 1) {
  StudyConfig s;
  s.paths = paths;
  s.horizon = horizon;
  s.threads = threads;
  return s;
}

}  // namespace

TEST(FitConvergence, RecoversAPowerLaw) {
  std::vector<RmseRow> rows;
  for (int k = 4; k <= 9; ++k) {
    const double d = std::ldexp(1.0, -k);
    rows.push_back(synthetic_row(d, 3.0 * std::sqrt(d)));
  }
  const LinearFit fit = fit_convergence(rows, nullptr);
  ASSERT_TRUE(fit.fitted);
  EXPECT_NEAR(fit.slope, 0.5, 1e-12);
  EXPECT_NEAR(fit.intercept, std::log2(3.0), 1e-12);
  EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);
  EXPECT_EQ(fit.points, 6u);
}

TEST(FitConvergence, RefusesASinglePoint) {
  std::vector<std::string> warnings;
  const LinearFit fit = fit_convergence({synthetic_row(0.25, 0.1)}, &warnings);
  EXPECT_FALSE(fit.fitted);
  EXPECT_FALSE(warnings.empty());
}

TEST(FitConvergence, SkipsZeroAndDivergedRows) {
  std::vector<RmseRow> rows{synthetic_row(0.5, 0.0), synthetic_row(0.25, 0.5),
                            synthetic_row(0.125, 0.25), synthetic_row(0.0625, 0.125)};
  RmseRow bad = synthetic_row(0.03125, 100.0);
  bad.diverged_fraction = 0.02;
  rows.push_back(bad);
  std::vector<std::string> warnings;
  const LinearFit fit = fit_convergence(rows, &warnings);
  ASSERT_TRUE(fit.fitted);
  EXPECT_EQ(fit.points, 3u);
  EXPECT_NEAR(fit.slope, 1.0, 1e-12);
  EXPECT_EQ(warnings.size(), 2u);
}

TEST(MeanStep, Examples) {
  Trajectory t;
  t.times = {0.0, 0.25, 0.5, 1.0};
  t.steps = {0.25, 0.25, 0.5};
  t.backstop_flags = {true, false, false};
  EXPECT_DOUBLE_EQ(mean_step(t), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(backstop_fraction(t), 1.0 / 3.0);
  EXPECT_THROW(mean_step(Trajectory{}), std::invalid_argument);
}

TEST(RmseStudy, ReferenceAgainstItselfIsZero) {
  const ProblemCatalogEntry gl = ginzburg_landau();
  StudyConfig study = small_study(20, 0.25);
  study.reference = ReferenceSpec::as_bem(0x1p-8, 0x1p-20);
  const SchemeSpec same = SchemeSpec::as_bem(AdaptiveConfig{0x1p-20, 0x1p-8, Backstop::TruncatedEM});
  const RmseRow row = rmse_study(same, gl.system, gl.default_env, study, gl.name);
  EXPECT_EQ(row.rmse, 0.0);
  EXPECT_EQ(row.paths, 20u);
  EXPECT_EQ(row.problem, "ginzburg-landau");
  EXPECT_EQ(row.scheme, "as-bem");
}

TEST(RmseStudy, RejectsEmptyStudies) {
  const ProblemCatalogEntry gl = ginzburg_landau();
  EXPECT_THROW(rmse_study(SchemeSpec::ats(gl.default_cfg), gl.system, gl.default_env,
                          small_study(0, 1.0)),
               std::invalid_argument);
  EXPECT_THROW(rmse_study(SchemeSpec::ats(gl.default_cfg), gl.system, gl.default_env,
                          small_study(10, 0.0)),
               std::invalid_argument);
}

TEST(RmseStudy, ClosedFormRequiresAnExactSolution) {
  const ProblemCatalogEntry st = stiff_cubic();
  EXPECT_THROW(rmse_study(SchemeSpec::ats(st.default_cfg), st.system, st.default_env,
                          small_study(4, 0.1)),
               ConfigurationError);
}

TEST(ConvergenceStudy, RowsAreIndependentOfThreadCount) {
  const ProblemCatalogEntry gl = ginzburg_landau();
  const std::vector<double> ladder{0x1p-4, 0x1p-6, 0x1p-8};
  const SchemeSpec scheme = SchemeSpec::ats(gl.default_cfg);
  const auto one = convergence_study(scheme, gl.system, gl.default_env, ladder, 0x1p-20,
                                     small_study(60, 1.0, 1), gl.name);
  const auto three = convergence_study(scheme, gl.system, gl.default_env, ladder, 0x1p-20,
                                       small_study(60, 1.0, 3), gl.name);
  ASSERT_EQ(one.rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(one.rows[i].rmse, three.rows[i].rmse);
    EXPECT_EQ(one.rows[i].rmse_stderr, three.rows[i].rmse_stderr);
    EXPECT_EQ(one.rows[i].mean_step, three.rows[i].mean_step);
  }
  EXPECT_EQ(one.fit.slope, three.fit.slope);
  EXPECT_GT(one.rows[0].rmse, one.rows[2].rmse);
}

TEST(ConvergenceStudy, ValidatesLadder) {
  const ProblemCatalogEntry gl = ginzburg_landau();
  const SchemeSpec scheme = SchemeSpec::ats(gl.default_cfg);
  EXPECT_THROW(convergence_study(scheme, gl.system, gl.default_env, {0x1p-8, 0x1p-6}, 0x1p-20,
                                 small_study(4, 1.0)),
               std::invalid_argument);
  EXPECT_THROW(convergence_study(scheme, gl.system, gl.default_env, {0x1p-8, 0x1p-22}, 0x1p-20,
                                 small_study(4, 1.0)),
               std::invalid_argument);
}

TEST(ConvergenceStudy, MatchedFixedStepUsesTheAdaptiveMeanStep) {
  const ProblemCatalogEntry gl = ginzburg_landau();
  StudyConfig study = small_study(16, 1.0);
  study.match_adaptive_step = true;
  const auto rep = convergence_study(SchemeSpec::fixed(SchemeKind::FsTem, 0x1p-6), gl.system,
                                     gl.default_env, {0x1p-6, 0x1p-8}, 0x1p-20, study, gl.name);
  ASSERT_EQ(rep.rows.size(), 2u);
  for (const auto& r : rep.rows) {
    EXPECT_LT(r.fixed_step, r.delta_max);
    EXPECT_GT(r.fixed_step, r.delta_max / 16.0);
  }
}

TEST(Divergence, NoDriftNoDiffusionNeverDiverges) {
  SdeSystem zero;
  zero.drift = [](const Vector&, Vector& out) { out.setZero(); };
  zero.diffusion = [](const Vector&, Matrix& out) { out.setZero(); };
  zero.initial_state = Vector::Constant(1, 1.0);
  EXPECT_EQ(divergence_probe(zero, 0.5, 50, 10.0, 1), 0.0);
}

TEST(Divergence, SmallStepEulerIsStableOnGinzburgLandau) {
  const ProblemCatalogEntry gl = ginzburg_landau(2.0);
  EXPECT_EQ(divergence_probe(gl.system, 0x1p-10, 50, 1.0, 42), 0.0);
}

TEST(Divergence, LargeStepEulerDivergesButAdaptiveDoesNot) {
  const ProblemCatalogEntry gl = ginzburg_landau(2.0);
  EXPECT_GT(divergence_probe(gl.system, 0.3704, 100, 10.0, 42), 0.0);
  const SchemeSpec ats = SchemeSpec::ats(AdaptiveConfig{0x1p-12, 0.4, Backstop::TruncatedEM});
  EXPECT_EQ(diverged_fraction(ats, gl.system, gl.default_env, 100, 10.0, 42), 0.0);
}

TEST(MeanStepStudy, MatchesSingleTrajectoryOnOnePath) {
  const ProblemCatalogEntry st = stiff_cubic();
  const SchemeSpec ats = SchemeSpec::ats(st.default_cfg);
  const MeanStepEstimate est = mean_step_study(ats, st.system, st.default_env, 1, 1.0, 9);
  BrownianPath path(derive_seed(9, 0), 1);
  const Trajectory traj = simulate(ats, st.system, st.default_env, path, 1.0);
  EXPECT_DOUBLE_EQ(est.mean_step, mean_step(traj));
  EXPECT_DOUBLE_EQ(est.backstop_fraction, backstop_fraction(traj));
}

TEST(MomentProbe, BoundedSystemHasBoundedMoments) {
  SdeSystem ou;
  ou.drift = [](const Vector& x, Vector& out) { out = -x; };
  ou.diffusion = [](const Vector&, Matrix& out) { out(0, 0) = 1.0; };
  ou.initial_state = Vector::Constant(1, 0.0);
  const GrowthEnvelope env = GrowthEnvelope::power_law(1.0, 1.0, 1.0, 2.0);
  const SchemeSpec ats = SchemeSpec::ats(AdaptiveConfig{0x1p-12, 0x1p-6, Backstop::TruncatedEM});
  const MomentEstimate m = moment_probe(ats, ou, env, 400, 5.0, 3, 2.0, 1, 50);
  ASSERT_EQ(m.times.size(), 51u);
  EXPECT_EQ(m.means.front(), 0.0);
  EXPECT_EQ(m.diverged_fraction, 0.0);
  // Stationary variance 1/2; the maximum over the grid sits near it.
  EXPECT_NEAR(m.value, 0.5, 6.0 * m.stderr_value + 0.05);
  const MomentEstimate again = moment_probe(ats, ou, env, 400, 5.0, 3, 2.0, 2, 50);
  EXPECT_EQ(m.means, again.means);
}

TEST(ResolveThreads, AutoIsAtLeastOne) {
  EXPECT_GE(resolve_threads(0), 1u);
  EXPECT_EQ(resolve_threads(3), 3u);
}
