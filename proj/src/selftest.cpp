#include "sdeadapt/selftest.hpp"

#include "sdeadapt/brownian.hpp"
#include "sdeadapt/problems.hpp"
#include "sdeadapt/schemes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace sdeadapt {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

CheckResult check_path_cache(std::uint64_t seed) {
  CheckResult r{"brownian-cache-and-additivity", true, ""};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  BrownianPath path(seed, 2);
  std::vector<double> times(500);
  for (double& t : times) t = unif(rng);
  for (double t : times) path.value_at(t);
  double worst = 0.0;
  std::vector<double> sorted = times;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k + 2 < sorted.size(); ++k) {
    const Vector a = path.increment(sorted[k], sorted[k + 1]);
    const Vector b = path.increment(sorted[k + 1], sorted[k + 2]);
    const Vector c = path.increment(sorted[k], sorted[k + 2]);
    worst = std::max(worst, (a + b - c).cwiseAbs().maxCoeff());
  }
  if (worst > 1e-14) {
    r.passed = false;
    r.detail = "increment additivity off by " + fmt(worst);
  }
  return r;
}

CheckResult check_cache_stability(std::uint64_t seed) {
  CheckResult r{"brownian-requery-stability", true, ""};
  std::mt19937_64 rng(seed ^ 0x9e37);
  std::uniform_real_distribution<double> unif(0.0, 2.0);
  BrownianPath path(seed, 1);
  std::vector<double> times(400);
  for (double& t : times) t = unif(rng);
  std::vector<double> first;
  for (double t : times) first.push_back(path.value_at(t)[0]);
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t k : order) {
    if (path.value_at(times[k])[0] != first[k]) {
      r.passed = false;
      r.detail = "value at t=" + fmt(times[k]) + " changed after refinement";
      break;
    }
  }
  return r;
}

CheckResult check_step_law(std::uint64_t seed) {
  CheckResult r{"step-law-and-backstop-flags", true, ""};
  const ProblemCatalogEntry stiff = stiff_cubic();
  AdaptiveConfig cfg = stiff.default_cfg;
  cfg.delta_min = 0x1p-14;
  cfg.delta_max = 0x1p-2;
  BrownianPath path(derive_seed(seed, 1), 1);
  const Trajectory traj = simulate(SchemeSpec::ats(cfg), stiff.system, stiff.default_env, path, 1.0);
  for (std::size_t n = 0; n < traj.step_count(); ++n) {
    const Vector& x = traj.states[n];
    const bool flag = is_backstop(stiff.default_env, cfg, x);
    if (flag != traj.backstop_flags[n]) {
      r.passed = false;
      r.detail = "backstop flag mismatch at step " + std::to_string(n);
      return r;
    }
    if (n + 1 < traj.step_count() && traj.steps[n] != adaptive_step(stiff.default_env, cfg, x)) {
      r.passed = false;
      r.detail = "step mismatch at step " + std::to_string(n);
      return r;
    }
  }
  return r;
}

CheckResult check_degeneration(std::uint64_t seed) {
  CheckResult r{"degenerates-to-fixed-step-truncated-em", true, ""};
  const ProblemCatalogEntry gl = ginzburg_landau(2.0);
  AdaptiveConfig cfg;
  cfg.delta_min = cfg.delta_max = 0x1p-8;
  const double T = 1000.0 * cfg.delta_max;
  BrownianPath path(derive_seed(seed, 2), 1);
  const Trajectory traj = simulate(SchemeSpec::ats(cfg), gl.system, gl.default_env, path, T);
  Vector x = gl.system.initial_state;
  double worst = 0.0;
  for (std::size_t n = 0; n < traj.step_count(); ++n) {
    const double t0 = traj.times[n];
    const double t1 = traj.times[n + 1];
    const Vector y = truncate(gl.default_env, cfg.delta_min, x);
    x = x + gl.system.f(y) * (t1 - t0) + gl.system.g(y) * path.increment(t0, t1);
    const double scale = std::max(1.0, x.norm());
    worst = std::max(worst, (x - traj.states[n + 1]).norm() / scale);
  }
  if (traj.step_count() != 1000 || worst > 1e-12) {
    r.passed = false;
    r.detail = "steps=" + std::to_string(traj.step_count()) + " worst relative error " + fmt(worst);
  }
  return r;
}

CheckResult check_bounds(std::uint64_t seed) {
  CheckResult r{"step-and-truncation-bounds", true, ""};
  for (const std::string& name : problem_names()) {
    const ProblemCatalogEntry e = problem_by_name(name);
    const double radius = truncation_radius(e.default_env, e.default_cfg.delta_min);
    for (std::size_t i = 0; i < 1000; ++i) {
      const Vector x = sample_state(seed, i, e.system.state_dim, 1e3, e.domain);
      const double d = adaptive_step(e.default_env, e.default_cfg, x);
      const Vector p = truncate(e.default_env, e.default_cfg.delta_min, x);
      const Vector pp = truncate(e.default_env, e.default_cfg.delta_min, p);
      if (d < e.default_cfg.delta_min || d > e.default_cfg.delta_max ||
          p.norm() > radius * (1.0 + 1e-15) || (pp - p).norm() > 4e-16 * std::max(1.0, p.norm())) {
        r.passed = false;
        r.detail = name + ": bound violated at sample " + std::to_string(i);
        return r;
      }
    }
  }
  return r;
}

CheckResult check_linear_implicit() {
  CheckResult r{"implicit-step-linear-closed-form", true, ""};
  SdeSystem sys;
  const double a = -3.0;
  const double b = 0.7;
  sys.drift = [a](const Vector& x, Vector& out) { out = a * x; };
  sys.diffusion = [b](const Vector& x, Matrix& out) { out.resize(1, 1); out(0, 0) = b * x[0]; };
  sys.initial_state = Vector::Constant(1, 1.3);
  const Vector x = sys.initial_state;
  Vector dw(1);
  dw[0] = 0.21;
  const double h = 0.125;
  const ImplicitSolution s = bem_update(sys, x, h, dw, {});
  const double exact = (x[0] + b * x[0] * dw[0]) / (1.0 - a * h);
  const double err = std::abs(s.state[0] - exact);
  if (err > 1e-10 || s.residual > 1e-12) {
    r.passed = false;
    r.detail = "error " + fmt(err) + " residual " + fmt(s.residual);
  }
  return r;
}

CheckResult check_reproducible(std::uint64_t seed) {
  CheckResult r{"bitwise-reproducible-trajectories", true, ""};
  const ProblemCatalogEntry lz = lorenz();
  AdaptiveConfig cfg = lz.default_cfg;
  BrownianPath a(derive_seed(seed, 3), 3);
  BrownianPath b(derive_seed(seed, 3), 3);
  const Trajectory ta = simulate(SchemeSpec::ats(cfg), lz.system, lz.default_env, a, 0.05);
  const Trajectory tb = simulate(SchemeSpec::ats(cfg), lz.system, lz.default_env, b, 0.05);
  if (ta.step_count() != tb.step_count() || ta.terminal_state != tb.terminal_state) {
    r.passed = false;
    r.detail = "two runs with one seed differ";
  }
  return r;
}

}  // namespace

std::vector<CheckResult> run_selftest(std::uint64_t seed) {
  return {check_path_cache(seed),   check_cache_stability(seed), check_step_law(seed),
          check_degeneration(seed), check_bounds(seed),          check_linear_implicit(),
          check_reproducible(seed)};
}

}  // namespace sdeadapt
