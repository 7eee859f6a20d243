#include "sdeadapt/experiment.hpp"

#include "sdeadapt/brownian.hpp"
#include "sdeadapt/problems.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace sdeadapt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Runs fn(i) for i in [0, n). Worker w takes i = w, w + W, ...; every result
/// is written to a slot owned by its index, so the output is schedule independent.
template <class Fn>
void for_each_path(std::size_t n, unsigned threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void require_study(std::size_t paths, double T) {
  if (paths == 0) throw std::invalid_argument("number of paths must be at least 1");
  if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("horizon must be positive");
}

struct LevelOutcome {
  double squared_error = 0.0;
  std::size_t steps = 0;
  std::size_t backstops = 0;
  bool diverged = false;
  bool solve_failed = false;
  double seconds = 0.0;
};

struct PathOutcome {
  bool reference_failed = false;
  double reference_seconds = 0.0;
};

Vector compute_reference(const SdeSystem& sys, const GrowthEnvelope& env, const ReferenceSpec& ref,
                         BrownianPath& path, double T) {
  if (ref.kind == ReferenceSpec::Kind::ClosedForm) return sys.exact_solution(path, T);
  return reference_solution(sys, env, path, T, ref.ref_delta_max, ref.delta_min, ref.newton);
}

SchemeSpec level_scheme(const SchemeSpec& base, double delta_max, double delta_min, double fixed_step) {
  SchemeSpec s = base;
  if (s.is_adaptive()) {
    s.adaptive.delta_max = delta_max;
    s.adaptive.delta_min = delta_min;
  } else {
    s.step = fixed_step;
  }
  return s;
}

RmseRow describe_row(const SchemeSpec& scheme, const GrowthEnvelope& env, const StudyConfig& study,
                     const std::string& problem, double delta_max, double delta_min) {
  RmseRow row;
  row.scheme = scheme.name();
  row.problem = problem;
  row.delta_max = delta_max;
  row.delta_min = delta_min;
  row.gamma = env.gamma;
  row.K = env.K;
  if (scheme.kind == SchemeKind::FsTem) {
    row.gamma = scheme.fs_tem_gamma();
    row.K = scheme.K.value_or(env.K);
  } else if (scheme.kind == SchemeKind::FsTaem) {
    row.gamma = scheme.fs_taem_gamma();
  }
  row.paths = study.paths;
  row.horizon = study.horizon;
  row.seed = study.seed;
  row.fixed_step = scheme.is_adaptive() ? std::numeric_limits<double>::quiet_NaN() : scheme.step;
  return row;
}

}  // namespace

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

std::string ReferenceSpec::describe() const {
  if (kind == Kind::ClosedForm) return "closed-form";
  std::ostringstream os;
  os.precision(17);
  os << "as-bem(delta_max=" << ref_delta_max << ",delta_min=" << delta_min << ")";
  return os.str();
}

ConvergenceReport convergence_study(const SchemeSpec& scheme, const SdeSystem& sys,
                                    const GrowthEnvelope& env, const std::vector<double>& ladder,
                                    double delta_min, const StudyConfig& study,
                                    const std::string& problem) {
  require_study(study.paths, study.horizon);
  if (ladder.empty()) throw std::invalid_argument("delta_max ladder is empty");
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    if (!(ladder[k] > 0.0) || !std::isfinite(ladder[k])) {
      throw std::invalid_argument("ladder entries must be positive");
    }
    if (k > 0 && !(ladder[k] < ladder[k - 1])) {
      throw std::invalid_argument("ladder must be strictly decreasing");
    }
    if (scheme.is_adaptive() && ladder[k] < delta_min) {
      throw std::invalid_argument("ladder entries must be at least delta_min");
    }
  }
  if (study.reference.kind == ReferenceSpec::Kind::ClosedForm && !sys.exact_solution) {
    throw ConfigurationError("closed-form reference requested for a system without one");
  }

  const std::size_t M = study.paths;
  const std::size_t L = ladder.size();
  const double T = study.horizon;

  std::vector<double> fixed_steps(L);
  for (std::size_t k = 0; k < L; ++k) fixed_steps[k] = ladder[k];
  if (!scheme.is_adaptive() && study.match_adaptive_step) {
    AdaptiveConfig paired = scheme.adaptive;
    paired.backstop = Backstop::TruncatedEM;
    for (std::size_t k = 0; k < L; ++k) {
      paired.delta_max = ladder[k];
      paired.delta_min = delta_min;
      fixed_steps[k] = mean_step_study(SchemeSpec::ats(paired), sys, env, M, T, study.seed,
                                       study.threads).mean_step;
    }
  }

  std::vector<SchemeSpec> levels;
  levels.reserve(L);
  for (std::size_t k = 0; k < L; ++k) {
    levels.push_back(level_scheme(scheme, ladder[k], delta_min, fixed_steps[k]));
    levels.back().validate();
  }

  // Discarded warm-up so the first timed path does not pay cold caches.
  {
    BrownianPath warm(derive_seed(study.seed, 0), sys.noise_dim);
    try {
      run_scheme(levels.front(), sys, env, warm, T);
    } catch (const NumericError&) {
    }
  }

  std::vector<PathOutcome> per_path(M);
  std::vector<LevelOutcome> per_level(M * L);
  for_each_path(M, study.threads, [&](std::size_t i) {
    BrownianPath path(derive_seed(study.seed, i), sys.noise_dim);
    PathOutcome& po = per_path[i];
    Vector reference;
    const auto ref_start = Clock::now();
    try {
      reference = compute_reference(sys, env, study.reference, path, T);
      if (!reference.allFinite()) po.reference_failed = true;
    } catch (const NumericError&) {
      po.reference_failed = true;
    }
    po.reference_seconds = seconds_since(ref_start);
    if (po.reference_failed) return;
    for (std::size_t k = 0; k < L; ++k) {
      LevelOutcome& out = per_level[i * L + k];
      const auto start = Clock::now();
      try {
        const RunSummary s = run_scheme(levels[k], sys, env, path, T);
        out.steps = s.steps;
        out.backstops = s.backstop_steps;
        out.diverged = s.diverged;
        if (!s.diverged) out.squared_error = (s.terminal_state - reference).squaredNorm();
      } catch (const ImplicitSolveError&) {
        out.diverged = true;
        out.solve_failed = true;
      }
      out.seconds = seconds_since(start);
    }
  });

  ConvergenceReport report;
  std::size_t reference_failures = 0;
  double reference_seconds = 0.0;
  for (const PathOutcome& po : per_path) {
    if (po.reference_failed) ++reference_failures;
    reference_seconds += po.reference_seconds;
  }
  if (reference_failures > 0) {
    report.warnings.push_back(std::to_string(reference_failures) +
                              " path(s) excluded: reference solution failed");
  }

  for (std::size_t k = 0; k < L; ++k) {
    RmseRow row = describe_row(levels[k], env, study, problem, ladder[k], delta_min);
    double sum_e2 = 0.0;
    double sum_e4 = 0.0;
    double seconds = 0.0;
    std::size_t used = 0;
    std::size_t diverged = 0;
    std::size_t solve_failures = 0;
    std::size_t total_steps = 0;
    std::size_t total_backstops = 0;
    std::size_t completed = 0;
    for (std::size_t i = 0; i < M; ++i) {
      if (per_path[i].reference_failed) continue;
      const LevelOutcome& out = per_level[i * L + k];
      seconds += out.seconds;
      if (out.diverged) {
        ++diverged;
        if (out.solve_failed) ++solve_failures;
        continue;
      }
      ++completed;
      total_steps += out.steps;
      total_backstops += out.backstops;
      sum_e2 += out.squared_error;
      sum_e4 += out.squared_error * out.squared_error;
      ++used;
    }
    if (used > 0) {
      const double n = static_cast<double>(used);
      const double mean = sum_e2 / n;
      row.rmse = std::sqrt(mean);
      if (used > 1 && mean > 0.0) {
        const double var = std::max(0.0, (sum_e4 - n * mean * mean) / (n - 1.0));
        row.rmse_stderr = std::sqrt(var / n) / (2.0 * row.rmse);
      }
    } else {
      row.rmse = std::numeric_limits<double>::quiet_NaN();
      row.rmse_stderr = std::numeric_limits<double>::quiet_NaN();
      row.warnings.push_back("no usable paths");
    }
    if (completed > 0) {
      row.mean_steps_per_path = static_cast<double>(total_steps) / static_cast<double>(completed);
      row.mean_step = T / row.mean_steps_per_path;
      row.backstop_fraction =
          total_steps == 0 ? 0.0
                           : static_cast<double>(total_backstops) / static_cast<double>(total_steps);
    } else {
      row.mean_steps_per_path = 0.0;
      row.mean_step = std::numeric_limits<double>::quiet_NaN();
    }
    row.diverged_fraction =
        static_cast<double>(diverged + reference_failures) / static_cast<double>(M);
    if (solve_failures > 0) {
      row.warnings.push_back(std::to_string(solve_failures) + " path(s) with implicit-solve failure");
    }
    if (reference_failures > 0) row.warnings.push_back(report.warnings.front());
    row.runtime_seconds = seconds;
    row.total_runtime_seconds = seconds + reference_seconds;
    report.rows.push_back(std::move(row));
  }

  report.fit = fit_convergence(report.rows, &report.warnings);
  return report;
}

RmseRow rmse_study(const SchemeSpec& scheme, const SdeSystem& sys, const GrowthEnvelope& env,
                   const StudyConfig& study, const std::string& problem) {
  const double delta_max = scheme.is_adaptive() ? scheme.adaptive.delta_max : scheme.step;
  const double delta_min = scheme.is_adaptive() ? scheme.adaptive.delta_min : study.reference.delta_min;
  ConvergenceReport r = convergence_study(scheme, sys, env, {delta_max}, delta_min, study, problem);
  RmseRow row = std::move(r.rows.front());
  return row;
}

LinearFit fit_convergence(const std::vector<RmseRow>& rows, std::vector<std::string>* warnings) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const RmseRow& row : rows) {
    if (!(row.rmse > 0.0) || !std::isfinite(row.rmse)) {
      if (warnings) warnings->push_back("row delta_max=" + std::to_string(row.delta_max) +
                                        " excluded from fit: rmse is zero or undefined");
      continue;
    }
    if (row.diverged_fraction > 0.01) {
      if (warnings) warnings->push_back("row delta_max=" + std::to_string(row.delta_max) +
                                        " excluded from fit: diverged fraction above 1%");
      continue;
    }
    xs.push_back(std::log2(row.delta_max));
    ys.push_back(std::log2(row.rmse));
  }
  LinearFit fit;
  fit.points = xs.size();
  if (xs.size() < 2) {
    if (warnings && !rows.empty()) warnings->push_back("fewer than two usable rows; no fit");
    return fit;
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0) {
    if (warnings) warnings->push_back("all usable rows share one delta_max; no fit");
    return fit;
  }
  fit.fitted = true;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
    ss_res += r * r;
  }
  fit.r_squared = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
  return fit;
}

double mean_step(const Trajectory& traj) {
  if (traj.steps.empty()) throw std::invalid_argument("trajectory has no steps");
  return traj.horizon() / static_cast<double>(traj.steps.size());
}

double backstop_fraction(const Trajectory& traj) {
  if (traj.backstop_flags.empty()) throw std::invalid_argument("trajectory has no steps");
  const auto hits = std::count(traj.backstop_flags.begin(), traj.backstop_flags.end(), true);
  return static_cast<double>(hits) / static_cast<double>(traj.backstop_flags.size());
}

MeanStepEstimate mean_step_study(const SchemeSpec& scheme, const SdeSystem& sys,
                                 const GrowthEnvelope& env, std::size_t paths, double T,
                                 std::uint64_t seed, unsigned threads) {
  require_study(paths, T);
  scheme.validate();
  std::vector<RunSummary> runs(paths);
  std::vector<char> failed(paths, 0);
  for_each_path(paths, threads, [&](std::size_t i) {
    BrownianPath path(derive_seed(seed, i), sys.noise_dim);
    RunOptions opts;
    opts.release_history = true;
    try {
      runs[i] = run_scheme(scheme, sys, env, path, T, opts);
    } catch (const ImplicitSolveError&) {
      failed[i] = 1;
    }
  });
  MeanStepEstimate est;
  std::size_t completed = 0;
  std::size_t diverged = 0;
  std::size_t steps = 0;
  std::size_t backstops = 0;
  for (std::size_t i = 0; i < paths; ++i) {
    if (failed[i] || runs[i].diverged) {
      ++diverged;
      continue;
    }
    ++completed;
    steps += runs[i].steps;
    backstops += runs[i].backstop_steps;
  }
  est.diverged_fraction = static_cast<double>(diverged) / static_cast<double>(paths);
  if (completed == 0) {
    est.mean_step = std::numeric_limits<double>::quiet_NaN();
    return est;
  }
  est.mean_steps_per_path = static_cast<double>(steps) / static_cast<double>(completed);
  est.mean_step = T / est.mean_steps_per_path;
  est.backstop_fraction = steps == 0 ? 0.0 : static_cast<double>(backstops) / static_cast<double>(steps);
  return est;
}

MomentEstimate moment_probe(const SchemeSpec& scheme, const SdeSystem& sys,
                            const GrowthEnvelope& env, std::size_t paths, double T,
                            std::uint64_t seed, double p, unsigned threads,
                            std::size_t observations) {
  require_study(paths, T);
  if (!(p >= 2.0) || !std::isfinite(p)) throw std::invalid_argument("moment order must be >= 2");
  if (observations == 0) throw std::invalid_argument("need at least one observation interval");
  scheme.validate();

  const std::size_t G = observations + 1;
  std::vector<double> grid(G);
  for (std::size_t k = 0; k < G; ++k) {
    grid[k] = T * static_cast<double>(k) / static_cast<double>(observations);
  }
  grid.back() = T;

  auto power = [p](const Vector& x) {
    return p == 2.0 ? x.squaredNorm() : std::pow(x.norm(), p);
  };

  std::vector<double> values(paths * G, 0.0);
  std::vector<char> diverged(paths, 0);
  for_each_path(paths, threads, [&](std::size_t i) {
    BrownianPath path(derive_seed(seed, i), sys.noise_dim);
    double* row = values.data() + i * G;
    std::size_t next = 0;
    Vector prev;
    RunOptions opts;
    opts.release_history = true;
    // Ybar(t_k) is the last grid value at or before t_k.
    opts.observer = [&](double t, const Vector& x) {
      while (next < G && grid[next] < t) row[next++] = power(prev);
      prev = x;
    };
    try {
      const RunSummary s = run_scheme(scheme, sys, env, path, T, opts);
      if (s.diverged) {
        diverged[i] = 1;
        return;
      }
    } catch (const ImplicitSolveError&) {
      diverged[i] = 1;
      return;
    }
    while (next < G) row[next++] = power(prev);
  });

  MomentEstimate est;
  est.times = grid;
  est.means.assign(G, 0.0);
  std::size_t used = 0;
  for (std::size_t i = 0; i < paths; ++i) {
    if (diverged[i]) continue;
    ++used;
    for (std::size_t k = 0; k < G; ++k) est.means[k] += values[i * G + k];
  }
  est.diverged_fraction =
      static_cast<double>(paths - used) / static_cast<double>(paths);
  if (used == 0) {
    est.value = std::numeric_limits<double>::quiet_NaN();
    est.stderr_value = std::numeric_limits<double>::quiet_NaN();
    return est;
  }
  const double n = static_cast<double>(used);
  for (double& m : est.means) m /= n;
  const auto best = static_cast<std::size_t>(
      std::max_element(est.means.begin(), est.means.end()) - est.means.begin());
  est.value = est.means[best];
  est.at_time = grid[best];
  if (used > 1) {
    double ss = 0.0;
    for (std::size_t i = 0; i < paths; ++i) {
      if (diverged[i]) continue;
      const double d = values[i * G + best] - est.value;
      ss += d * d;
    }
    est.stderr_value = std::sqrt(ss / (n - 1.0) / n);
  }
  return est;
}

double diverged_fraction(const SchemeSpec& scheme, const SdeSystem& sys, const GrowthEnvelope& env,
                         std::size_t paths, double T, std::uint64_t seed, double guard,
                         unsigned threads) {
  require_study(paths, T);
  if (!(guard > 0.0)) throw std::invalid_argument("divergence guard must be positive");
  scheme.validate();
  std::vector<char> diverged(paths, 0);
  for_each_path(paths, threads, [&](std::size_t i) {
    BrownianPath path(derive_seed(seed, i), sys.noise_dim);
    RunOptions opts;
    opts.release_history = true;
    opts.divergence_guard = guard;
    try {
      diverged[i] = run_scheme(scheme, sys, env, path, T, opts).diverged ? 1 : 0;
    } catch (const ImplicitSolveError&) {
      diverged[i] = 1;
    }
  });
  const auto count = std::count(diverged.begin(), diverged.end(), char{1});
  return static_cast<double>(count) / static_cast<double>(paths);
}

double divergence_probe(const SdeSystem& sys, double h, std::size_t paths, double T,
                        std::uint64_t seed, double guard, unsigned threads) {
  // EM ignores the envelope; any valid one satisfies the driver's signature.
  const GrowthEnvelope unused = GrowthEnvelope::power_law(1.0, 1.0, 1.0, 1.0);
  return diverged_fraction(SchemeSpec::fixed(SchemeKind::Em, h), sys, unused, paths, T, seed,
                           guard, threads);
}

}  // namespace sdeadapt
