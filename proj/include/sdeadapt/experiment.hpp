#pragma once

#include "sdeadapt/coefficients.hpp"
#include "sdeadapt/schemes.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sdeadapt {

/// How the "exact" terminal value is obtained on each path.
struct ReferenceSpec {
  enum class Kind { ClosedForm, AsBem };
  Kind kind = Kind::ClosedForm;
  double ref_delta_max = 0x1p-12;
  /// Step floor of the AS-BEM reference.
  double delta_min = 0x1p-20;
  NewtonConfig newton;

  static ReferenceSpec closed_form() { return {}; }
  static ReferenceSpec as_bem(double ref_delta_max, double delta_min) {
    ReferenceSpec r;
    r.kind = Kind::AsBem;
    r.ref_delta_max = ref_delta_max;
    r.delta_min = delta_min;
    return r;
  }
  std::string describe() const;
};

struct StudyConfig {
  std::size_t paths = 1000;
  double horizon = 1.0;
  std::uint64_t seed = 42;
  ReferenceSpec reference;
  /// Worker threads; 0 picks the hardware concurrency. Results do not depend on it.
  unsigned threads = 1;
  /// Fixed-step schemes take the mean step of the matching ATS-TEM run
  /// instead of delta_max (the equal-cost comparison).
  bool match_adaptive_step = false;
};

struct RmseRow {
  std::string scheme;
  std::string problem;
  double delta_max = 0.0;
  double delta_min = 0.0;
  double gamma = 0.0;
  double K = 0.0;
  std::size_t paths = 0;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  double rmse = 0.0;
  double rmse_stderr = 0.0;
  double mean_step = 0.0;
  double mean_steps_per_path = 0.0;
  double backstop_fraction = 0.0;
  double diverged_fraction = 0.0;
  /// Wall-clock time spent in the scheme runs of this row.
  double runtime_seconds = 0.0;
  /// Scheme time plus the reference generation shared by the study.
  double total_runtime_seconds = 0.0;
  /// Step actually used by fixed-step schemes (delta_max or the matched mean step).
  double fixed_step = 0.0;
  std::vector<std::string> warnings;
};

struct LinearFit {
  bool fitted = false;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};

struct ConvergenceReport {
  std::vector<RmseRow> rows;
  LinearFit fit;
  std::vector<std::string> warnings;
};

/// Root mean square terminal error of `scheme` against the reference over
/// study.paths paths. Path i uses seed derive_seed(study.seed, i); the
/// reference and the scheme observe the same Brownian path.
RmseRow rmse_study(const SchemeSpec& scheme, const SdeSystem& sys, const GrowthEnvelope& env,
                   const StudyConfig& study, const std::string& problem = "");

/// One RmseRow per delta_max in `ladder` (strictly decreasing, all >= delta_min),
/// then a least-squares line through (log2 delta_max, log2 rmse). The reference
/// is computed once per path and shared by all rows.
ConvergenceReport convergence_study(const SchemeSpec& scheme, const SdeSystem& sys,
                                    const GrowthEnvelope& env, const std::vector<double>& ladder,
                                    double delta_min, const StudyConfig& study,
                                    const std::string& problem = "");

/// OLS fit of log2(rmse) on log2(delta_max). Rows with rmse = 0 or with more
/// than 1% diverged paths are skipped (recorded in `warnings`); fewer than two
/// usable rows leave fit.fitted false.
LinearFit fit_convergence(const std::vector<RmseRow>& rows, std::vector<std::string>* warnings);

/// T / number of steps.
double mean_step(const Trajectory& traj);

/// Fraction of steps taken on the backstop branch.
double backstop_fraction(const Trajectory& traj);

struct MeanStepEstimate {
  double mean_step = 0.0;  // T / mean number of steps
  double mean_steps_per_path = 0.0;
  double backstop_fraction = 0.0;
  double diverged_fraction = 0.0;
};

/// Mean step of an adaptive scheme over M paths (memory-bounded, forward only).
MeanStepEstimate mean_step_study(const SchemeSpec& scheme, const SdeSystem& sys,
                                 const GrowthEnvelope& env, std::size_t paths, double T,
                                 std::uint64_t seed, unsigned threads = 1);

struct MomentEstimate {
  /// max_k of the Monte Carlo mean of |Ybar(t_k)|^p over non-diverged paths.
  double value = 0.0;
  double stderr_value = 0.0;
  double at_time = 0.0;
  double diverged_fraction = 0.0;
  std::vector<double> times;
  std::vector<double> means;
};

/// E|Ybar(t)|^p on a uniform grid of `observations` + 1 times in [0, T], where
/// Ybar is the piecewise-constant interpolant of the scheme's grid values.
MomentEstimate moment_probe(const SchemeSpec& scheme, const SdeSystem& sys,
                            const GrowthEnvelope& env, std::size_t paths, double T,
                            std::uint64_t seed, double p, unsigned threads = 1,
                            std::size_t observations = 100);

/// Fraction of paths on which `scheme` leaves the guard ball (or produces a
/// non-finite state) before T.
double diverged_fraction(const SchemeSpec& scheme, const SdeSystem& sys, const GrowthEnvelope& env,
                         std::size_t paths, double T, std::uint64_t seed,
                         double guard = kDivergenceGuard, unsigned threads = 1);

/// diverged_fraction for classical Euler-Maruyama with fixed step h.
double divergence_probe(const SdeSystem& sys, double h, std::size_t paths, double T,
                        std::uint64_t seed, double guard = kDivergenceGuard,
                        unsigned threads = 1);

/// Resolves a requested worker count (0 = hardware concurrency, at least 1).
unsigned resolve_threads(unsigned requested);

}  // namespace sdeadapt
