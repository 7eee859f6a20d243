#pragma once

#include "sdeadapt/brownian.hpp"
#include "sdeadapt/coefficients.hpp"
#include "sdeadapt/types.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sdeadapt {

/// Settings of the drift-implicit solve.
struct NewtonConfig {
  double tolerance = 1e-12;
  int max_iterations = 50;
  /// Initial damping factor; halved while the residual grows.
  double damping = 1.0;

  void validate() const;
};

enum class SchemeKind {
  Ats,     // adaptive steps, backstop taken from AdaptiveConfig
  Em,      // classical Euler-Maruyama, fixed step
  FsTem,   // fixed-step truncated EM (projects the predicted state)
  FsTaem,  // fixed-step tamed EM
  FsBem,   // fixed-step backward EM
  AsBem,   // backward EM on the adaptive step sequence
};

/// Which one-step map to iterate, with its step configuration.
struct SchemeSpec {
  SchemeKind kind = SchemeKind::Ats;
  AdaptiveConfig adaptive;
  double step = 0x1p-8;
  /// FS-TEM truncation exponent or FS-TaEM taming exponent. Empty means the
  /// scheme default (1/3 for FS-TEM, 1/2 for FS-TaEM).
  std::optional<double> gamma;
  /// FS-TEM truncation constant; empty means envelope K.
  std::optional<double> K;
  NewtonConfig newton;

  static SchemeSpec ats(const AdaptiveConfig& cfg);
  static SchemeSpec as_bem(const AdaptiveConfig& cfg, const NewtonConfig& newton = {});
  static SchemeSpec fixed(SchemeKind kind, double step);

  bool is_adaptive() const { return kind == SchemeKind::Ats || kind == SchemeKind::AsBem; }
  double fs_tem_gamma() const { return gamma.value_or(1.0 / 3.0); }
  double fs_taem_gamma() const { return gamma.value_or(0.5); }
  /// Stable identifier: ats-tem, ats-tamed2, ats-tamed1, em, fs-tem, fs-taem, fs-bem, as-bem.
  std::string name() const;
  void validate() const;
};

/// Parses the identifiers produced by SchemeSpec::name(). Throws
/// std::invalid_argument for unknown names.
SchemeSpec scheme_from_name(const std::string& name);

struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<double> steps;
  std::vector<bool> backstop_flags;
  /// Final Newton/fixed-point residual per step; empty for explicit schemes.
  std::vector<double> residuals;
  Vector terminal_state;
  bool diverged = false;

  std::size_t step_count() const { return steps.size(); }
  double horizon() const { return times.empty() ? 0.0 : times.back(); }
};

struct StepResult {
  Vector state;
  double time = 0.0;
  bool used_backstop = false;
};

struct ImplicitSolution {
  Vector state;
  double residual = 0.0;
  int iterations = 0;
  bool used_fallback = false;
};

struct ImplicitStepResult {
  Vector state;
  double time = 0.0;
  double residual = 0.0;
  bool used_fallback = false;
};

// Updates with a given Brownian increment. The *_step functions below draw
// the increment from a path and call these.

/// x + F(x) h + G(x) dW with (F, G) the effective coefficients at x.
Vector ats_update(const SdeSystem& sys, const GrowthEnvelope& env, const AdaptiveConfig& cfg,
                  const Vector& x, double h, const Vector& dw);
Vector em_update(const SdeSystem& sys, const Vector& x, double h, const Vector& dw);
/// Predicts with raw coefficients, then projects onto the ball of radius
/// phi^{-1}(K h^{-gamma}).
Vector fs_tem_update(const SdeSystem& sys, const GrowthEnvelope& env, const Vector& x, double h,
                     const Vector& dw);
Vector fs_taem_update(const SdeSystem& sys, const Vector& x, double h, double gamma,
                      const Vector& dw);
/// Solves y = x + f(y) h + g(x) dW. Damped Newton with a central-difference
/// Jacobian; falls back to fixed-point iteration from the explicit predictor.
/// Throws ImplicitSolveError if both fail.
ImplicitSolution bem_update(const SdeSystem& sys, const Vector& x, double h, const Vector& dw,
                            const NewtonConfig& newton);

StepResult ats_step(const SdeSystem& sys, const GrowthEnvelope& env, const AdaptiveConfig& cfg,
                    const Vector& x, double t, BrownianPath& path);
StepResult em_step(const SdeSystem& sys, const Vector& x, double t, double h, BrownianPath& path);
StepResult fs_tem_step(const SdeSystem& sys, const GrowthEnvelope& env_fs, const Vector& x,
                       double t, double h, BrownianPath& path);
StepResult fs_taem_step(const SdeSystem& sys, const Vector& x, double t, double h, double gamma,
                        BrownianPath& path);
ImplicitStepResult bem_step(const SdeSystem& sys, const Vector& x, double t, double h,
                            BrownianPath& path, const NewtonConfig& newton = {});

inline constexpr double kDivergenceGuard = 1e300;

/// Per-step callback receiving (t_n, Y_n) for every grid point, including the
/// initial state and the terminal state at T.
using StepObserver = std::function<void(double t, const Vector& state)>;

struct RunOptions {
  /// Lets the driver release Brownian knots behind the current time. Only
  /// safe when nothing else will query earlier times on the same path.
  bool release_history = false;
  double divergence_guard = kDivergenceGuard;
  StepObserver observer;
};

struct RunSummary {
  Vector terminal_state;
  std::size_t steps = 0;
  std::size_t backstop_steps = 0;
  double max_residual = 0.0;
  bool diverged = false;
};

/// Iterates the one-step map of `scheme` from sys.initial_state up to T. The
/// final step is clamped to land on T; for adaptive schemes its coefficients
/// are those selected by the unclamped step's backstop indicator. A state that
/// is non-finite or exceeds the guard in norm stops the run and marks it
/// diverged.
Trajectory simulate(const SchemeSpec& scheme, const SdeSystem& sys, const GrowthEnvelope& env,
                    BrownianPath& path, double T);

/// As simulate, but keeps only summary statistics.
RunSummary run_scheme(const SchemeSpec& scheme, const SdeSystem& sys, const GrowthEnvelope& env,
                      BrownianPath& path, double T, const RunOptions& options = {});

}  // namespace sdeadapt
