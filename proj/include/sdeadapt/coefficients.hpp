#pragma once

#include "sdeadapt/types.hpp"

#include <functional>
#include <optional>
#include <string>

namespace sdeadapt {

class BrownianPath;

/// Growth envelope phi: a strictly increasing function with phi >= 1 that
/// dominates |f(x)|/(1+|x|) and |g(x)|^2/(1+|x|)^2. K and gamma fix the
/// truncation radius phi^{-1}(K * delta^{-gamma}).
struct GrowthEnvelope {
  std::function<double(double)> phi;
  /// Closed-form inverse; when empty, inverse() falls back to bisection.
  std::function<double(double)> phi_inverse;
  double K = 1.0;
  double gamma = 1.0 / 3.0;
  std::string description;

  double operator()(double r) const { return phi(r); }
  double inverse(double v) const;

  /// phi(r) = offset + scale * r^power, with its closed-form inverse.
  static GrowthEnvelope power_law(double offset, double scale, double power, double K,
                                  double gamma = 1.0 / 3.0);
};

enum class Backstop { TruncatedEM, TamedModel2, TamedModel1 };

std::string to_string(Backstop b);

/// Step bounds of the adaptive scheme: delta_min (floor) <= delta(x) <= delta_max.
struct AdaptiveConfig {
  double delta_min = 0x1p-20;
  double delta_max = 0x1p-12;
  Backstop backstop = Backstop::TruncatedEM;

  double ratio() const { return delta_max / delta_min; }
  /// Throws std::invalid_argument unless 0 < delta_min <= delta_max <= 1.
  void validate() const;
};

/// Khasminskii-type bound <x, f(x)> + (p-1)/2 |g(x)|^2 <= alpha (1 + |x|^2).
struct KhasminskiiBound {
  double alpha = 0.0;
  double p = 2.0;
};

using DriftFn = std::function<void(const Vector& x, Vector& out)>;
using DiffusionFn = std::function<void(const Vector& x, Matrix& out)>;
using ExactSolutionFn = std::function<Vector(BrownianPath& path, double t)>;

/// dX = f(X) dt + g(X) dW with X in R^d and W in R^m.
struct SdeSystem {
  std::size_t state_dim = 1;
  std::size_t noise_dim = 1;
  DriftFn drift;
  DiffusionFn diffusion;
  Vector initial_state;
  /// Growth exponent l of the one-sided polynomial Lipschitz bound.
  double poly_degree = 0.0;
  GrowthEnvelope envelope;
  ExactSolutionFn exact_solution;
  std::optional<KhasminskiiBound> khasminskii;

  Vector f(const Vector& x) const;
  Matrix g(const Vector& x) const;
};

struct Coefficients {
  Vector drift;
  Matrix diffusion;
};

/// delta(x) = max(delta_min, delta_max / phi(|x|)).
double adaptive_step(const GrowthEnvelope& env, const AdaptiveConfig& cfg, const Vector& x);

/// True when the backstop branch is active, i.e. delta_max / phi(|x|) <= delta_min.
bool is_backstop(const GrowthEnvelope& env, const AdaptiveConfig& cfg, const Vector& x);

/// phi^{-1}(K delta_min^{-gamma}); throws ConfigurationError when the level is
/// below phi(0).
double truncation_radius(const GrowthEnvelope& env, double delta_min);

/// Radial projection of x onto the ball of radius truncation_radius(env, delta_min).
Vector truncate(const GrowthEnvelope& env, double delta_min, const Vector& x);

/// Model 2 taming: f and g divided by 1 + delta_min^{1/2} |x|^l.
Coefficients tame_model2(const SdeSystem& sys, double delta_min, const Vector& x);

/// Model 1 taming: f and g divided by 1 + delta_min^{1/2} (|f(x)| + |g(x)|^2).
Coefficients tame_model1(const SdeSystem& sys, double delta_min, const Vector& x);

/// (F, G) used by the adaptive scheme: raw coefficients off the floor, the
/// configured backstop coefficients on it.
Coefficients effective_coefficients(const SdeSystem& sys, const GrowthEnvelope& env,
                                    const AdaptiveConfig& cfg, const Vector& x);

/// The r >= 0 with |phi(r) - v| <= 1e-10 max(1, v), via bracket doubling
/// and bisection. Throws std::domain_error for v < phi(0), NumericError if no
/// bracket is found within 2^10 doublings.
double invert_envelope_numeric(const std::function<double(double)>& phi, double v);

/// Allocation-free evaluator of the effective coefficients, for step loops.
/// Caches the truncation radius and owns scratch storage.
class EffectiveCoefficients {
 public:
  EffectiveCoefficients(const SdeSystem& sys, const GrowthEnvelope& env,
                        const AdaptiveConfig& cfg);

  /// Writes F(x), G(x) and returns whether the backstop branch was used.
  /// `norm` is |x|, supplied by the caller who already computed it.
  bool evaluate(const Vector& x, double norm, Vector& drift, Matrix& diffusion);

  /// As evaluate, with the branch already decided by the caller.
  void evaluate_on_branch(const Vector& x, double norm, bool backstop, Vector& drift,
                          Matrix& diffusion);

  /// Step for a state of norm |x|, and the matching backstop indicator.
  double step(double norm, bool& backstop) const;

 private:
  const SdeSystem& sys_;
  const GrowthEnvelope& env_;
  AdaptiveConfig cfg_;
  double radius_ = 0.0;
  double sqrt_delta_min_ = 0.0;
  Vector scratch_;
};

}  // namespace sdeadapt
