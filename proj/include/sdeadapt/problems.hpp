#pragma once

#include "sdeadapt/brownian.hpp"
#include "sdeadapt/coefficients.hpp"
#include "sdeadapt/schemes.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sdeadapt {

/// Where a problem's states live. Envelope domination is asserted over this set.
enum class StateDomain { Whole, NonNegative };

struct ProvenanceNote {
  std::string constant;
  std::string value;
  std::string source;
};

struct ProblemCatalogEntry {
  std::string name;
  SdeSystem system;
  GrowthEnvelope default_env;
  AdaptiveConfig default_cfg;
  double default_horizon = 1.0;
  /// C_f with |f(x)| <= C_f (1 + |x|^{l+1}); bounds the tamed drift.
  double drift_growth_constant = 0.0;
  StateDomain domain = StateDomain::Whole;
  std::vector<ProvenanceNote> notes;
};

/// dX = (X-1)(5-X)(X-50) dt + 16 X dW, bistable at 1 and 50.
ProblemCatalogEntry stiff_cubic();

/// dX = [(a1 + a2^2/2) X - X^3] dt + a2 X dW with a1 = -3/2, a2 = 1.
/// x0 = 1 for convergence studies, x0 = 2 for the EM divergence probe.
ProblemCatalogEntry ginzburg_landau(double x0 = 1.0);

enum class HestonEnvelope {
  Linear,     // phi(r) = 1 + 2r, K = 3
  Quadratic,  // phi(r) = 1 + r^2, K = 3
};

/// dX = kappa X (theta - X) dt + sigma X^{3/2} dW, diffusion extended oddly to x < 0.
ProblemCatalogEntry heston_32(HestonEnvelope envelope = HestonEnvelope::Linear);

/// Stochastic Lorenz system with multiplicative noise, d = m = 3.
ProblemCatalogEntry lorenz();

/// "stiff-cubic", "ginzburg-landau", "heston-3-2", "lorenz". Throws
/// std::invalid_argument otherwise.
ProblemCatalogEntry problem_by_name(const std::string& name);
const std::vector<std::string>& problem_names();

struct GlParameters {
  double a1 = -1.5;
  double a2 = 1.0;
  double x0 = 1.0;
};

inline constexpr double kDefaultQuadStep = 0x1p-14;

/// Closed-form Ginzburg-Landau solution on `path`; the time integral in the
/// denominator uses the trapezoidal rule with spacing quad_step.
double gl_exact(BrownianPath& path, double t, const GlParameters& params,
                double quad_step = kDefaultQuadStep);

inline constexpr double kDefaultReferenceDeltaMax = 0x1p-12;

/// Terminal state of backward EM on the adaptive step sequence with
/// delta_max = ref_delta_max, used as the reference solution when no closed
/// form exists.
Vector reference_solution(const SdeSystem& sys, const GrowthEnvelope& env, BrownianPath& path,
                          double T, double ref_delta_max, double delta_min,
                          const NewtonConfig& newton = {});

struct DominationReport {
  bool holds = true;
  /// max over samples of ratio(x) / phi(|x|), where ratio is the larger of
  /// |f(x)|/(1+|x|) and |g(x)|^2/(1+|x|)^2.
  double worst_ratio = 0.0;
  Vector worst_state;
};

/// Samples `samples` states with |x| <= radius (uniform direction, radius
/// spread over several decades) and checks phi dominance.
DominationReport check_envelope_domination(const SdeSystem& sys, const GrowthEnvelope& env,
                                           double radius, std::size_t samples,
                                           std::uint64_t seed,
                                           StateDomain domain = StateDomain::Whole);

/// Draws a state of norm at most `radius` using the same scheme as above.
Vector sample_state(std::uint64_t seed, std::size_t index, std::size_t dim, double radius,
                    StateDomain domain);

}  // namespace sdeadapt
