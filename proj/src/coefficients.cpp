#include "sdeadapt/coefficients.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sdeadapt {

namespace {

void require_finite(const Vector& x, const char* where) {
  if (!x.allFinite()) throw std::invalid_argument(std::string(where) + ": non-finite state");
}

}  // namespace

double GrowthEnvelope::inverse(double v) const {
  if (phi_inverse) return phi_inverse(v);
  return invert_envelope_numeric(phi, v);
}

GrowthEnvelope GrowthEnvelope::power_law(double offset, double scale, double power, double K,
                                         double gamma) {
  if (!(scale > 0.0) || !(power > 0.0)) {
    throw std::invalid_argument("power_law envelope: scale and power must be positive");
  }
  if (offset < 1.0) throw std::invalid_argument("power_law envelope: phi(0) must be >= 1");
  GrowthEnvelope env;
  if (power == 1.0) {
    env.phi = [=](double r) { return offset + scale * r; };
  } else if (power == 2.0) {
    env.phi = [=](double r) { return offset + scale * (r * r); };
  } else {
    env.phi = [=](double r) { return offset + scale * std::pow(r, power); };
  }
  env.phi_inverse = [=](double v) {
    if (v < offset) throw std::domain_error("envelope inverse: value below phi(0)");
    return std::pow((v - offset) / scale, 1.0 / power);
  };
  env.K = K;
  env.gamma = gamma;
  std::ostringstream os;
  os << offset << " + " << scale << " r^" << power;
  env.description = os.str();
  return env;
}

std::string to_string(Backstop b) {
  switch (b) {
    case Backstop::TruncatedEM: return "truncated-em";
    case Backstop::TamedModel2: return "tamed-model2";
    case Backstop::TamedModel1: return "tamed-model1";
  }
  return "unknown";
}

void AdaptiveConfig::validate() const {
  if (!(delta_min > 0.0) || !(delta_min <= delta_max) || !(delta_max <= 1.0)) {
    throw std::invalid_argument("AdaptiveConfig: require 0 < delta_min <= delta_max <= 1");
  }
}

Vector SdeSystem::f(const Vector& x) const {
  Vector out(static_cast<Eigen::Index>(state_dim));
  drift(x, out);
  return out;
}

Matrix SdeSystem::g(const Vector& x) const {
  Matrix out(static_cast<Eigen::Index>(state_dim), static_cast<Eigen::Index>(noise_dim));
  diffusion(x, out);
  return out;
}

bool is_backstop(const GrowthEnvelope& env, const AdaptiveConfig& cfg, const Vector& x) {
  require_finite(x, "is_backstop");
  return cfg.delta_max / env(x.norm()) <= cfg.delta_min;
}

double adaptive_step(const GrowthEnvelope& env, const AdaptiveConfig& cfg, const Vector& x) {
  require_finite(x, "adaptive_step");
  const double candidate = cfg.delta_max / env(x.norm());
  return candidate <= cfg.delta_min ? cfg.delta_min : candidate;
}

double truncation_radius(const GrowthEnvelope& env, double delta_min) {
  const double level = env.K * std::pow(delta_min, -env.gamma);
  if (level < env(0.0)) {
    throw ConfigurationError("truncation level K*delta^-gamma = " + std::to_string(level) +
                             " is below phi(0)");
  }
  return env.inverse(level);
}

Vector truncate(const GrowthEnvelope& env, double delta_min, const Vector& x) {
  require_finite(x, "truncate");
  const double radius = truncation_radius(env, delta_min);
  const double norm = x.norm();
  if (norm <= radius) return x;
  return x * (radius / norm);
}

Coefficients tame_model2(const SdeSystem& sys, double delta_min, const Vector& x) {
  require_finite(x, "tame_model2");
  const double divisor = 1.0 + std::sqrt(delta_min) * std::pow(x.norm(), sys.poly_degree);
  return {sys.f(x) / divisor, sys.g(x) / divisor};
}

Coefficients tame_model1(const SdeSystem& sys, double delta_min, const Vector& x) {
  require_finite(x, "tame_model1");
  Vector f = sys.f(x);
  Matrix g = sys.g(x);
  const double divisor = 1.0 + std::sqrt(delta_min) * (f.norm() + g.squaredNorm());
  return {f / divisor, g / divisor};
}

Coefficients effective_coefficients(const SdeSystem& sys, const GrowthEnvelope& env,
                                    const AdaptiveConfig& cfg, const Vector& x) {
  require_finite(x, "effective_coefficients");
  Coefficients out{Vector(static_cast<Eigen::Index>(sys.state_dim)),
                   Matrix(static_cast<Eigen::Index>(sys.state_dim),
                          static_cast<Eigen::Index>(sys.noise_dim))};
  EffectiveCoefficients eval(sys, env, cfg);
  eval.evaluate(x, x.norm(), out.drift, out.diffusion);
  return out;
}

double invert_envelope_numeric(const std::function<double(double)>& phi, double v) {
  const double floor = phi(0.0);
  const double tol = 1e-10 * std::max(1.0, std::abs(v));
  if (v < floor) {
    if (floor - v <= tol) return 0.0;
    throw std::domain_error("invert_envelope_numeric: value below phi(0)");
  }
  if (v - floor <= tol) return 0.0;

  double lo = 0.0;
  double hi = 1.0;
  int doublings = 0;
  while (phi(hi) < v) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 1024 || !std::isfinite(hi)) {
      throw NumericError("invert_envelope_numeric: no bracket found");
    }
  }
  for (int iter = 0; iter < 4096; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (!(lo < mid && mid < hi)) break;
    const double value = phi(mid);
    if (std::abs(value - v) <= tol) return mid;
    if (value < v) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double r = std::abs(phi(lo) - v) <= std::abs(phi(hi) - v) ? lo : hi;
  if (std::abs(phi(r) - v) > tol) {
    throw NumericError("invert_envelope_numeric: bisection stalled above tolerance");
  }
  return r;
}

EffectiveCoefficients::EffectiveCoefficients(const SdeSystem& sys, const GrowthEnvelope& env,
                                             const AdaptiveConfig& cfg)
    : sys_(sys), env_(env), cfg_(cfg), scratch_(static_cast<Eigen::Index>(sys.state_dim)) {
  cfg_.validate();
  sqrt_delta_min_ = std::sqrt(cfg_.delta_min);
  if (cfg_.backstop == Backstop::TruncatedEM) radius_ = truncation_radius(env_, cfg_.delta_min);
}

double EffectiveCoefficients::step(double norm, bool& backstop) const {
  const double candidate = cfg_.delta_max / env_(norm);
  backstop = candidate <= cfg_.delta_min;
  return backstop ? cfg_.delta_min : candidate;
}

bool EffectiveCoefficients::evaluate(const Vector& x, double norm, Vector& drift,
                                     Matrix& diffusion) {
  bool backstop = false;
  step(norm, backstop);
  evaluate_on_branch(x, norm, backstop, drift, diffusion);
  return backstop;
}

void EffectiveCoefficients::evaluate_on_branch(const Vector& x, double norm, bool backstop,
                                               Vector& drift, Matrix& diffusion) {
  if (!backstop) {
    sys_.drift(x, drift);
    sys_.diffusion(x, diffusion);
    return;
  }
  switch (cfg_.backstop) {
    case Backstop::TruncatedEM: {
      if (norm <= radius_) {
        sys_.drift(x, drift);
        sys_.diffusion(x, diffusion);
      } else {
        scratch_ = x * (radius_ / norm);
        sys_.drift(scratch_, drift);
        sys_.diffusion(scratch_, diffusion);
      }
      break;
    }
    case Backstop::TamedModel2: {
      sys_.drift(x, drift);
      sys_.diffusion(x, diffusion);
      const double divisor = 1.0 + sqrt_delta_min_ * std::pow(norm, sys_.poly_degree);
      drift /= divisor;
      diffusion /= divisor;
      break;
    }
    case Backstop::TamedModel1: {
      sys_.drift(x, drift);
      sys_.diffusion(x, diffusion);
      const double divisor = 1.0 + sqrt_delta_min_ * (drift.norm() + diffusion.squaredNorm());
      drift /= divisor;
      diffusion /= divisor;
      break;
    }
  }
}

}  // namespace sdeadapt
