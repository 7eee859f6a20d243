#include "sdeadapt/schemes.hpp"

#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>

namespace sdeadapt {

void NewtonConfig::validate() const {
  if (!(tolerance > 0.0)) throw std::invalid_argument("NewtonConfig: tolerance must be positive");
  if (max_iterations < 1) throw std::invalid_argument("NewtonConfig: max_iterations must be >= 1");
  if (!(damping > 0.0 && damping <= 1.0)) {
    throw std::invalid_argument("NewtonConfig: damping must lie in (0, 1]");
  }
}

SchemeSpec SchemeSpec::ats(const AdaptiveConfig& cfg) {
  SchemeSpec s;
  s.kind = SchemeKind::Ats;
  s.adaptive = cfg;
  return s;
}

SchemeSpec SchemeSpec::as_bem(const AdaptiveConfig& cfg, const NewtonConfig& newton) {
  SchemeSpec s;
  s.kind = SchemeKind::AsBem;
  s.adaptive = cfg;
  s.newton = newton;
  return s;
}

SchemeSpec SchemeSpec::fixed(SchemeKind kind, double step) {
  if (kind == SchemeKind::Ats || kind == SchemeKind::AsBem) {
    throw std::invalid_argument("SchemeSpec::fixed: adaptive kind given");
  }
  SchemeSpec s;
  s.kind = kind;
  s.step = step;
  return s;
}

std::string SchemeSpec::name() const {
  switch (kind) {
    case SchemeKind::Ats:
      switch (adaptive.backstop) {
        case Backstop::TruncatedEM: return "ats-tem";
        case Backstop::TamedModel2: return "ats-tamed2";
        case Backstop::TamedModel1: return "ats-tamed1";
      }
      break;
    case SchemeKind::Em: return "em";
    case SchemeKind::FsTem: return "fs-tem";
    case SchemeKind::FsTaem: return "fs-taem";
    case SchemeKind::FsBem: return "fs-bem";
    case SchemeKind::AsBem: return "as-bem";
  }
  return "unknown";
}

void SchemeSpec::validate() const {
  if (is_adaptive()) {
    adaptive.validate();
  } else if (!(step > 0.0) || !std::isfinite(step)) {
    throw std::invalid_argument("SchemeSpec: fixed step must be positive");
  }
  if (kind == SchemeKind::FsTem || kind == SchemeKind::FsTaem) {
    if (!(step <= 1.0)) throw std::invalid_argument("SchemeSpec: fixed step must be <= 1");
  }
  if (kind == SchemeKind::FsTem) {
    const double g = fs_tem_gamma();
    if (!(g > 0.0 && g <= 0.5)) throw std::invalid_argument("FS-TEM: gamma must lie in (0, 1/2]");
  }
  if (kind == SchemeKind::FsTaem && !(fs_taem_gamma() > 0.0)) {
    throw std::invalid_argument("FS-TaEM: gamma must be positive");
  }
  if (kind == SchemeKind::FsBem || kind == SchemeKind::AsBem) newton.validate();
}

SchemeSpec scheme_from_name(const std::string& name) {
  AdaptiveConfig cfg;
  if (name == "ats-tem") return SchemeSpec::ats(cfg);
  if (name == "ats-tamed2") {
    cfg.backstop = Backstop::TamedModel2;
    return SchemeSpec::ats(cfg);
  }
  if (name == "ats-tamed1") {
    cfg.backstop = Backstop::TamedModel1;
    return SchemeSpec::ats(cfg);
  }
  if (name == "as-bem") return SchemeSpec::as_bem(cfg);
  if (name == "em") return SchemeSpec::fixed(SchemeKind::Em, 0x1p-8);
  if (name == "fs-tem") return SchemeSpec::fixed(SchemeKind::FsTem, 0x1p-8);
  if (name == "fs-taem") return SchemeSpec::fixed(SchemeKind::FsTaem, 0x1p-8);
  if (name == "fs-bem") return SchemeSpec::fixed(SchemeKind::FsBem, 0x1p-8);
  throw std::invalid_argument("unknown scheme '" + name + "'");
}

namespace {

Eigen::Index idx(std::size_t n) { return static_cast<Eigen::Index>(n); }

/// Scratch space for one implicit solve.
struct ImplicitWorkspace {
  Vector base, y, trial, r, trial_r, f, fp, fm, probe, delta;
  Matrix jacobian;
  Eigen::PartialPivLU<Matrix> lu;

  explicit ImplicitWorkspace(std::size_t d)
      : base(idx(d)), y(idx(d)), trial(idx(d)), r(idx(d)), trial_r(idx(d)), f(idx(d)),
        fp(idx(d)), fm(idx(d)), probe(idx(d)), delta(idx(d)), jacobian(idx(d), idx(d)),
        lu(idx(d)) {}
};

// r(y) = y - base - h f(y), base = x + g(x) dW.
double residual(const SdeSystem& sys, const Vector& base, double h, const Vector& y, Vector& f,
                Vector& r) {
  sys.drift(y, f);
  r = y - base - h * f;
  const double n = r.norm();
  return std::isfinite(n) ? n : std::numeric_limits<double>::infinity();
}

ImplicitSolution solve_implicit(const SdeSystem& sys, const Vector& x, const Vector& base,
                                double h, const NewtonConfig& newton, ImplicitWorkspace& ws) {
  const auto d = sys.state_dim;
  constexpr double kSqrtEps = 1.4901161193847656e-08;

  // Explicit predictor.
  sys.drift(x, ws.f);
  ws.y = base + h * ws.f;
  double rn = residual(sys, base, h, ws.y, ws.f, ws.r);
  double best = rn;
  int iterations = 0;

  while (rn > newton.tolerance && iterations < newton.max_iterations) {
    ++iterations;
    for (std::size_t j = 0; j < d; ++j) {
      const auto jj = idx(j);
      const double e = kSqrtEps * (1.0 + std::abs(ws.y[jj]));
      ws.probe = ws.y;
      ws.probe[jj] = ws.y[jj] + e;
      sys.drift(ws.probe, ws.fp);
      ws.probe[jj] = ws.y[jj] - e;
      sys.drift(ws.probe, ws.fm);
      ws.jacobian.col(jj) = -h * (ws.fp - ws.fm) / (2.0 * e);
      ws.jacobian(jj, jj) += 1.0;
    }
    if (!ws.jacobian.allFinite()) break;
    ws.lu.compute(ws.jacobian);
    ws.delta = ws.lu.solve(-ws.r);
    if (!ws.delta.allFinite()) break;

    double lambda = newton.damping;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      ws.trial = ws.y + lambda * ws.delta;
      const double trial_rn = residual(sys, base, h, ws.trial, ws.f, ws.trial_r);
      if (trial_rn < rn) {
        ws.y = ws.trial;
        ws.r = ws.trial_r;
        rn = trial_rn;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) break;
    best = std::min(best, rn);
  }
  if (rn <= newton.tolerance) return {ws.y, rn, iterations, false};

  // Fixed-point fallback from the explicit predictor.
  sys.drift(x, ws.f);
  ws.y = base + h * ws.f;
  for (int k = 0; k < newton.max_iterations; ++k) {
    sys.drift(ws.y, ws.f);
    ws.y = base + h * ws.f;
    rn = residual(sys, base, h, ws.y, ws.f, ws.r);
    best = std::min(best, rn);
    if (rn <= newton.tolerance) return {ws.y, rn, iterations + k + 1, true};
    if (!std::isfinite(rn)) break;
  }
  throw ImplicitSolveError("backward EM: Newton and fixed-point iterations failed", best);
}

double fs_tem_radius(const GrowthEnvelope& env_fs, double h) {
  const double level = env_fs.K * std::pow(h, -env_fs.gamma);
  if (level < env_fs(0.0)) {
    throw ConfigurationError("FS-TEM: K h^-gamma is below phi(0)");
  }
  return env_fs.inverse(level);
}

void project(Vector& y, double radius) {
  const double n = y.norm();
  if (n > radius) y *= radius / n;
}

void check_dims(const SdeSystem& sys, const Vector& x, const Vector& dw) {
  if (static_cast<std::size_t>(x.size()) != sys.state_dim ||
      static_cast<std::size_t>(dw.size()) != sys.noise_dim) {
    throw std::invalid_argument("dimension mismatch between system, state and increment");
  }
}

}  // namespace

Vector ats_update(const SdeSystem& sys, const GrowthEnvelope& env, const AdaptiveConfig& cfg,
                  const Vector& x, double h, const Vector& dw) {
  check_dims(sys, x, dw);
  const Coefficients c = effective_coefficients(sys, env, cfg, x);
  return x + c.drift * h + c.diffusion * dw;
}

Vector em_update(const SdeSystem& sys, const Vector& x, double h, const Vector& dw) {
  check_dims(sys, x, dw);
  return x + sys.f(x) * h + sys.g(x) * dw;
}

Vector fs_tem_update(const SdeSystem& sys, const GrowthEnvelope& env, const Vector& x, double h,
                     const Vector& dw) {
  Vector y = em_update(sys, x, h, dw);
  project(y, fs_tem_radius(env, h));
  return y;
}

Vector fs_taem_update(const SdeSystem& sys, const Vector& x, double h, double gamma,
                      const Vector& dw) {
  check_dims(sys, x, dw);
  const Vector f = sys.f(x);
  const Matrix g = sys.g(x);
  const double hg = std::pow(h, gamma);
  return x + (f * h + g * dw) / (1.0 + hg * f.norm() + hg * g.squaredNorm());
}

ImplicitSolution bem_update(const SdeSystem& sys, const Vector& x, double h, const Vector& dw,
                            const NewtonConfig& newton) {
  check_dims(sys, x, dw);
  newton.validate();
  ImplicitWorkspace ws(sys.state_dim);
  const Vector base = x + sys.g(x) * dw;
  return solve_implicit(sys, x, base, h, newton, ws);
}

StepResult ats_step(const SdeSystem& sys, const GrowthEnvelope& env, const AdaptiveConfig& cfg,
                    const Vector& x, double t, BrownianPath& path) {
  const double h = adaptive_step(env, cfg, x);
  const bool backstop = is_backstop(env, cfg, x);
  const Vector dw = path.increment(t, t + h);
  return {ats_update(sys, env, cfg, x, h, dw), t + h, backstop};
}

StepResult em_step(const SdeSystem& sys, const Vector& x, double t, double h, BrownianPath& path) {
  if (!(h > 0.0)) throw std::invalid_argument("em_step: step must be positive");
  const Vector dw = path.increment(t, t + h);
  return {em_update(sys, x, h, dw), t + h, false};
}

StepResult fs_tem_step(const SdeSystem& sys, const GrowthEnvelope& env_fs, const Vector& x,
                       double t, double h, BrownianPath& path) {
  if (!(h > 0.0 && h <= 1.0)) throw std::invalid_argument("fs_tem_step: step must lie in (0, 1]");
  const Vector dw = path.increment(t, t + h);
  return {fs_tem_update(sys, env_fs, x, h, dw), t + h, false};
}

StepResult fs_taem_step(const SdeSystem& sys, const Vector& x, double t, double h, double gamma,
                        BrownianPath& path) {
  if (!(h > 0.0 && h <= 1.0)) throw std::invalid_argument("fs_taem_step: step must lie in (0, 1]");
  const Vector dw = path.increment(t, t + h);
  return {fs_taem_update(sys, x, h, gamma, dw), t + h, false};
}

ImplicitStepResult bem_step(const SdeSystem& sys, const Vector& x, double t, double h,
                            BrownianPath& path, const NewtonConfig& newton) {
  if (!(h > 0.0 && h <= 1.0)) throw std::invalid_argument("bem_step: step must lie in (0, 1]");
  const Vector dw = path.increment(t, t + h);
  ImplicitSolution s = bem_update(sys, x, h, dw, newton);
  return {std::move(s.state), t + h, s.residual, s.used_fallback};
}

namespace {

class Driver {
 public:
  Driver(const SchemeSpec& scheme, const SdeSystem& sys, const GrowthEnvelope& env,
         BrownianPath& path)
      : scheme_(scheme), sys_(sys), env_(env), path_(path),
        drift_(idx(sys.state_dim)), diffusion_(idx(sys.state_dim), idx(sys.noise_dim)),
        dw_(idx(sys.noise_dim)), base_(idx(sys.state_dim)), implicit_(sys.state_dim) {
    scheme_.validate();
    if (path.dimension() != sys.noise_dim) {
      throw std::invalid_argument("path dimension does not match the system noise dimension");
    }
    if (static_cast<std::size_t>(sys.initial_state.size()) != sys.state_dim) {
      throw std::invalid_argument("initial state dimension does not match the system");
    }
    if (scheme_.is_adaptive()) coeffs_.emplace(sys_, env_, scheme_.adaptive);
    if (scheme_.kind == SchemeKind::FsTem) {
      env_fs_ = env_;
      env_fs_.K = scheme_.K.value_or(env_.K);
      env_fs_.gamma = scheme_.fs_tem_gamma();
      radius_ = fs_tem_radius(env_fs_, scheme_.step);
    }
  }

  RunSummary run(double T, const RunOptions& options, Trajectory* record) {
    if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("horizon must be positive");
    RunSummary summary;
    Vector x = sys_.initial_state;
    double t = 0.0;
    std::size_t n = 0;
    if (record) {
      record->times.push_back(0.0);
      record->states.push_back(x);
    }
    if (options.observer) options.observer(0.0, x);

    const double nominal = scheme_.step;
    while (t < T) {
      bool backstop = false;
      double norm = 0.0;
      double t_next;
      double h;
      if (scheme_.is_adaptive()) {
        norm = x.norm();
        h = coeffs_->step(norm, backstop);
        t_next = t + h;
        if (t_next >= T) {
          t_next = T;
          h = T - t;
        }
      } else {
        t_next = static_cast<double>(n + 1) * nominal;
        if (t_next >= T || T - t_next <= 1e-9 * nominal) t_next = T;
        h = t_next - t;
      }
      path_.increment(t, t_next, std::span<double>(dw_.data(), sys_.noise_dim));

      double res = -1.0;
      switch (scheme_.kind) {
        case SchemeKind::Ats:
          coeffs_->evaluate_on_branch(x, norm, backstop, drift_, diffusion_);
          x.noalias() += drift_ * h;
          x.noalias() += diffusion_ * dw_;
          break;
        case SchemeKind::Em:
        case SchemeKind::FsTem:
          sys_.drift(x, drift_);
          sys_.diffusion(x, diffusion_);
          x.noalias() += drift_ * h;
          x.noalias() += diffusion_ * dw_;
          if (scheme_.kind == SchemeKind::FsTem) {
            project(x, h == nominal ? radius_ : fs_tem_radius(env_fs_, h));
          }
          break;
        case SchemeKind::FsTaem: {
          sys_.drift(x, drift_);
          sys_.diffusion(x, diffusion_);
          const double hg = std::pow(h, scheme_.fs_taem_gamma());
          const double divisor = 1.0 + hg * drift_.norm() + hg * diffusion_.squaredNorm();
          x.noalias() += (drift_ * h + diffusion_ * dw_) / divisor;
          break;
        }
        case SchemeKind::FsBem:
        case SchemeKind::AsBem: {
          sys_.diffusion(x, diffusion_);
          base_ = x;
          base_.noalias() += diffusion_ * dw_;
          ImplicitSolution s = solve_implicit(sys_, x, base_, h, scheme_.newton, implicit_);
          x = s.state;
          res = s.residual;
          summary.max_residual = std::max(summary.max_residual, s.residual);
          break;
        }
      }

      t = t_next;
      ++n;
      if (backstop) ++summary.backstop_steps;
      if (record) {
        record->times.push_back(t);
        record->states.push_back(x);
        record->steps.push_back(h);
        record->backstop_flags.push_back(backstop);
        if (res >= 0.0) record->residuals.push_back(res);
      }
      const double xn = x.norm();
      if (!std::isfinite(xn) || xn > options.divergence_guard) {
        summary.diverged = true;
        break;
      }
      if (options.release_history) path_.release_before(t);
      if (options.observer) options.observer(t, x);
    }
    summary.steps = n;
    summary.terminal_state = x;
    if (record) {
      record->terminal_state = x;
      record->diverged = summary.diverged;
    }
    return summary;
  }

 private:
  const SchemeSpec& scheme_;
  const SdeSystem& sys_;
  const GrowthEnvelope& env_;
  BrownianPath& path_;
  std::optional<EffectiveCoefficients> coeffs_;
  GrowthEnvelope env_fs_;
  double radius_ = 0.0;
  Vector drift_;
  Matrix diffusion_;
  Vector dw_;
  Vector base_;
  ImplicitWorkspace implicit_;
};

}  // namespace

Trajectory simulate(const SchemeSpec& scheme, const SdeSystem& sys, const GrowthEnvelope& env,
                    BrownianPath& path, double T) {
  Trajectory traj;
  Driver(scheme, sys, env, path).run(T, RunOptions{}, &traj);
  return traj;
}

RunSummary run_scheme(const SchemeSpec& scheme, const SdeSystem& sys, const GrowthEnvelope& env,
                      BrownianPath& path, double T, const RunOptions& options) {
  return Driver(scheme, sys, env, path).run(T, options, nullptr);
}

}  // namespace sdeadapt
