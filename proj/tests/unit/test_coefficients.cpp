#include "sdeadapt/coefficients.hpp"
#include "sdeadapt/problems.hpp"

#include "../support/coefficient_properties.hpp"

#include <gtest/gtest.h>

using namespace sdeadapt;

namespace {

GrowthEnvelope quadratic() { return GrowthEnvelope::power_law(1.0, 1.0, 2.0, 2.0); }

AdaptiveConfig gl_config() { return AdaptiveConfig{0x1p-20, 0x1p-12, Backstop::TruncatedEM}; }

Vector scalar(double v) { return Vector::Constant(1, v); }

Vector with_norm(double r) {
  Vector x(2);
  x << 0.6 * r, -0.8 * r;
  return x;
}

// Oracle values computed independently (bisection / direct evaluation in double precision).
constexpr double kGlTruncationRadius = 14.219259286331676;
constexpr double kTamedModel2AtTwo = -9.961089494163424;
constexpr double kTamedModel1AtTwo = -9.865125240847783;

}  // namespace

TEST(GrowthEnvelope, ClosedFormInverseRoundTrips) {
  const GrowthEnvelope env = quadratic();
  for (double v : {1.0, 2.0, 26.0, 1e6}) {
    EXPECT_NEAR(env(env.inverse(v)), v, 1e-10 * v);
  }
  EXPECT_THROW(env.inverse(0.5), std::domain_error);
}

TEST(GrowthEnvelope, RejectsInvalidPowerLaw) {
  EXPECT_THROW(GrowthEnvelope::power_law(0.5, 1.0, 2.0, 2.0), std::invalid_argument);
  EXPECT_THROW(GrowthEnvelope::power_law(1.0, 0.0, 2.0, 2.0), std::invalid_argument);
}

TEST(AdaptiveConfig, Validation) {
  EXPECT_NO_THROW(gl_config().validate());
  EXPECT_THROW((AdaptiveConfig{0.0, 0.1, Backstop::TruncatedEM}.validate()), std::invalid_argument);
  EXPECT_THROW((AdaptiveConfig{0.2, 0.1, Backstop::TruncatedEM}.validate()), std::invalid_argument);
  EXPECT_THROW((AdaptiveConfig{0.1, 2.0, Backstop::TruncatedEM}.validate()), std::invalid_argument);
  EXPECT_DOUBLE_EQ(gl_config().ratio(), 256.0);
}

TEST(AdaptiveStep, Examples) {
  const GrowthEnvelope env = quadratic();
  const AdaptiveConfig cfg = gl_config();
  EXPECT_EQ(adaptive_step(env, cfg, with_norm(0.0)), 0x1p-12);
  EXPECT_EQ(adaptive_step(env, cfg, scalar(1.0)), 0x1p-13);
  EXPECT_EQ(adaptive_step(env, cfg, scalar(16.0)), 0x1p-20);
}

TEST(IsBackstop, Examples) {
  const GrowthEnvelope env = quadratic();
  AdaptiveConfig cfg = gl_config();
  EXPECT_FALSE(is_backstop(env, cfg, scalar(0.0)));
  EXPECT_TRUE(is_backstop(env, cfg, scalar(16.0)));
  // phi(r) = 255 < rho = 256 stays off the floor
  EXPECT_FALSE(is_backstop(env, cfg, scalar(std::sqrt(254.0))));
  cfg.delta_max = cfg.delta_min;
  for (double r : {0.0, 0.5, 3.0, 1e4}) EXPECT_TRUE(is_backstop(env, cfg, scalar(r)));
}

TEST(Truncate, Examples) {
  const GrowthEnvelope env = quadratic();
  EXPECT_NEAR(truncation_radius(env, 0x1p-20), kGlTruncationRadius, 1e-12);
  EXPECT_TRUE(truncate(env, 0x1p-20, Vector::Zero(2)).isZero(0.0));
  const Vector small = with_norm(3.0);
  EXPECT_EQ(truncate(env, 0x1p-20, small), small);
  Vector x(2);
  x << 20.0, 0.0;
  const Vector p = truncate(env, 0x1p-20, x);
  EXPECT_NEAR(p[0], kGlTruncationRadius, 1e-12);
  EXPECT_EQ(p[1], 0.0);
}

TEST(Truncate, RadiusBelowPhiZeroIsAConfigurationError) {
  GrowthEnvelope env = GrowthEnvelope::power_law(10.0, 1.0, 2.0, 0.5);
  EXPECT_THROW(truncation_radius(env, 0.5), ConfigurationError);
}

TEST(TameModel2, GinzburgLandau) {
  const ProblemCatalogEntry gl = ginzburg_landau();
  const Coefficients c = tame_model2(gl.system, 0x1p-20, scalar(2.0));
  EXPECT_NEAR(c.drift[0], kTamedModel2AtTwo, 1e-12);
  EXPECT_NEAR(c.drift[0], -10.0 / 1.00390625, 1e-12);
  const Coefficients zero = tame_model2(gl.system, 0x1p-20, scalar(0.0));
  EXPECT_EQ(zero.drift[0], 0.0);
  EXPECT_EQ(zero.diffusion(0, 0), gl.system.g(scalar(0.0))(0, 0));
  for (double v : {-30.0, -1.0, 0.3, 7.0, 500.0}) {
    EXPECT_LE(std::abs(tame_model2(gl.system, 0x1p-20, scalar(v)).drift[0]),
              std::abs(gl.system.f(scalar(v))[0]));
  }
}

TEST(TameModel1, GinzburgLandau) {
  const ProblemCatalogEntry gl = ginzburg_landau();
  const Coefficients c = tame_model1(gl.system, 0x1p-20, scalar(2.0));
  EXPECT_NEAR(c.drift[0], kTamedModel1AtTwo, 1e-12);
  const Coefficients zero = tame_model1(gl.system, 0x1p-20, scalar(0.0));
  EXPECT_EQ(zero.drift[0], 0.0);
  EXPECT_EQ(zero.diffusion(0, 0), 0.0);
  for (double v : {1.0, 50.0, 1e3, 1e5}) {
    EXPECT_LE(std::abs(tame_model1(gl.system, 0x1p-20, scalar(v)).drift[0]), 1024.0);
  }
}

TEST(EffectiveCoefficients, Branches) {
  const ProblemCatalogEntry gl = ginzburg_landau();
  const GrowthEnvelope& env = gl.default_env;
  AdaptiveConfig cfg = gl_config();

  const Vector inside = scalar(2.0);
  const Coefficients raw = effective_coefficients(gl.system, env, cfg, inside);
  EXPECT_EQ(raw.drift, gl.system.f(inside));
  EXPECT_EQ(raw.diffusion, gl.system.g(inside));

  const Vector far = scalar(16.0);
  const Coefficients cut = effective_coefficients(gl.system, env, cfg, far);
  const Vector projected = scalar(kGlTruncationRadius);
  EXPECT_NEAR(cut.drift[0], gl.system.f(projected)[0], 1e-9);
  EXPECT_NEAR(cut.diffusion(0, 0), kGlTruncationRadius, 1e-12);

  cfg.delta_max = cfg.delta_min;
  const Coefficients always = effective_coefficients(gl.system, env, cfg, inside);
  const Vector p = truncate(env, cfg.delta_min, inside);
  EXPECT_EQ(always.drift, gl.system.f(p));

  cfg = gl_config();
  cfg.backstop = Backstop::TamedModel2;
  EXPECT_NEAR(effective_coefficients(gl.system, env, cfg, far).drift[0],
              tame_model2(gl.system, cfg.delta_min, far).drift[0], 0.0);
  cfg.backstop = Backstop::TamedModel1;
  EXPECT_NEAR(effective_coefficients(gl.system, env, cfg, far).drift[0],
              tame_model1(gl.system, cfg.delta_min, far).drift[0], 0.0);
}

TEST(EffectiveCoefficients, AllocationFreeEvaluatorMatchesFreeFunction) {
  const ProblemCatalogEntry lz = lorenz();
  for (Backstop b : {Backstop::TruncatedEM, Backstop::TamedModel2, Backstop::TamedModel1}) {
    AdaptiveConfig cfg{0x1p-20, 0x1p-2, b};
    EffectiveCoefficients eval(lz.system, lz.default_env, cfg);
    Vector drift(3);
    Matrix diffusion(3, 3);
    for (std::size_t i = 0; i < 200; ++i) {
      const Vector x = sample_state(3, i, 3, 1e6, StateDomain::Whole);
      const bool flag = eval.evaluate(x, x.norm(), drift, diffusion);
      const Coefficients ref = effective_coefficients(lz.system, lz.default_env, cfg, x);
      EXPECT_EQ(flag, is_backstop(lz.default_env, cfg, x));
      EXPECT_TRUE(drift.isApprox(ref.drift, 1e-15) || (drift - ref.drift).norm() == 0.0);
    }
  }
}

TEST(InvertEnvelopeNumeric, ClosedFormChecks) {
  struct Case {
    std::function<double(double)> phi;
    double v;
    double root;
  };
  const Case cases[] = {
      {[](double r) { return 1.0 + r * r; }, 26.0, 5.0},
      {[](double r) { return 1.0 + 2.0 * r; }, 3.0, 1.0},
      {[](double r) { return r * r + 305.0; }, 309.0, 2.0},
  };
  for (const Case& c : cases) {
    const double r = invert_envelope_numeric(c.phi, c.v);
    EXPECT_LE(std::abs(c.phi(r) - c.v), 1e-10 * std::max(1.0, c.v));
    EXPECT_NEAR(r, c.root, 1e-8);
  }
  EXPECT_EQ(invert_envelope_numeric([](double r) { return 1.0 + r; }, 1.0), 0.0);
  EXPECT_THROW(invert_envelope_numeric([](double r) { return 1.0 + r; }, 0.5), std::domain_error);
}

TEST(InvertEnvelopeNumeric, FallbackUsedWhenNoClosedForm) {
  GrowthEnvelope env;
  env.phi = [](double r) { return 1.0 + r * r * r; };
  env.K = 2.0;
  EXPECT_NEAR(env.inverse(28.0), 3.0, 1e-9);
}

class CoefficientPropertySuite : public ::testing::TestWithParam<std::string> {};

TEST_P(CoefficientPropertySuite, HoldsOnTenThousandStates) {
  const ProblemCatalogEntry e = problem_by_name(GetParam());
  const auto rep = sdeadapt::testing::check_coefficient_properties(e, 10000, 1e3, 0xC0FFEE);
  EXPECT_EQ(rep.checked, 10000u);
  EXPECT_TRUE(rep.ok()) << rep.violations << " violations; first: " << rep.first_violation;
}

INSTANTIATE_TEST_SUITE_P(Catalog, CoefficientPropertySuite,
                         ::testing::Values("stiff-cubic", "ginzburg-landau", "heston-3-2", "lorenz"));
