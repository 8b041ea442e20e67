#include <doctest.h>

#include <cgeo/models.hpp>

#include <random>

#include "oracles.hpp"

using namespace cgeo;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }
Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// Fisher information of the statistical inverse, by brute-force Simpson over x.
double h_stat_oracle(const DecayConfounderConfig& c, double theta) {
  const double st2 = c.sigma_T * c.sigma_T, sx2 = c.sigma_x * c.sigma_x;
  auto var = [&](double x) { return c.alpha * c.alpha / (1.0 / st2 + x * x / sx2); };
  auto mean = [&](double x) { return x * (1.0 + c.x_hat * var(x) / (c.alpha * sx2)); };
  auto q = [&](double x) { return oracle::normal_pdf(theta, mean(x), std::sqrt(var(x))); };
  auto score = [&](double x) { return -(theta - mean(x)) / var(x); };
  const double w = 40.0 * c.alpha * c.sigma_T;
  const double a = theta - w, b = theta + w;
  const int n = 400000;
  const double z = oracle::simpson(q, a, b, n);
  const double m1 = oracle::simpson([&](double x) { return q(x) * score(x); }, a, b, n) / z;
  const double m2 = oracle::simpson([&](double x) { return q(x) * score(x) * score(x); }, a, b, n) / z;
  return m2 - m1 * m1;
}

}  // namespace

TEST_CASE("dimmer profiles are anchored and monotone") {
  for (double a : {-5.0, -2.0, -0.3, 0.0, 1e-12, 0.7, 3.0, 5.0}) {
    const auto p = dimmer_family(a);
    CHECK(p.f(0.0) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(p.f(1.0) == doctest::Approx(1.0).epsilon(1e-14));
    double prev = p.f(0.0);
    for (int i = 1; i <= 200; ++i) {
      const double t = i / 200.0;
      CHECK(p.f(t) > prev);
      CHECK(p.df(t) > 0.0);
      prev = p.f(t);
    }
  }
  for (const auto& p : {linear_profile(), quadratic_profile(), exponential_profile(0.1)}) {
    CHECK(p.f(0.0) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(p.f(1.0) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("dimmer family values") {
  const auto zero = dimmer_family(0.0);
  for (double t : {0.1, 0.5, 0.8}) CHECK(zero.f(t) == t);
  CHECK(dimmer_family(1.0).f(0.5) == doctest::Approx((std::sqrt(oracle::kE) - 1.0) / (oracle::kE - 1.0)).epsilon(1e-14));
  CHECK(dimmer_family(1.0).f(0.5) == doctest::Approx(0.3775).epsilon(1e-4));
  CHECK_THROWS_AS(dimmer_family(5.5), Error);
  CHECK_THROWS_AS(dimmer_family(-5.01), Error);
}

TEST_CASE("dimmer family is continuous at a = 0") {
  double prev = 1.0;
  for (double a : {1e-1, 1e-2, 1e-3, 1e-5, 1e-8}) {
    double sup = 0.0;
    for (int i = 0; i <= 100; ++i) sup = std::max(sup, std::abs(dimmer_family(a).f(i / 100.0) - i / 100.0));
    CHECK(sup < prev);
    prev = sup;
  }
  CHECK(prev < 1e-8);
}

TEST_CASE("exponential profile derivative") {
  const auto p = exponential_profile(0.1);
  for (double t : {0.05, 0.5, 0.95}) {
    const double fd = (p.f(t + 1e-6) - p.f(t - 1e-6)) / 2e-6;
    CHECK(p.df(t) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("dimmer model wiring") {
  const auto m = dimmer_model(linear_profile(), EffectNoise::constant(0.03), 0.02);
  CHECK(m.interventions.is_box());
  CHECK(m.name == "dimmer");
  CHECK(m.h(v1(0.4))(0, 0) == doctest::Approx(2500.0));
  CHECK(m.intervention.push_forward(v1(0.3)).mean[0] == 0.3);
  CHECK(m.intervention.push_forward(v1(0.3)).covariance(0, 0) == doctest::Approx(4e-4));
  const auto w = dimmer_model(linear_profile(), EffectNoise::weber(0.03), 0.003);
  CHECK(w.name == "dimmer-weber");
  CHECK(EffectNoise::weber(0.03).sigma_at(0.5) == doctest::Approx(0.015));
  CHECK(EffectNoise::weber(0.03).sigma_at(0.0) == doctest::Approx(0.03e-3));
}

TEST_CASE("binary switch uses the two ends") {
  const auto m = binary_switch_model(0.03, 0.03);
  REQUIRE_FALSE(m.interventions.is_box());
  REQUIRE(m.interventions.points().size() == 2);
  CHECK(m.interventions.points()[0][0] == 0.0);
  CHECK(m.interventions.points()[1][0] == 1.0);
}

TEST_CASE("binary switch beats the continuous dimmer at large error") {
  for (double s : {1.0, 2.0}) {
    const auto c = dimmer_model(linear_profile(), EffectNoise::constant(s), s);
    const auto b = binary_switch_model(s, s);
    const double ec = ei_exact_quadrature(c.interventions, c.intervention, c.effect).nats;
    const double eb = ei_exact_quadrature(b.interventions, b.intervention, b.effect).nats;
    CHECK(ec < 0.05);
    CHECK(eb < 0.1);
    CHECK(eb >= ec);
  }
}

TEST_CASE("two-species model") {
  TwoSpeciesConfig cfg;
  const auto m = two_species_model(cfg);
  const Vec y = m.effect.mean(v2(0.3, 0.7));
  for (int n = 1; n <= 3; ++n) CHECK(y[n - 1] == doctest::Approx(std::exp(-0.3 * n) + std::exp(-0.7 * n)).epsilon(1e-15));
  CHECK((m.h(v2(0.2, 0.2)) - Mat::Identity(2, 2) / (cfg.delta * cfg.delta)).norm() <= 1e-9);

  TwoSpeciesConfig b;
  b.A << 1.0, 0.8, 0.7, 1.0;
  const auto mb = two_species_model(b);
  const Mat ainv = b.A.inverse();
  const Mat ref = ainv.transpose() * ainv / (b.delta * b.delta);
  CHECK((mb.h(v2(0.5, 0.5)) - ref).norm() <= 1e-10 * ref.norm());
  // The numerically inverted channel reproduces the closed form.
  const auto h_num = intervention_metric(invert_uniform_prior(mb.intervention, mb.interventions));
  for (const Vec& t : {v2(0.3, 0.4), v2(0.5, 0.5), v2(0.8, 0.6)}) CHECK((h_num(t) - ref).norm() <= 1e-6 * ref.norm());
  // The intervention box covers Theta.
  for (const Vec& t : {v2(0, 0), v2(1, 0), v2(0, 1), v2(1, 1)}) CHECK(mb.interventions.domain().contains(ainv * t, 1e-12));
}

TEST_CASE("two-species config validation") {
  TwoSpeciesConfig bad;
  bad.A << 1.0, 2.0, 0.5, 1.0;
  CHECK_THROWS_AS(two_species_model(bad), Error);
  TwoSpeciesConfig few;
  few.n_points = 1;
  CHECK_THROWS_AS(two_species_model(few), Error);
  TwoSpeciesConfig neg;
  neg.epsilon = -1.0;
  CHECK_THROWS_AS(two_species_model(neg), Error);
}

TEST_CASE("two-species g is rank one on the diagonal") {
  for (double t : {0.05, 0.5, 0.95}) {
    Eigen::SelfAdjointEigenSolver<Mat> es(two_species_model({}).g(v2(t, t)));
    CHECK(es.eigenvalues()[0] < 1e-10 * es.eigenvalues()[1]);
  }
}

TEST_CASE("property: built-in analytic metrics match finite differences") {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(0.03, 0.97);
  TwoSpeciesConfig cfg;
  cfg.A << 1.0, 0.8, 0.7, 1.0;
  cfg.delta_t = 2.5;
  const auto models = {two_species_model(cfg), dimmer_model(quadratic_profile(), EffectNoise::constant(0.03), 0.03),
                       dimmer_model(dimmer_family(4.0), EffectNoise::weber(0.05), 0.01),
                       decay_confounder_model({})};
  for (const auto& m : models) {
    const auto fd = effect_metric(m.effect.with_finite_differences());
    for (int trial = 0; trial < 20; ++trial) {
      Vec t(m.theta.dim());
      for (int i = 0; i < t.size(); ++i) t[i] = u(rng);
      CHECK((fd(t) - m.g(t)).norm() <= 1e-4 * m.g(t).norm());
    }
  }
}

TEST_CASE("submanifold pullback on the diagonal") {
  TwoSpeciesConfig cfg;
  const auto m = two_species_model(cfg);
  for (double s : {0.2, 0.6}) {
    double ref = 0.0;
    for (int n = 1; n <= 3; ++n) ref += std::pow(2.0 * n * std::exp(-n * s), 2);
    ref /= cfg.epsilon * cfg.epsilon;
    CHECK(pullback(m.g, submanifold_A(), v1(s))(0, 0) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("decay confounder: causal metric is constant") {
  const DecayConfounderConfig cfg;
  const auto m = decay_confounder_metrics(cfg);
  const double ref = 1.0 / (cfg.sigma_T * cfg.sigma_T * cfg.alpha * cfg.alpha);
  for (double t : {0.0, 0.3, 0.9}) CHECK(std::abs(m.h_caus(v1(t))(0, 0) - ref) <= 1e-12 * ref);
}

TEST_CASE("decay confounder: statistical metric against the brute-force oracle") {
  DecayConfounderConfig cfg;
  const auto m = decay_confounder_metrics(cfg);
  for (double t : {0.2, 0.5, 0.8}) CHECK(m.h_stat(v1(t))(0, 0) == doctest::Approx(h_stat_oracle(cfg, t)).epsilon(1e-9));
  cfg.sigma_T = 0.1;
  cfg.alpha = 1.3;
  const auto m2 = decay_confounder_metrics(cfg);
  CHECK(m2.h_stat(v1(0.4))(0, 0) == doctest::Approx(h_stat_oracle(cfg, 0.4)).epsilon(1e-9));
}

TEST_CASE("decay confounder: statistical metric tends to the causal one") {
  DecayConfounderConfig cfg;
  cfg.sigma_T = 1e-3;
  const auto m = decay_confounder_metrics(cfg);
  const double hc = m.h_caus(v1(0.5))(0, 0);
  for (double t : {0.1, 0.5, 0.9}) CHECK(m.h_stat(v1(t))(0, 0) == doctest::Approx(hc).epsilon(1e-5));
}

TEST_CASE("decay confounder: series regime and theta dependence") {
  DecayConfounderConfig cfg;
  cfg.sigma_T = 0.1;
  const auto m = decay_confounder_metrics(cfg);
  const double a = m.h_stat(v1(0.1))(0, 0), b = m.h_stat(v1(0.9))(0, 0);
  CHECK(std::abs(a / b - 1.0) > 1e-4);
  CHECK_NOTHROW(m.h_stat_series(0.5));
  cfg.sigma_T = 0.11;
  try {
    (void)decay_confounder_metrics(cfg).h_stat_series(0.5);
    FAIL("expected a regime violation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RegimeViolation);
  }
}

TEST_CASE("decay confounder model channels") {
  const DecayConfounderConfig cfg;
  const auto m = decay_confounder_model(cfg);
  CHECK(m.h(v1(0.3))(0, 0) == doctest::Approx(400.0));
  const Vec y = m.effect.mean(v1(0.5));
  for (int n = 1; n <= 3; ++n) CHECK(y[n - 1] == doctest::Approx(std::exp(-0.5 * n)));
}
