#include <doctest.h>

#include <cgeo/channels.hpp>
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

GaussianChannel identity_channel(double sigma) {
  return GaussianChannel(MeanMap::identity(1), NoiseSpec::constant(sigma), Domain::unit(1), Domain::cube(1, -1, 2));
}

// Affine map written as an opaque function so the general inversion path is used.
GaussianChannel opaque_affine(double slope, double offset, double sigma, Domain in) {
  MeanMap m;
  m.input_dim = m.output_dim = 1;
  m.value = [=](const Vec& x) { return v1(slope * x[0] + offset); };
  m.jacobian = [=](const Vec&) { return Mat::Constant(1, 1, slope); };
  return GaussianChannel(m, NoiseSpec::constant(sigma), in, Domain::cube(1, -5, 5));
}

}  // namespace

TEST_CASE("push_forward of an identity channel") {
  const auto d = identity_channel(0.1).push_forward(v1(0.5));
  CHECK(d.mean[0] == 0.5);
  CHECK(d.covariance(0, 0) == doctest::Approx(0.01).epsilon(1e-15));
}

TEST_CASE("push_forward of a quadratic dimmer") {
  const auto m = dimmer_model(quadratic_profile(), EffectNoise::constant(0.03), 0.03);
  const auto d = m.effect.push_forward(v1(0.5));
  CHECK(d.mean[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(d.covariance(0, 0) == doctest::Approx(9e-4).epsilon(1e-12));
}

TEST_CASE("two-species mean at equal rates") {
  const auto m = two_species_model({});
  const auto d = m.effect.push_forward(v2(0.5, 0.5));
  REQUIRE(d.mean.size() == 3);
  for (int n = 1; n <= 3; ++n) CHECK(d.mean[n - 1] == doctest::Approx(2.0 * std::exp(-0.5 * n)).epsilon(1e-14));
}

TEST_CASE("push_forward outside the input domain") {
  try {
    (void)identity_channel(0.1).push_forward(v1(1.5));
    FAIL("expected a domain violation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DomainViolation);
  }
}

TEST_CASE("Gaussian log-density examples") {
  CHECK(log_density({v1(0.0), Mat::Identity(1, 1)}, v1(0.0)) == doctest::Approx(-0.5 * std::log(2 * oracle::kPi)));
  const double s = 0.7;
  CHECK(log_density({v1(0.0), Mat::Constant(1, 1, s * s)}, v1(s)) ==
        doctest::Approx(-0.5 * std::log(2 * oracle::kPi * s * s) - 0.5));
  const double e = 0.02;
  CHECK(log_density({Vec::Zero(2), e * e * Mat::Identity(2, 2)}, Vec::Zero(2)) ==
        doctest::Approx(-std::log(2 * oracle::kPi * e * e)));
}

TEST_CASE("singular covariance is rejected") {
  Mat c(2, 2);
  c << 1, 1, 1, 1;
  try {
    (void)log_density({Vec::Zero(2), c}, Vec::Zero(2));
    FAIL("expected a degenerate distribution");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateDistribution);
  }
}

TEST_CASE("discrete intervention sets need distinct points") {
  CHECK_THROWS_AS(InterventionSet::discrete({v1(0.0), v1(0.0)}), Error);
  CHECK_THROWS_AS(InterventionSet::discrete({}), Error);
  const auto s = InterventionSet::discrete({v1(0.0), v1(1.0)});
  CHECK_FALSE(s.is_box());
  CHECK(s.dim() == 1);
}

TEST_CASE("inverting an identity channel in the interior") {
  const double delta = 0.03;
  const auto inv = invert_uniform_prior(identity_channel(delta), InterventionSet::box(Domain::unit(1)));
  for (double x : {0.4, 0.5, 0.55, 0.6}) {
    const double ref = oracle::normal_pdf(x, 0.5, delta);
    CHECK(inv.density(v1(x), v1(0.5)) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("inverting at the boundary doubles the density") {
  const double delta = 0.03;
  const auto inv = invert_uniform_prior(identity_channel(delta), InterventionSet::box(Domain::unit(1)));
  const double unbounded = oracle::normal_pdf(0.0, 0.0, delta);
  CHECK(inv.density(v1(0.0), v1(0.0)) == doctest::Approx(2.0 * unbounded).epsilon(0.01));
  const oracle::TruncatedNormal tn{0.0, delta, 0.0, 1.0};
  CHECK(inv.density(v1(0.01), v1(0.0)) == doctest::Approx(tn.pdf(0.01)).epsilon(1e-10));
}

TEST_CASE("inverted densities integrate to one") {
  const double delta = 0.05;
  const auto chans = {identity_channel(delta), opaque_affine(0.8, 0.1, delta, Domain::unit(1))};
  for (const auto& ch : chans) {
    const auto inv = invert_uniform_prior(ch, InterventionSet::box(Domain::unit(1)));
    for (double theta : {0.0, 0.13, 0.5, 0.9, 1.0}) {
      const double total = oracle::simpson([&](double x) { return inv.density(v1(x), v1(theta)); }, 0.0, 1.0, 4000);
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("general inversion path agrees with the closed form") {
  // theta = 2x - 0.5 on x in [0, 1], noise sd 0.06 in theta, i.e. 0.03 in x.
  const auto dom = Domain::unit(1);
  const GaussianChannel closed(MeanMap::from_affine(Mat::Constant(1, 1, 2.0), v1(-0.5)), NoiseSpec::constant(0.06), dom,
                               Domain::cube(1, -5, 5));
  const auto a = invert_uniform_prior(closed, InterventionSet::box(dom));
  const auto b = invert_uniform_prior(opaque_affine(2.0, -0.5, 0.06, dom), InterventionSet::box(dom));
  for (double theta : {-0.5, -0.2, 0.3, 0.5, 1.4, 1.5}) {
    const oracle::TruncatedNormal tn{(theta + 0.5) / 2.0, 0.03, 0.0, 1.0};
    for (double x : {0.0, 0.2, 0.41, 0.77, 1.0}) {
      const double ref = tn.pdf(x);
      if (ref < 1e-200) continue;
      CHECK(a.density(v1(x), v1(theta)) == doctest::Approx(ref).epsilon(1e-9));
      CHECK(b.density(v1(x), v1(theta)) == doctest::Approx(ref).epsilon(1e-8));
    }
    const double h_ref = 4.0 * tn.variance() / std::pow(0.03, 4) / 16.0;
    CHECK(a.fisher_metric(v1(theta))(0, 0) == doctest::Approx(h_ref).epsilon(1e-8));
    CHECK(b.fisher_metric(v1(theta))(0, 0) == doctest::Approx(h_ref).epsilon(1e-6));
  }
}

TEST_CASE("linear two-species inversion is an x-space Gaussian") {
  TwoSpeciesConfig cfg;
  cfg.A << 1.0, 0.8, 0.7, 1.0;
  const auto m = two_species_model(cfg);
  const auto inv = invert_uniform_prior(m.intervention, m.interventions);
  const Mat ainv = cfg.A.inverse();
  const Vec theta = v2(0.45, 0.6);
  const Vec center = ainv * theta;
  for (const Vec& dx : {v2(0, 0), v2(0.01, -0.005), v2(-0.02, 0.015)}) {
    const Vec x = center + dx;
    const double ref = oracle::normal_pdf(x[0], center[0], cfg.delta) * oracle::normal_pdf(x[1], center[1], cfg.delta);
    CHECK(inv.density(x, theta) == doctest::Approx(ref).epsilon(1e-6));
  }
}

TEST_CASE("unreachable parameters raise") {
  const auto inv = invert_uniform_prior(identity_channel(0.03), InterventionSet::box(Domain::unit(1)));
  try {
    (void)inv.normalization(v1(5.0));
    FAIL("expected an unreachable parameter");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnreachableParameter);
  }
}

TEST_CASE("state-dependent noise is evaluated at the mean") {
  const auto m = dimmer_model(linear_profile(), EffectNoise::weber(0.1, 1e-3), 0.01);
  const auto d = m.effect.push_forward(v1(0.4));
  CHECK(d.covariance(0, 0) == doctest::Approx(std::pow(0.1 * 0.4, 2)).epsilon(1e-14));
  const auto d0 = m.effect.push_forward(v1(0.0));
  CHECK(d0.covariance(0, 0) == doctest::Approx(std::pow(0.1 * 1e-3, 2)).epsilon(1e-14));
}

TEST_CASE("property: push_forward mean is exact and covariance is symmetric PD") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TwoSpeciesConfig cfg;
  cfg.A << 1.0, 0.8, 0.7, 1.0;
  const auto models = {two_species_model(cfg), dimmer_model(dimmer_family(2.0), EffectNoise::weber(0.05), 0.01)};
  for (const auto& m : models) {
    for (int trial = 0; trial < 50; ++trial) {
      Vec theta(m.theta.dim());
      for (int i = 0; i < theta.size(); ++i) theta[i] = u(rng);
      const auto d = m.effect.push_forward(theta);
      CHECK((d.mean - m.effect.mean(theta)).norm() == 0.0);
      CHECK((d.covariance - d.covariance.transpose()).cwiseAbs().maxCoeff() == 0.0);
      CHECK(Eigen::LLT<Mat>(d.covariance).info() == Eigen::Success);
    }
  }
}

TEST_CASE("property: finite-difference Jacobians match analytic ones") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  const auto m = two_species_model({});
  const auto fd = m.effect.with_finite_differences();
  for (int trial = 0; trial < 30; ++trial) {
    const Vec theta = v2(u(rng), u(rng));
    const Mat ja = m.effect.jacobian(theta);
    const Mat jf = fd.jacobian(theta);
    CHECK((ja - jf).norm() <= 1e-7 * ja.norm());
  }
}
