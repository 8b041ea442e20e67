#include <doctest.h>

#include <cgeo/geometry.hpp>
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

Mat random_spd(std::mt19937_64& rng, int d, double floor = 0.1) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat b(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) b(i, j) = n(rng);
  return b * b.transpose() + floor * Mat::Identity(d, d);
}

// Smooth bijection of the plane: a random invertible linear map plus a small tanh bend.
Diffeomorphism random_diffeo(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mat a(2, 2);
  do {
    a << 1.0 + u(rng), u(rng), u(rng), 1.0 + u(rng);
  } while (std::abs(a.determinant()) < 0.3);
  const double k = 0.15 * u(rng);
  Diffeomorphism phi;
  phi.dim = 2;
  phi.map = [a, k](const Vec& t) {
    Vec s = a * t;
    s[0] += k * std::tanh(t[1]);
    return s;
  };
  phi.jacobian = [a, k](const Vec& t) {
    Mat j = a;
    j(0, 1) += k / std::pow(std::cosh(t[1]), 2);
    return j;
  };
  return phi;
}

}  // namespace

TEST_CASE("effect metric of a linear channel") {
  const GaussianChannel ch(MeanMap::identity(1), NoiseSpec::constant(0.1), Domain::unit(1), Domain::cube(1, -1, 2));
  const auto g = effect_metric(ch);
  for (double t : {0.0, 0.3, 1.0}) CHECK(g(v1(t))(0, 0) == doctest::Approx(100.0).epsilon(1e-13));
}

TEST_CASE("effect metric of a dimmer is (f'/eps)^2") {
  const auto prof = dimmer_family(1.5);
  const auto m = dimmer_model(prof, EffectNoise::constant(0.03), 0.03);
  const auto g = effect_metric(m.effect);
  for (double t : {0.1, 0.5, 0.9}) {
    const double ref = std::pow(prof.df(t) / 0.03, 2);
    CHECK(g(v1(t))(0, 0) == doctest::Approx(ref).epsilon(1e-12));
    CHECK(m.g(v1(t))(0, 0) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("two-species effect metric is rank one on the diagonal") {
  const auto m = two_species_model({});
  for (double t : {0.1, 0.5, 0.8}) {
    const Mat g = effect_metric_at(m.effect, v2(t, t));
    Eigen::SelfAdjointEigenSolver<Mat> es(g);
    CHECK(es.eigenvalues()[0] < 1e-10 * es.eigenvalues()[1]);
  }
}

TEST_CASE("two-species effect metric matches the population-sum formula") {
  TwoSpeciesConfig cfg;
  cfg.delta_t = 0.7;
  cfg.n_points = 4;
  const auto m = two_species_model(cfg);
  const Vec t = v2(0.2, 0.65);
  Mat ref = Mat::Zero(2, 2);
  for (int n = 1; n <= cfg.n_points; ++n) {
    const double c = n * cfg.delta_t;
    const Vec dy = v2(-c * std::exp(-c * t[0]), -c * std::exp(-c * t[1]));
    ref += dy * dy.transpose() / (cfg.epsilon * cfg.epsilon);
  }
  CHECK((effect_metric_at(m.effect, t) - ref).norm() <= 1e-12 * ref.norm());
}

TEST_CASE("intervention metric examples") {
  const double delta = 0.03;
  const GaussianChannel id(MeanMap::identity(1), NoiseSpec::constant(delta), Domain::unit(1), Domain::cube(1, -1, 2));
  const auto h = intervention_metric(invert_uniform_prior(id, InterventionSet::box(Domain::unit(1))));
  CHECK(h(v1(0.5))(0, 0) == doctest::Approx(1.0 / (delta * delta)).epsilon(1e-10));

  TwoSpeciesConfig cfg;
  const auto ts = two_species_model(cfg);
  const auto h2 = intervention_metric(invert_uniform_prior(ts.intervention, ts.interventions));
  CHECK((h2(v2(0.5, 0.5)) - 1e4 * Mat::Identity(2, 2)).norm() <= 1e-6);
  CHECK((ts.h(v2(0.1, 0.9)) - 1e4 * Mat::Identity(2, 2)).norm() <= 1e-9);

  // x = F(theta) = 2 theta: the channel theta = x/2 with noise delta/2 gives h = (F'/delta)^2.
  const GaussianChannel half(MeanMap::from_affine(Mat::Constant(1, 1, 0.5), Vec::Zero(1)), NoiseSpec::constant(delta / 2),
                             Domain::unit(1), Domain::cube(1, -1, 2));
  const auto h3 = intervention_metric(invert_uniform_prior(half, InterventionSet::box(Domain::unit(1))));
  CHECK(h3(v1(0.25))(0, 0) == doctest::Approx(4.0 / (delta * delta)).epsilon(1e-10));
}

TEST_CASE("intervention metric near the boundary follows the truncated-normal oracle") {
  const double delta = 0.05;
  const GaussianChannel id(MeanMap::identity(1), NoiseSpec::constant(delta), Domain::unit(1), Domain::cube(1, -1, 2));
  const auto h = intervention_metric(invert_uniform_prior(id, InterventionSet::box(Domain::unit(1))));
  for (double t : {0.0, 0.02, 0.07, 0.98}) {
    const double ref = oracle::truncated_location_fisher(t, delta, 0.0, 1.0);
    CHECK(h(v1(t))(0, 0) == doctest::Approx(ref).epsilon(1e-8));
  }
}

TEST_CASE("mismatch examples") {
  CHECK(mismatch(Mat::Identity(2, 2), Mat::Identity(2, 2)) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  Mat h = Mat::Identity(2, 2);
  h(1, 1) = 3.0;
  CHECK(mismatch(Mat::Identity(2, 2), h) == doctest::Approx(0.5 * std::log(8.0)).epsilon(1e-14));
  const double eps = 0.03;
  CHECK(mismatch(Mat::Constant(1, 1, 1 / (eps * eps)), Mat::Constant(1, 1, 1 / (eps * eps))) ==
        doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("mismatch with singular g is infinite and singular g+h raises") {
  Mat g(2, 2);
  g << 1, 1, 1, 1;
  CHECK(mismatch(g, Mat::Identity(2, 2)) == kInfiniteMismatch);
  Mat h = Mat::Zero(2, 2);
  h(0, 0) = 1.0;
  Mat g2 = Mat::Zero(2, 2);
  g2(0, 0) = 1.0;
  try {
    (void)mismatch(g2, h);
    FAIL("expected a degenerate model");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateModel);
  }
}

TEST_CASE("causal eigenvalue examples") {
  const auto same = causal_eigenvalues(2.5 * Mat::Identity(2, 2), 2.5 * Mat::Identity(2, 2));
  CHECK(same.eigenvalues[0] == doctest::Approx(1.0));
  CHECK(same.eigenvalues[1] == doctest::Approx(1.0));
  Mat g = Mat::Identity(2, 2);
  g(0, 0) = 4.0;
  const auto r = causal_eigenvalues(g, Mat::Identity(2, 2));
  CHECK(r.eigenvalues[0] == doctest::Approx(4.0));
  CHECK(r.eigenvalues[1] == doctest::Approx(1.0));
  Mat sing = Mat::Zero(2, 2);
  sing(0, 0) = 1.0;
  try {
    (void)causal_eigenvalues(g, sing);
    FAIL("expected ill-posed interventions");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IllPosedInterventions);
  }
}

TEST_CASE("eigenvalues agree with the characteristic-polynomial oracle") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat g = random_spd(rng, 2);
    const Mat h = random_spd(rng, 2);
    const auto ref = oracle::pencil_eigenvalues_2x2(g, h);
    const auto r = causal_eigenvalues(g, h);
    CHECK(r.eigenvalues[0] == doctest::Approx(ref[0]).epsilon(1e-10));
    CHECK(r.eigenvalues[1] == doctest::Approx(ref[1]).epsilon(1e-9));
  }
}

TEST_CASE("reparameterize examples") {
  const auto g = MetricField::constant(Mat::Constant(1, 1, 3.0));
  Diffeomorphism id{1, [](const Vec& t) { return t; }, {}, Vec::Constant(1, 1e-6)};
  CHECK(reparameterize(g, id)(v1(0.3))(0, 0) == doctest::Approx(3.0).epsilon(1e-9));
  Diffeomorphism dbl{1, [](const Vec& t) { return Vec(2.0 * t); }, [](const Vec&) { return Mat::Constant(1, 1, 2.0); }, {}};
  CHECK(reparameterize(g, dbl)(v1(0.3))(0, 0) == doctest::Approx(12.0).epsilon(1e-15));
  Diffeomorphism flat{1, [](const Vec&) { return Vec::Zero(1); }, [](const Vec&) { return Mat::Zero(1, 1); }, {}};
  try {
    (void)reparameterize(g, flat)(v1(0.3));
    FAIL("expected a singular Jacobian");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingularJacobian);
  }
}

TEST_CASE("property: returned metrics are symmetric") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  TwoSpeciesConfig cfg;
  cfg.A << 1.0, 0.8, 0.7, 1.0;
  const auto m = two_species_model(cfg);
  const auto phi = random_diffeo(rng);
  const auto gr = reparameterize(m.g, phi);
  for (int trial = 0; trial < 40; ++trial) {
    const Vec t = v2(u(rng), u(rng));
    for (const Mat& x : {m.g(t), m.h(t), effect_metric_at(m.effect, t), gr(t), symmetrize(random_spd(rng, 3))})
      CHECK((x - x.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("property: pencil spectrum is invariant under reparameterization") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat g0 = random_spd(rng, 2);
    const Mat h0 = random_spd(rng, 2);
    const Mat g1 = random_spd(rng, 2);
    MetricField g{2, [=](const Vec& t) { return Mat(g0 + std::sin(t[0]) * g1 * 0.3 + 0.3 * g1); }};
    const MetricField h = MetricField::constant(h0);
    const auto phi = random_diffeo(rng);
    const Vec tp = v2(u(rng), u(rng));
    const Vec t = phi.map(tp);
    const auto before = causal_eigenvalues(g(t), h(t)).eigenvalues;
    const auto after = causal_eigenvalues(reparameterize(g, phi)(tp), reparameterize(h, phi)(tp)).eigenvalues;
    for (int i = 0; i < 2; ++i) CHECK(std::abs(after[i] - before[i]) <= 1e-8 * std::abs(before[i]));
    // The congruence itself, recomputed independently.
    const Mat j = phi.jacobian(tp);
    CHECK((reparameterize(g, phi)(tp) - oracle::congruence(g(t), j)).norm() <= 1e-12 * g(t).norm() * j.squaredNorm());
  }
}

TEST_CASE("property: mismatch equals half the sum of log(1 + 1/lambda)") {
  std::mt19937_64 rng(29);
  for (int d = 1; d <= 4; ++d)
    for (int trial = 0; trial < 25; ++trial) {
      const Mat g = random_spd(rng, d, 0.05);
      const Mat h = random_spd(rng, d, 0.05);
      double s = 0.0;
      for (double lam : causal_eigenvalues(g, h).eigenvalues) s += 0.5 * std::log1p(1.0 / lam);
      CHECK(std::abs(mismatch(g, h) - s) < 1e-10);
    }
}

TEST_CASE("property: analytic and finite-difference effect metrics agree") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  TwoSpeciesConfig cfg;
  cfg.A << 1.0, 0.8, 0.7, 1.0;
  const auto models = {two_species_model(cfg), dimmer_model(dimmer_family(-3.0), EffectNoise::constant(0.02), 0.02),
                       dimmer_model(exponential_profile(0.1), EffectNoise::weber(0.03), 0.003)};
  for (const auto& m : models) {
    const auto fd = effect_metric(m.effect.with_finite_differences());
    for (int trial = 0; trial < 20; ++trial) {
      Vec t(m.theta.dim());
      for (int i = 0; i < t.size(); ++i) t[i] = u(rng);
      const Mat a = m.g(t);
      CHECK((fd(t) - a).norm() <= 1e-4 * a.norm());
    }
  }
}
