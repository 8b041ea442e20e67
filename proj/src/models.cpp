#include "cgeo/models.hpp"
#include "cgeo/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace cgeo {

namespace {

Vec scalar(double v) {
  Vec out(1);
  out[0] = v;
  return out;
}

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v))
    raise(ErrorCode::InvalidArgument, std::string(name) + " must be positive and finite");
}

// (e^{a t} - 1) / (e^a - 1) and its derivative, stable for large |a|.
DimmerProfile exp_profile(double a, std::string name) {
  DimmerProfile p;
  p.name = std::move(name);
  if (a > 0.0) {
    const double denom = -std::expm1(-a);
    p.f = [a, denom](double t) { return (std::exp(a * (t - 1.0)) - std::exp(-a)) / denom; };
    p.df = [a, denom](double t) { return a * std::exp(a * (t - 1.0)) / denom; };
  } else {
    const double denom = std::expm1(a);
    p.f = [a, denom](double t) { return std::expm1(a * t) / denom; };
    p.df = [a, denom](double t) { return a * std::exp(a * t) / denom; };
  }
  return p;
}

GaussianChannel identity_channel(double delta, const Domain& box) {
  return GaussianChannel(MeanMap::identity(box.dim()), NoiseSpec::constant(delta), box, box);
}

}  // namespace

DimmerProfile linear_profile() {
  return {"linear", [](double t) { return t; }, [](double) { return 1.0; }, std::nullopt};
}

DimmerProfile quadratic_profile() {
  return {"quadratic", [](double t) { return t * t; }, [](double t) { return 2.0 * t; }, std::nullopt};
}

DimmerProfile exponential_profile(double r) {
  require_positive(r, "exponential profile scale r");
  return exp_profile(1.0 / r, "exponential");
}

DimmerProfile dimmer_family(double a) {
  if (!(a >= -5.0 && a <= 5.0)) raise(ErrorCode::InvalidArgument, "dimmer family parameter a must lie in [-5, 5]");
  DimmerProfile p = std::abs(a) < 1e-9 ? linear_profile() : exp_profile(a, "family");
  p.name = "family";
  p.family_param = a;
  return p;
}

double EffectNoise::sigma_at(double y) const {
  return kind == Kind::Constant ? epsilon : epsilon * std::max(y, y_floor);
}

CausalModel dimmer_model(const DimmerProfile& profile, const EffectNoise& noise, double delta) {
  require_positive(delta, "delta");
  require_positive(noise.epsilon, "epsilon");
  if (noise.kind == EffectNoise::Kind::Weber) require_positive(noise.y_floor, "y_floor");
  if (!profile.f || !profile.df) raise(ErrorCode::InvalidArgument, "dimmer profile incomplete");

  const Domain unit = Domain::unit(1);
  MeanMap fm;
  fm.input_dim = 1;
  fm.output_dim = 1;
  fm.value = [f = profile.f](const Vec& t) { return scalar(f(t[0])); };
  fm.jacobian = [df = profile.df](const Vec& t) { return Mat::Constant(1, 1, df(t[0])); };

  NoiseSpec ns = noise.kind == EffectNoise::Kind::Constant
                     ? NoiseSpec::constant(noise.epsilon)
                     : NoiseSpec::state_dependent([noise](const Vec& y) { return scalar(noise.sigma_at(y[0])); });
  // theta has unbounded support, so the effect channel accepts a wider range.
  GaussianChannel effect(fm, ns, Domain::cube(1, -1.0, 2.0), unit);

  MetricField g{1, [profile, noise](const Vec& t) {
                  const double s = profile.df(t[0]) / noise.sigma_at(profile.f(t[0]));
                  return Mat::Constant(1, 1, s * s);
                }};
  return CausalModel{noise.kind == EffectNoise::Kind::Weber ? "dimmer-weber" : "dimmer",
                     InterventionSet::box(unit),
                     identity_channel(delta, unit),
                     effect,
                     g,
                     MetricField::constant(Mat::Constant(1, 1, 1.0 / (delta * delta))),
                     unit};
}

CausalModel binary_switch_model(double epsilon, double delta, const DimmerProfile& profile) {
  CausalModel m = dimmer_model(profile, EffectNoise::constant(epsilon), delta);
  m.name = "binary-switch";
  m.interventions = InterventionSet::discrete({scalar(0.0), scalar(1.0)});
  return m;
}

void TwoSpeciesConfig::validate() const {
  if (A.rows() != 2 || A.cols() != 2 || !A.allFinite())
    raise(ErrorCode::InvalidArgument, "two-species A must be a finite 2x2 matrix");
  const double scale = std::max(A.cwiseAbs().maxCoeff(), 1e-300);
  if (!(std::abs(A.determinant()) > 1e-12 * scale * scale))
    raise(ErrorCode::InvalidArgument, "two-species A is singular");
  require_positive(delta_t, "delta_t");
  if (n_points < 2) raise(ErrorCode::InvalidArgument, "two-species n_points must be >= 2");
  require_positive(epsilon, "epsilon");
  require_positive(delta, "delta");
}

CausalModel two_species_model(const TwoSpeciesConfig& cfg) {
  cfg.validate();
  const Domain theta = Domain::unit(2);
  const Mat a_inv = cfg.A.inverse();

  // Bounding box of the preimage of the unit square.
  Vec lo = Vec::Constant(2, std::numeric_limits<double>::infinity());
  Vec hi = -lo;
  for (double u : {0.0, 1.0})
    for (double v : {0.0, 1.0}) {
      Vec c(2);
      c << u, v;
      const Vec x = a_inv * c;
      lo = lo.cwiseMin(x);
      hi = hi.cwiseMax(x);
    }
  const Domain box({{lo[0], hi[0]}, {lo[1], hi[1]}});

  GaussianChannel intervention(MeanMap::from_affine(cfg.A, Vec::Zero(2)),
                               NoiseSpec::full(cfg.A * cfg.A.transpose() * (cfg.delta * cfg.delta)),
                               box, theta);

  const int n = cfg.n_points;
  const double dt = cfg.delta_t;
  MeanMap fm;
  fm.input_dim = 2;
  fm.output_dim = n;
  fm.value = [n, dt](const Vec& t) {
    Vec y(n);
    for (int k = 1; k <= n; ++k) y[k - 1] = std::exp(-k * dt * t[0]) + std::exp(-k * dt * t[1]);
    return y;
  };
  fm.jacobian = [n, dt](const Vec& t) {
    Mat j(n, 2);
    for (int k = 1; k <= n; ++k) {
      j(k - 1, 0) = -k * dt * std::exp(-k * dt * t[0]);
      j(k - 1, 1) = -k * dt * std::exp(-k * dt * t[1]);
    }
    return j;
  };
  GaussianChannel effect(fm, NoiseSpec::constant(cfg.epsilon), Domain::cube(2, -1.0, 2.0),
                         Domain::cube(n, 0.0, 2.0));
  const double e2 = cfg.epsilon * cfg.epsilon;
  MetricField g{2, [jac = fm.jacobian, e2](const Vec& t) {
                  const Mat j = jac(t);
                  return symmetrize(j.transpose() * j / e2);
                }};
  const Mat h = a_inv.transpose() * a_inv / (cfg.delta * cfg.delta);
  return CausalModel{"two-species", InterventionSet::box(box), intervention, effect, g,
                     MetricField::constant(h), theta};
}

Submanifold submanifold_A() {
  Submanifold s;
  s.k = 1;
  s.d = 2;
  s.embed = [](const Vec& sg) {
    Vec t(2);
    t << sg[0], sg[0];
    return t;
  };
  s.jacobian = [](const Vec&) {
    Mat j(2, 1);
    j << 1.0, 1.0;
    return j;
  };
  s.sigma_domain = Domain::unit(1);
  s.label = "subA";
  return s;
}

Submanifold submanifold_B() {
  Submanifold s;
  s.k = 1;
  s.d = 2;
  s.embed = [](const Vec& sg) {
    Vec t(2);
    t << sg[0], 1.0 - sg[0];
    return t;
  };
  s.jacobian = [](const Vec&) {
    Mat j(2, 1);
    j << 1.0, -1.0;
    return j;
  };
  s.sigma_domain = Domain::unit(1);
  s.label = "subB";
  return s;
}

void DecayConfounderConfig::validate() const {
  require_positive(alpha, "alpha");
  require_positive(sigma_T, "sigma_T");
  require_positive(sigma_x, "sigma_x");
  if (!std::isfinite(x_hat)) raise(ErrorCode::InvalidArgument, "x_hat must be finite");
  require_positive(epsilon, "epsilon");
  require_positive(delta_t, "delta_t");
  if (n_points < 1) raise(ErrorCode::InvalidArgument, "n_points must be >= 1");
}

namespace {

struct StatMoments {
  double fisher = 0.0;
  double mean_inv_var = 0.0;
};

// Moments of the score under the normalized statistical inverse at theta.
StatMoments stat_moments(const DecayConfounderConfig& c, double theta) {
  const double st2 = c.sigma_T * c.sigma_T;
  const double sx2 = c.sigma_x * c.sigma_x;
  auto var = [&](double x) { return c.alpha * c.alpha / (1.0 / st2 + x * x / sx2); };
  auto mean = [&](double x) { return x * (1.0 + c.x_hat * var(x) / (c.alpha * sx2)); };
  auto f = [&](double x) {
    Vec v(4);
    const double s2 = var(x);
    const double r = theta - mean(x);
    const double q = std::exp(-0.5 * r * r / s2) / std::sqrt(2.0 * std::numbers::pi * s2);
    const double score = -r / s2;
    v << q, q * score, q * score * score, q / s2;
    return v;
  };
  const double w = c.alpha * c.sigma_T;
  const double half = std::max(1.0, 200.0 * w);
  std::vector<double> bp{theta};
  for (double k : {1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0}) {
    bp.push_back(theta - k * w);
    bp.push_back(theta + k * w);
  }
  quad::AdaptiveOptions o;
  o.rel_tol = 1e-13;
  o.max_intervals = 20000;
  const Vec r = quad::integrate(f, 4, theta - half, theta + half, bp, o).value;
  if (!(r[0] > 1e-300)) raise(ErrorCode::UnreachableParameter, "statistical inverse has no mass");
  const double m1 = r[1] / r[0];
  return {r[2] / r[0] - m1 * m1, r[3] / r[0]};
}

}  // namespace

DecayConfounderMetrics decay_confounder_metrics(const DecayConfounderConfig& cfg) {
  cfg.validate();
  DecayConfounderMetrics m;
  const double hc = 1.0 / (cfg.sigma_T * cfg.sigma_T * cfg.alpha * cfg.alpha);
  m.h_caus = MetricField::constant(Mat::Constant(1, 1, hc));
  m.h_stat = MetricField{1, [cfg](const Vec& t) { return Mat::Constant(1, 1, stat_moments(cfg, t[0]).fisher); }};
  m.h_stat_series = [cfg](double theta) {
    const double ratio = cfg.sigma_T / cfg.sigma_x;
    if (ratio > 0.1) {
      std::ostringstream os;
      os << "series valid only for sigma_T/sigma_x <= 0.1 (got " << ratio << ")";
      raise(ErrorCode::RegimeViolation, os.str());
    }
    const double r4 = ratio * ratio * ratio * ratio;
    return stat_moments(cfg, theta).mean_inv_var - 3.0 * (cfg.alpha * cfg.x_hat + theta * theta) * r4;
  };
  return m;
}

CausalModel decay_confounder_model(const DecayConfounderConfig& cfg) {
  cfg.validate();
  const Domain unit = Domain::unit(1);
  const int n = cfg.n_points;
  const double dt = cfg.delta_t;
  MeanMap fm;
  fm.input_dim = 1;
  fm.output_dim = n;
  fm.value = [n, dt](const Vec& t) {
    Vec y(n);
    for (int k = 1; k <= n; ++k) y[k - 1] = std::exp(-k * dt * t[0]);
    return y;
  };
  fm.jacobian = [n, dt](const Vec& t) {
    Mat j(n, 1);
    for (int k = 1; k <= n; ++k) j(k - 1, 0) = -k * dt * std::exp(-k * dt * t[0]);
    return j;
  };
  GaussianChannel effect(fm, NoiseSpec::constant(cfg.epsilon), Domain::cube(1, -1.0, 2.0),
                         Domain::cube(n, 0.0, 1.0));
  const double e2 = cfg.epsilon * cfg.epsilon;
  MetricField g{1, [jac = fm.jacobian, e2](const Vec& t) {
                  const Mat j = jac(t);
                  return Mat(j.transpose() * j / e2);
                }};
  const double delta = cfg.alpha * cfg.sigma_T;
  return CausalModel{"decay-confounder", InterventionSet::box(unit), identity_channel(delta, unit), effect, g,
                     decay_confounder_metrics(cfg).h_caus, unit};
}

}  // namespace cgeo
