#include "cgeo/ei.hpp"
#include "cgeo/parallel.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace cgeo {

namespace {

const double kLog2PiE = std::log(2.0 * std::numbers::pi * std::numbers::e);

}  // namespace

const char* method_name(EIMethod m) noexcept {
  switch (m) {
    case EIMethod::Quadrature: return "quadrature";
    case EIMethod::MonteCarlo: return "monte-carlo";
    case EIMethod::Geometric: return "geometric";
    case EIMethod::DimmerApprox: return "dimmer-approx";
  }
  return "unknown";
}

void QuadratureSpec::validate() const {
  if (nodes_per_axis < 21) raise(ErrorCode::InvalidArgument, "quadrature nodes_per_axis must be >= 21");
  if (!(effect_tail_sigmas >= 4.0))
    raise(ErrorCode::InvalidArgument, "quadrature effect_tail_sigmas must be >= 4");
  if (threads < 0) raise(ErrorCode::InvalidArgument, "threads must be >= 0");
}

void GridSpec::validate() const {
  if (nodes_per_axis < 2) raise(ErrorCode::InvalidArgument, "grid nodes_per_axis must be >= 2");
  if (threads < 0) raise(ErrorCode::InvalidArgument, "threads must be >= 0");
}

void MonteCarloSpec::validate() const {
  if (outer_samples < 1 || inner_samples < 1)
    raise(ErrorCode::InvalidArgument, "Monte Carlo sample counts must be positive");
  if (batches < 2 || batches > outer_samples)
    raise(ErrorCode::InvalidArgument, "Monte Carlo batches must lie in [2, outer_samples]");
  if (threads < 0) raise(ErrorCode::InvalidArgument, "threads must be >= 0");
}

std::vector<quad::Rule> staggered_midpoint_rules(const Domain& box, int nodes_per_axis) {
  if (nodes_per_axis < 2) raise(ErrorCode::InvalidArgument, "grid nodes_per_axis must be >= 2");
  const int m = nodes_per_axis + (nodes_per_axis % 2);
  std::vector<quad::Rule> rules;
  for (int k = 0; k < box.dim(); ++k)
    rules.push_back(quad::midpoint(m + k, box.axis(k).lo, box.axis(k).hi));
  return rules;
}

namespace {

struct FieldSums {
  double volume = 0.0;
  double weighted_l = 0.0;
  bool infinite = false;
  std::size_t nodes = 0;
};

FieldSums integrate_fields(const MetricField* g, const MetricField& h, const Domain& theta,
                           const GridSpec& grid) {
  grid.validate();
  if (theta.dim() != h.dim || (g && g->dim != h.dim))
    raise(ErrorCode::InvalidArgument, "metric field dimension does not match the parameter domain");
  const auto rules = staggered_midpoint_rules(theta, grid.nodes_per_axis);
  const std::size_t n = quad::tensor_size(rules);
  std::vector<double> root_det(n, 0.0);
  std::vector<double> ell(n, 0.0);

  const std::size_t chunk = 256;
  const std::size_t chunks = (n + chunk - 1) / chunk;
  parallel_for(chunks, grid.threads, [&](std::size_t c) {
    Vec p;
    double w = 0.0;
    for (std::size_t i = c * chunk; i < std::min(n, (c + 1) * chunk); ++i) {
      quad::tensor_node(rules, i, p, w);
      const Mat hm = h(p);
      const auto ld = log_det_spd(hm);
      if (!ld)
        raise(ErrorCode::IllPosedInterventions,
              "intervention metric not positive definite at grid node " + format_point(p));
      root_det[i] = w * std::exp(0.5 * *ld);
      if (g) {
        try {
          ell[i] = mismatch((*g)(p), hm);
        } catch (const Error& e) {
          raise(e.code(), std::string(e.what()) + " at grid node " + format_point(p));
        }
      }
    }
  });

  FieldSums s;
  s.nodes = n;
  for (std::size_t i = 0; i < n; ++i) {
    s.volume += root_det[i];
    if (std::isinf(ell[i]))
      s.infinite = true;
    else
      s.weighted_l += root_det[i] * ell[i];
  }
  return s;
}

std::string grid_descriptor(const Domain& theta, int nodes) {
  const auto rules = staggered_midpoint_rules(theta, nodes);
  std::ostringstream os;
  os << "midpoint:";
  for (std::size_t k = 0; k < rules.size(); ++k) os << (k ? "x" : "") << rules[k].size();
  return os.str();
}

}  // namespace

EIReport ei_geometric(const MetricField& g, const MetricField& h, const Domain& theta,
                      const GridSpec& grid) {
  const FieldSums s = integrate_fields(&g, h, theta, grid);
  const double d = theta.dim();
  EIReport r;
  r.method = EIMethod::Geometric;
  r.volume_term = std::log(s.volume) - 0.5 * d * kLog2PiE;
  r.mean_mismatch = s.infinite ? std::numeric_limits<double>::infinity() : s.weighted_l / s.volume;
  r.nats = *r.volume_term - *r.mean_mismatch;
  r.bits = nats_to_bits(r.nats);
  r.negative_geometric = r.nats < 0.0;
  r.grid = grid_descriptor(theta, grid.nodes_per_axis);
  return r;
}

double intervention_volume(const MetricField& h, const Domain& theta, const GridSpec& grid) {
  return integrate_fields(nullptr, h, theta, grid).volume;
}

EIReport ei_dimmer_approx(const Profile1D& f, const std::function<double(double)>& eps_of_y,
                          double delta, const Domain& theta, int nodes) {
  if (theta.dim() != 1) raise(ErrorCode::InvalidArgument, "dimmer approximation is one-dimensional");
  if (!(delta > 0.0)) raise(ErrorCode::InvalidArgument, "delta must be positive");
  if (!f.f || !f.df || !eps_of_y) raise(ErrorCode::InvalidArgument, "dimmer profile incomplete");
  const auto& iv = theta.axis(0);
  const quad::Rule rule = quad::gauss_legendre(nodes, iv.lo, iv.hi);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const double t = rule.nodes[i];
    const double slope = f.df(t);
    if (!(slope > 0.0) || !std::isfinite(slope)) {
      std::ostringstream os;
      os.precision(17);
      os << "profile derivative not positive at theta = " << t;
      raise(ErrorCode::DegenerateProfile, os.str());
    }
    const double e = eps_of_y(f.f(t)) / slope;
    acc += rule.weights[i] * std::log(2.0 * std::numbers::pi * std::numbers::e * (e * e + delta * delta));
  }
  const double len = iv.span();
  EIReport r;
  r.method = EIMethod::DimmerApprox;
  r.nats = std::log(len) - 0.5 * acc / len;
  r.bits = nats_to_bits(r.nats);
  r.grid = "GL" + std::to_string(nodes);
  return r;
}

}  // namespace cgeo
