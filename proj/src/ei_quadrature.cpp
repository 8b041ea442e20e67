#include "cgeo/ei.hpp"
#include "cgeo/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace cgeo {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNegligibleLog = -46.0;  // relative weight e^-46 ~ 1e-20

struct AxisMesh {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Merges possibly overlapping intervals.
std::vector<Interval> merge(std::vector<Interval> v) {
  std::sort(v.begin(), v.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  std::vector<Interval> out;
  for (const auto& iv : v) {
    if (!out.empty() && iv.lo <= out.back().hi)
      out.back().hi = std::max(out.back().hi, iv.hi);
    else
      out.push_back(iv);
  }
  return out;
}

// Nodes on [lo, hi] spaced at most 1/rho(t); trapezoid weights.
void march(const std::function<double(double)>& rho, const Interval& iv, AxisMesh& mesh,
           std::size_t cap) {
  std::vector<double> t{iv.lo};
  double cur = iv.lo;
  while (cur < iv.hi) {
    const double h1 = 1.0 / rho(cur);
    const double h = std::min({h1, 1.0 / rho(cur + 0.5 * h1), 1.0 / rho(std::min(cur + h1, iv.hi))});
    cur += h;
    if (cur >= iv.hi - 0.25 * h) cur = iv.hi;
    t.push_back(cur);
    if (t.size() > cap)
      raise(ErrorCode::UseMonteCarlo,
            "parameter mesh too fine for quadrature; use Monte Carlo or larger errors");
  }
  const std::size_t n = t.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double left = i == 0 ? 0.0 : t[i] - t[i - 1];
    const double right = i + 1 == n ? 0.0 : t[i + 1] - t[i];
    mesh.nodes.push_back(t[i]);
    mesh.weights.push_back(0.5 * (left + right));
  }
}

std::vector<quad::Rule> x_rules(const Domain& box, const QuadratureSpec& q) {
  std::vector<quad::Rule> rules;
  for (int k = 0; k < box.dim(); ++k) {
    const auto& iv = box.axis(k);
    rules.push_back(q.rule == QuadRule::GaussLegendre ? quad::gauss_legendre(q.nodes_per_axis, iv.lo, iv.hi)
                                                       : quad::trapezoid(q.nodes_per_axis, iv.lo, iv.hi));
  }
  return rules;
}

struct Mixture {
  std::vector<std::size_t> idx;
  std::vector<double> log_w;
};

}  // namespace

struct ComposedChannel::Impl {
  InterventionSet xs;
  GaussianChannel q;
  GaussianChannel p;
  QuadratureSpec spec;
  int dth = 0;
  int dy = 0;
  std::vector<AxisMesh> axes;
  std::size_t n_nodes = 0;

  // Per mesh node.
  std::vector<double> log_w;      // ln of tensor trapezoid weight
  std::vector<Vec> theta;
  std::vector<Vec> f;             // effect mean
  std::vector<Mat> linv;          // inverse Cholesky factor of effect covariance
  std::vector<double> log_norm;   // Gaussian normalization
  std::vector<Vec> sd;            // per-axis effect sd

  // E_D mixture, sorted by the first effect coordinate.
  std::vector<std::size_t> ed_idx;
  std::vector<double> ed_log_b;
  std::vector<double> ed_key;
  double ed_radius = 0.0;

  Impl(const InterventionSet& x_set, const GaussianChannel& qx, const GaussianChannel& py,
       const QuadratureSpec& s)
      : xs(x_set), q(qx), p(py), spec(s) {
    spec.validate();
    dth = q.output_dim();
    dy = p.output_dim();
    if (p.input_dim() != dth) raise(ErrorCode::InvalidArgument, "channel dimensions do not chain");
    if (xs.dim() != q.input_dim())
      raise(ErrorCode::InvalidArgument, "intervention set dimension does not match the channel");
    build_mesh();
    build_nodes();
    build_effect_distribution();
  }

  double tails() const { return spec.effect_tail_sigmas; }

  std::vector<Vec> probe_interventions() const {
    if (!xs.is_box()) return xs.points();
    const int dx = xs.dim();
    const int per = dx == 1 ? 401 : dx == 2 ? 65 : 17;
    std::vector<quad::Rule> rules;
    for (int k = 0; k < dx; ++k)
      rules.push_back(quad::trapezoid(per, xs.domain().axis(k).lo, xs.domain().axis(k).hi));
    std::vector<Vec> out;
    quad::for_each_tensor_node(rules, [&](const Vec& x, double) { out.push_back(x); });
    return out;
  }

  void build_mesh() {
    const auto probes = probe_interventions();
    const double t = tails();
    std::vector<std::vector<Interval>> cover(static_cast<std::size_t>(dth));
    Vec min_sd = Vec::Constant(dth, std::numeric_limits<double>::infinity());
    Vec max_sd = Vec::Zero(dth);
    for (const auto& x : probes) {
      const Vec m = q.mean(x);
      const Mat c = q.covariance(x);
      for (int k = 0; k < dth; ++k) {
        const double s = std::sqrt(c(k, k));
        if (!(s > 0.0)) raise(ErrorCode::DegenerateDistribution, "intervention noise vanishes");
        min_sd[k] = std::min(min_sd[k], s);
        max_sd[k] = std::max(max_sd[k], s);
        cover[static_cast<std::size_t>(k)].push_back({m[k] - t * s, m[k] + t * s});
      }
    }
    std::vector<std::vector<Interval>> spans(static_cast<std::size_t>(dth));
    for (int k = 0; k < dth; ++k) {
      auto& c = cover[static_cast<std::size_t>(k)];
      if (xs.is_box()) {
        double lo = c.front().lo;
        double hi = c.front().hi;
        for (const auto& iv : c) {
          lo = std::min(lo, iv.lo);
          hi = std::max(hi, iv.hi);
        }
        spans[static_cast<std::size_t>(k)] = {{lo - max_sd[k], hi + max_sd[k]}};
      } else {
        spans[static_cast<std::size_t>(k)] = merge(c);
      }
    }

    // Probe coordinates for the axes not being marched.
    std::vector<std::vector<double>> others(static_cast<std::size_t>(dth));
    for (int k = 0; k < dth; ++k)
      for (const auto& iv : spans[static_cast<std::size_t>(k)]) {
        const auto r = quad::trapezoid(dth == 1 ? 2 : 17, iv.lo, iv.hi);
        others[static_cast<std::size_t>(k)].insert(others[static_cast<std::size_t>(k)].end(),
                                                   r.nodes.begin(), r.nodes.end());
      }

    const double per_sigma = std::max(2.0, spec.nodes_per_axis / 67.0);
    const std::size_t cap = dth == 1 ? 2000000 : dth == 2 ? 4000 : 400;
    axes.assign(static_cast<std::size_t>(dth), AxisMesh{});
    for (int k = 0; k < dth; ++k) {
      const double prior_prec = 1.0 / (min_sd[k] * min_sd[k]);
      auto rho = [&](double tk) {
        double gmax = 0.0;
        if (dth == 1) {
          Vec th(1);
          th[0] = tk;
          gmax = effect_metric_at(p, th)(0, 0);
        } else {
          // Max of g_kk over a probe grid of the remaining coordinates.
          std::vector<quad::Rule> rules;
          for (int j = 0; j < dth; ++j) {
            quad::Rule r;
            if (j == k) {
              r.nodes = {tk};
              r.weights = {1.0};
            } else {
              r.nodes = others[static_cast<std::size_t>(j)];
              r.weights.assign(r.nodes.size(), 1.0);
            }
            rules.push_back(std::move(r));
          }
          quad::for_each_tensor_node(rules, [&](const Vec& th, double) {
            gmax = std::max(gmax, effect_metric_at(p, th)(k, k));
          });
        }
        const double r = per_sigma * std::sqrt(prior_prec + gmax);
        if (!std::isfinite(r)) raise(ErrorCode::Numeric, "non-finite effect metric while meshing");
        return std::max(r, 64.0);
      };
      for (const auto& iv : spans[static_cast<std::size_t>(k)])
        march(rho, iv, axes[static_cast<std::size_t>(k)], cap);
    }
    n_nodes = 1;
    for (const auto& a : axes) n_nodes *= a.nodes.size();
    if (n_nodes > 4000000)
      raise(ErrorCode::UseMonteCarlo, "parameter mesh too large for quadrature; use Monte Carlo");
  }

  void node_coords(std::size_t flat, Vec& th, double& lw) const {
    th.resize(dth);
    lw = 0.0;
    for (int k = dth - 1; k >= 0; --k) {
      const auto& a = axes[static_cast<std::size_t>(k)];
      const std::size_t i = flat % a.nodes.size();
      flat /= a.nodes.size();
      th[k] = a.nodes[i];
      lw += std::log(a.weights[i]);
    }
  }

  void build_nodes() {
    log_w.resize(n_nodes);
    theta.resize(n_nodes);
    f.resize(n_nodes);
    linv.resize(n_nodes);
    log_norm.resize(n_nodes);
    sd.resize(n_nodes);
    parallel_for(n_nodes, spec.threads, [&](std::size_t i) {
      node_coords(i, theta[i], log_w[i]);
      f[i] = p.mean(theta[i]);
      const Mat c = p.noise().covariance_at(f[i]);
      Eigen::LLT<Mat> llt(c);
      if (llt.info() != Eigen::Success)
        raise(ErrorCode::DegenerateDistribution,
              "effect covariance not positive definite at " + format_point(theta[i]));
      const Mat l = llt.matrixL();
      linv[i] = l.triangularView<Eigen::Lower>().solve(Mat::Identity(dy, dy));
      log_norm[i] = -0.5 * dy * kLog2Pi - l.diagonal().array().log().sum();
      sd[i] = c.diagonal().cwiseSqrt();
    });
  }

  double log_p(std::size_t k, const Vec& y) const {
    if (dy == 1) {
      const double z = (y[0] - f[k][0]) * linv[k](0, 0);
      return log_norm[k] - 0.5 * z * z;
    }
    return log_norm[k] - 0.5 * (linv[k] * (y - f[k])).squaredNorm();
  }

  // Weights a_k(x) of the theta mixture for one intervention.
  Mixture mixture_given(const Vec& x) const {
    const Vec m = q.mean(x);
    const Mat c = q.covariance(x);
    Eigen::LLT<Mat> llt(c);
    if (llt.info() != Eigen::Success)
      raise(ErrorCode::DegenerateDistribution, "intervention covariance singular at " + format_point(x));
    const Mat l = llt.matrixL();
    const double ln_norm = -0.5 * dth * kLog2Pi - l.diagonal().array().log().sum();
    const double reach = tails() + 2.0;

    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    std::vector<std::size_t> strides(static_cast<std::size_t>(dth), 1);
    for (int k = dth - 2; k >= 0; --k)
      strides[static_cast<std::size_t>(k)] =
          strides[static_cast<std::size_t>(k) + 1] * axes[static_cast<std::size_t>(k) + 1].nodes.size();
    for (int k = 0; k < dth; ++k) {
      const auto& nodes = axes[static_cast<std::size_t>(k)].nodes;
      const double s = std::sqrt(c(k, k));
      const auto lo = std::lower_bound(nodes.begin(), nodes.end(), m[k] - reach * s) - nodes.begin();
      const auto hi = std::upper_bound(nodes.begin(), nodes.end(), m[k] + reach * s) - nodes.begin();
      ranges.emplace_back(static_cast<std::size_t>(lo), static_cast<std::size_t>(hi));
    }

    Mixture mix;
    std::vector<std::size_t> cursor(static_cast<std::size_t>(dth));
    for (int k = 0; k < dth; ++k) {
      if (ranges[static_cast<std::size_t>(k)].first >= ranges[static_cast<std::size_t>(k)].second)
        raise(ErrorCode::Numeric, "parameter mesh misses the intervention at " + format_point(x));
      cursor[static_cast<std::size_t>(k)] = ranges[static_cast<std::size_t>(k)].first;
    }
    for (;;) {
      std::size_t flat = 0;
      for (int k = 0; k < dth; ++k) flat += cursor[static_cast<std::size_t>(k)] * strides[static_cast<std::size_t>(k)];
      const double z2 = l.triangularView<Eigen::Lower>().solve(theta[flat] - m).squaredNorm();
      mix.idx.push_back(flat);
      mix.log_w.push_back(ln_norm - 0.5 * z2 + log_w[flat]);
      int k = dth - 1;
      while (k >= 0) {
        auto& cur = cursor[static_cast<std::size_t>(k)];
        if (++cur < ranges[static_cast<std::size_t>(k)].second) break;
        cur = ranges[static_cast<std::size_t>(k)].first;
        --k;
      }
      if (k < 0) break;
    }
    const double total = quad::log_sum_exp(mix.log_w);
    if (!std::isfinite(total))
      raise(ErrorCode::Numeric, "intervention mixture vanished at " + format_point(x));
    Mixture kept;
    for (std::size_t i = 0; i < mix.idx.size(); ++i) {
      const double lw = mix.log_w[i] - total;
      if (lw > kNegligibleLog - 14.0) {
        kept.idx.push_back(mix.idx[i]);
        kept.log_w.push_back(lw);
      }
    }
    // Renormalize after dropping negligible tails.
    const double t2 = quad::log_sum_exp(kept.log_w);
    for (double& v : kept.log_w) v -= t2;
    return kept;
  }

  void build_effect_distribution() {
    std::vector<double> log_b(n_nodes, -std::numeric_limits<double>::infinity());
    if (xs.is_box()) {
      const InvertedChannel inv = invert_uniform_prior(q, xs);
      parallel_for(n_nodes, spec.threads, [&](std::size_t i) {
        const double z = inv.raw_normalization(theta[i]);
        if (z > 0.0) log_b[i] = std::log(z) + log_w[i];
      });
    } else {
      const double lk = -std::log(static_cast<double>(xs.points().size()));
      for (const auto& x : xs.points()) {
        const Mixture m = mixture_given(x);
        for (std::size_t i = 0; i < m.idx.size(); ++i) {
          double& b = log_b[m.idx[i]];
          const double add = m.log_w[i] + lk;
          b = std::isinf(b) ? add : std::max(b, add) + std::log1p(std::exp(-std::abs(b - add)));
        }
      }
    }
    const double total = quad::log_sum_exp(log_b);
    if (!std::isfinite(total)) raise(ErrorCode::Numeric, "effect distribution has no mass");
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < n_nodes; ++i)
      if (log_b[i] - total > kNegligibleLog - 14.0) order.push_back(i);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return f[a][0] < f[b][0]; });
    double t2 = 0.0;
    {
      std::vector<double> kept;
      for (auto i : order) kept.push_back(log_b[i]);
      t2 = quad::log_sum_exp(kept);
    }
    double max_sd0 = 0.0;
    for (auto i : order) {
      ed_idx.push_back(i);
      ed_log_b.push_back(log_b[i] - t2);
      ed_key.push_back(f[i][0]);
      max_sd0 = std::max(max_sd0, sd[i][0]);
    }
    ed_radius = 40.0 * max_sd0;
  }

  double log_mixture(const std::vector<std::size_t>& idx, const std::vector<double>& lw,
                     std::size_t begin, std::size_t end, const Vec& y) const {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += std::exp(lw[i] + log_p(idx[i], y));
    if (s > 1e-280 && std::isfinite(s)) return std::log(s);
    std::vector<double> terms;
    terms.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) terms.push_back(lw[i] + log_p(idx[i], y));
    return quad::log_sum_exp(terms);
  }

  double log_given(const Mixture& m, const Vec& y) const {
    return log_mixture(m.idx, m.log_w, 0, m.idx.size(), y);
  }

  double log_ed(const Vec& y) const {
    const auto lo = static_cast<std::size_t>(
        std::lower_bound(ed_key.begin(), ed_key.end(), y[0] - ed_radius) - ed_key.begin());
    const auto hi = static_cast<std::size_t>(
        std::upper_bound(ed_key.begin(), ed_key.end(), y[0] + ed_radius) - ed_key.begin());
    if (lo < hi) {
      const double v = log_mixture(ed_idx, ed_log_b, lo, hi, y);
      if (std::isfinite(v)) return v;
    }
    return log_mixture(ed_idx, ed_log_b, 0, ed_idx.size(), y);
  }

  Domain window_of(const std::vector<std::size_t>& idx, const std::vector<double>& lw) const {
    const double mx = *std::max_element(lw.begin(), lw.end());
    std::vector<Interval> ax(static_cast<std::size_t>(dy),
                             Interval{std::numeric_limits<double>::infinity(),
                                      -std::numeric_limits<double>::infinity()});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (lw[i] < mx + kNegligibleLog) continue;
      const auto k = idx[i];
      for (int a = 0; a < dy; ++a) {
        auto& iv = ax[static_cast<std::size_t>(a)];
        iv.lo = std::min(iv.lo, f[k][a] - tails() * sd[k][a]);
        iv.hi = std::max(iv.hi, f[k][a] + tails() * sd[k][a]);
      }
    }
    return Domain(ax);
  }
};

ComposedChannel::ComposedChannel(const InterventionSet& x_set, const GaussianChannel& ch_xtheta,
                                 const GaussianChannel& ch_thetay, const QuadratureSpec& spec)
    : impl_(std::make_unique<Impl>(x_set, ch_xtheta, ch_thetay, spec)) {}
ComposedChannel::~ComposedChannel() = default;
ComposedChannel::ComposedChannel(ComposedChannel&&) noexcept = default;
ComposedChannel& ComposedChannel::operator=(ComposedChannel&&) noexcept = default;

double ComposedChannel::log_effect_given(const Vec& x, const Vec& y) const {
  return impl_->log_given(impl_->mixture_given(x), y);
}

double ComposedChannel::log_effect_distribution(const Vec& y) const { return impl_->log_ed(y); }

Domain ComposedChannel::effect_window_given(const Vec& x) const {
  const Mixture m = impl_->mixture_given(x);
  return impl_->window_of(m.idx, m.log_w);
}

Domain ComposedChannel::effect_window() const {
  return impl_->window_of(impl_->ed_idx, impl_->ed_log_b);
}

std::size_t ComposedChannel::mesh_size() const { return impl_->n_nodes; }
int ComposedChannel::y_dim() const { return impl_->dy; }
const InterventionSet& ComposedChannel::interventions() const { return impl_->xs; }

DensityEstimate effect_distribution(std::shared_ptr<const ComposedChannel> comp) {
  if (!comp) raise(ErrorCode::InvalidArgument, "effect_distribution needs a composed channel");
  return DensityEstimate{std::move(comp)};
}

double ComposedChannel::divergence_given(const Vec& x) const {
  const Impl& im = *impl_;
  const Mixture m = im.mixture_given(x);
  const Domain win = im.window_of(m.idx, m.log_w);
  std::vector<quad::Rule> rules;
  for (int a = 0; a < im.dy; ++a) {
    const auto& iv = win.axis(a);
    rules.push_back(im.spec.rule == QuadRule::GaussLegendre
                        ? quad::gauss_legendre(im.spec.nodes_per_axis, iv.lo, iv.hi)
                        : quad::trapezoid(im.spec.nodes_per_axis, iv.lo, iv.hi));
  }
  double kl = 0.0;
  quad::for_each_tensor_node(rules, [&](const Vec& y, double w) {
    const double lp = im.log_given(m, y);
    if (!std::isfinite(lp)) return;
    const double le = im.log_ed(y);
    kl += w * std::exp(lp) * (lp - le);
  });
  return kl;
}

namespace {

double exact_quadrature_core(const InterventionSet& x_set, const GaussianChannel& qx,
                             const GaussianChannel& py, const QuadratureSpec& spec,
                             std::size_t& mesh) {
  const ComposedChannel comp(x_set, qx, py, spec);
  mesh = comp.mesh_size();
  std::vector<Vec> xs;
  std::vector<double> wx;
  if (x_set.is_box()) {
    const Domain& box = x_set.domain();
    const double vol = box.volume();
    quad::for_each_tensor_node(x_rules(box, spec), [&](const Vec& x, double w) {
      xs.push_back(x);
      wx.push_back(w / vol);
    });
  } else {
    xs = x_set.points();
    wx.assign(xs.size(), 1.0 / static_cast<double>(xs.size()));
  }
  std::vector<double> kl(xs.size(), 0.0);
  parallel_for(xs.size(), spec.threads, [&](std::size_t i) {
    try {
      kl[i] = comp.divergence_given(xs[i]);
    } catch (const Error& e) {
      raise(e.code(), std::string(e.what()) + " (intervention " + format_point(xs[i]) + ")");
    }
    if (!std::isfinite(kl[i]))
      raise(ErrorCode::Numeric, "non-finite divergence at intervention " + format_point(xs[i]));
  });
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) total += wx[i] * kl[i];
  return total;
}

std::string rule_tag(const QuadratureSpec& q) {
  return (q.rule == QuadRule::GaussLegendre ? "GL" : "TR") + std::to_string(q.nodes_per_axis);
}

}  // namespace

EIReport ei_exact_quadrature(const InterventionSet& x_set, const GaussianChannel& ch_xtheta,
                             const GaussianChannel& ch_thetay, const QuadratureSpec& q) {
  q.validate();
  const int dx = x_set.dim();
  const int dy = ch_thetay.output_dim();
  if (dx + dy > 4)
    raise(ErrorCode::UseMonteCarlo, "tensor quadrature limited to dim(x) + dim(y) <= 4 (got " +
                                        std::to_string(dx + dy) + "); use Monte Carlo");
  std::size_t mesh = 0;
  EIReport r;
  r.method = EIMethod::Quadrature;
  r.nats = exact_quadrature_core(x_set, ch_xtheta, ch_thetay, q, mesh);
  if (r.nats < -1e-6) {
    std::ostringstream os;
    os.precision(17);
    os << "quadrature produced negative EI " << r.nats << "; increase nodes_per_axis";
    raise(ErrorCode::Numeric, os.str());
  }
  if (q.check_convergence) {
    QuadratureSpec fine = q;
    fine.nodes_per_axis = 2 * q.nodes_per_axis;
    std::size_t fine_mesh = 0;
    const double refined = exact_quadrature_core(x_set, ch_xtheta, ch_thetay, fine, fine_mesh);
    r.convergence_delta = std::abs(refined - r.nats);
    r.unconverged = *r.convergence_delta > 1e-3;
  }
  r.bits = nats_to_bits(r.nats);
  r.grid = (x_set.is_box() ? "x:" + rule_tag(q) : "x:discrete" + std::to_string(x_set.points().size())) +
           " y:" + rule_tag(q) + " theta-mesh:" + std::to_string(mesh);
  return r;
}

}  // namespace cgeo
