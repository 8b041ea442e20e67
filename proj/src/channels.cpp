#include "cgeo/channels.hpp"
#include "cgeo/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace cgeo {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

bool is_spd(const Mat& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if (!m.allFinite()) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff()))
    return false;
  Eigen::LLT<Mat> llt(m);
  return llt.info() == Eigen::Success;
}

}  // namespace

// ---------------------------------------------------------------- noise

NoiseSpec NoiseSpec::constant(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    raise(ErrorCode::InvalidArgument, "noise sigma must be positive and finite");
  return NoiseSpec(ConstantIsotropic{sigma});
}

NoiseSpec NoiseSpec::state_dependent(std::function<Vec(const Vec&)> sigma_at) {
  if (!sigma_at) raise(ErrorCode::InvalidArgument, "state-dependent noise needs a sigma function");
  return NoiseSpec(DiagonalStateDependent{std::move(sigma_at)});
}

NoiseSpec NoiseSpec::full(const Mat& covariance) {
  if (!is_spd(covariance))
    raise(ErrorCode::InvalidArgument, "full noise covariance must be symmetric positive definite");
  return NoiseSpec(FullConstant{covariance});
}

Mat NoiseSpec::covariance_at(const Vec& mean) const {
  const auto n = mean.size();
  if (const auto* c = std::get_if<ConstantIsotropic>(&v_)) {
    return Mat::Identity(n, n) * (c->sigma * c->sigma);
  }
  if (const auto* d = std::get_if<DiagonalStateDependent>(&v_)) {
    const Vec s = d->sigma_at(mean);
    if (s.size() != n) raise(ErrorCode::InvalidArgument, "noise sigma vector has wrong size");
    for (Eigen::Index i = 0; i < n; ++i)
      if (!(s[i] > 0.0) || !std::isfinite(s[i]))
        raise(ErrorCode::DegenerateDistribution,
              "noise sigma not positive at mean " + format_point(mean));
    return s.array().square().matrix().asDiagonal();
  }
  const auto& f = std::get<FullConstant>(v_);
  if (f.covariance.rows() != n)
    raise(ErrorCode::InvalidArgument, "noise covariance has wrong size");
  return f.covariance;
}

bool NoiseSpec::is_constant() const {
  return !std::holds_alternative<DiagonalStateDependent>(v_);
}

// ---------------------------------------------------------------- maps

MeanMap MeanMap::from_affine(const Mat& matrix, const Vec& offset) {
  if (matrix.rows() != offset.size())
    raise(ErrorCode::InvalidArgument, "affine map offset size mismatch");
  MeanMap m;
  m.input_dim = static_cast<int>(matrix.cols());
  m.output_dim = static_cast<int>(matrix.rows());
  m.value = [matrix, offset](const Vec& x) -> Vec { return matrix * x + offset; };
  m.jacobian = [matrix](const Vec&) -> Mat { return matrix; };
  m.affine = AffineMap{matrix, offset};
  return m;
}

MeanMap MeanMap::identity(int dim) {
  return from_affine(Mat::Identity(dim, dim), Vec::Zero(dim));
}

double log_density(const GaussianDistribution& dist, const Vec& p) {
  const auto d = dist.mean.size();
  if (p.size() != d || dist.covariance.rows() != d || dist.covariance.cols() != d)
    raise(ErrorCode::InvalidArgument, "log_density dimension mismatch");
  Eigen::LLT<Mat> llt(dist.covariance);
  if (llt.info() != Eigen::Success)
    raise(ErrorCode::DegenerateDistribution, "covariance is not positive definite");
  const Mat& l = llt.matrixLLT();
  double log_det_half = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(l(i, i) > 0.0)) raise(ErrorCode::DegenerateDistribution, "covariance is singular");
    log_det_half += std::log(l(i, i));
  }
  const Vec z = llt.matrixL().solve(p - dist.mean);
  return -0.5 * static_cast<double>(d) * kLog2Pi - log_det_half - 0.5 * z.squaredNorm();
}

Mat finite_difference_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x,
                               const Vec& steps) {
  const auto n = x.size();
  Mat j;
  for (Eigen::Index k = 0; k < n; ++k) {
    Vec xp = x;
    Vec xm = x;
    xp[k] += steps[k];
    xm[k] -= steps[k];
    const Vec col = (f(xp) - f(xm)) / (2.0 * steps[k]);
    if (k == 0) j.resize(col.size(), n);
    j.col(k) = col;
  }
  return j;
}

// ---------------------------------------------------------------- channel

GaussianChannel::GaussianChannel(MeanMap mean, NoiseSpec noise, Domain input, Domain output)
    : map_(std::move(mean)), noise_(std::move(noise)), in_(std::move(input)), out_(std::move(output)) {
  if (!map_.value) raise(ErrorCode::InvalidArgument, "channel needs a mean map");
  if (map_.input_dim != in_.dim() || map_.output_dim != out_.dim())
    raise(ErrorCode::InvalidArgument, "channel mean map dimensions do not match its domains");
  if (const auto* f = std::get_if<FullConstant>(&noise_.variant()))
    if (f->covariance.rows() != map_.output_dim)
      raise(ErrorCode::InvalidArgument, "noise covariance size does not match output dimension");
  fd_steps_ = 1e-5 * in_.spans();
}

GaussianDistribution GaussianChannel::push_forward(const Vec& x) const {
  if (!in_.contains(x, 1e-12))
    raise(ErrorCode::DomainViolation, "point " + format_point(x) + " outside channel input domain");
  GaussianDistribution d{mean(x), Mat()};
  d.covariance = noise_.covariance_at(d.mean);
  return d;
}

Mat GaussianChannel::jacobian(const Vec& x) const {
  if (map_.jacobian) return map_.jacobian(x);
  return finite_difference_jacobian(map_.value, x, fd_steps_);
}

GaussianChannel GaussianChannel::with_finite_differences() const {
  GaussianChannel c = *this;
  c.map_.jacobian = nullptr;
  return c;
}

// ---------------------------------------------------------------- interventions

InterventionSet InterventionSet::box(const Domain& domain) {
  InterventionSet s;
  s.box_ = domain;
  return s;
}

InterventionSet InterventionSet::discrete(std::vector<Vec> points) {
  if (points.empty()) raise(ErrorCode::InvalidArgument, "discrete intervention set is empty");
  const auto d = points.front().size();
  if (d < 1) raise(ErrorCode::InvalidArgument, "intervention points need dimension >= 1");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != d) raise(ErrorCode::InvalidArgument, "intervention points differ in dimension");
    for (std::size_t j = 0; j < i; ++j)
      if (points[i] == points[j])
        raise(ErrorCode::InvalidArgument, "duplicate intervention point " + format_point(points[i]));
  }
  InterventionSet s;
  s.points_ = std::move(points);
  return s;
}

int InterventionSet::dim() const {
  return is_box() ? box_.dim() : static_cast<int>(points_.front().size());
}

const Domain& InterventionSet::domain() const {
  if (!is_box()) raise(ErrorCode::InvalidArgument, "intervention set is discrete, not a box");
  return box_;
}

Domain InterventionSet::hull() const {
  if (is_box()) return box_;
  std::vector<Interval> axes;
  for (int k = 0; k < dim(); ++k) {
    double lo = points_.front()[k];
    double hi = lo;
    for (const auto& p : points_) {
      lo = std::min(lo, p[k]);
      hi = std::max(hi, p[k]);
    }
    if (hi == lo) {
      lo -= 0.5;
      hi += 0.5;
    }
    axes.push_back({lo, hi});
  }
  return Domain(axes);
}

// ---------------------------------------------------------------- inversion

InvertedChannel invert_uniform_prior(const GaussianChannel& ch, const InterventionSet& x_set,
                                     InversionOptions opts) {
  if (!x_set.is_box())
    raise(ErrorCode::InvalidArgument, "uniform-prior inversion needs a box intervention set");
  if (!(ch.input_domain() == x_set.domain()))
    raise(ErrorCode::InvalidArgument, "channel input domain must equal the intervention box");
  if (!(opts.normalization_floor >= 0.0) || !(opts.rel_tol > 0.0))
    raise(ErrorCode::InvalidArgument, "invalid inversion options");

  InvertedChannel inv;
  inv.ch_ = std::make_shared<const GaussianChannel>(ch);
  inv.box_ = x_set.domain();
  inv.opts_ = opts;

  const auto& map = ch.mean_map();
  if (map.affine && ch.noise().is_constant() && map.input_dim == map.output_dim) {
    const Mat& a = map.affine->matrix;
    Eigen::FullPivLU<Mat> lu(a);
    if (lu.isInvertible()) {
      const Mat a_inv = lu.inverse();
      const Mat cov = ch.noise().covariance_at(Vec::Zero(map.output_dim));
      const Mat cx = a_inv * cov * a_inv.transpose();
      bool diagonal = true;
      for (Eigen::Index i = 0; i < cx.rows(); ++i)
        for (Eigen::Index j = 0; j < cx.cols(); ++j)
          if (i != j && std::abs(cx(i, j)) > 1e-12 * std::sqrt(cx(i, i) * cx(j, j))) diagonal = false;
      if (diagonal) {
        inv.closed_form_ = true;
        inv.a_inv_ = a_inv;
        inv.x_sd_ = cx.diagonal().cwiseSqrt();
        inv.log_abs_det_inv_ = -std::log(std::abs(lu.determinant()));
      }
    }
  }

  if (!inv.closed_form_) {
    const int d = inv.box_.dim();
    const int per_axis = d == 1 ? 257 : d == 2 ? 41 : d == 3 ? 13 : 7;
    std::vector<quad::Rule> rules;
    for (int k = 0; k < d; ++k)
      rules.push_back(quad::trapezoid(per_axis, inv.box_.axis(k).lo, inv.box_.axis(k).hi));
    quad::for_each_tensor_node(rules, [&](const Vec& p, double) { inv.probes_.push_back(p); });
  }
  return inv;
}

std::vector<InvertedChannel::Mode> InvertedChannel::modes(const Vec& theta) const {
  const GaussianChannel& ch = *ch_;
  auto mahal = [&](const Vec& x) {
    const Vec m = ch.mean(x);
    Eigen::LLT<Mat> llt(ch.noise().covariance_at(m));
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    return llt.matrixL().solve(theta - m).squaredNorm();
  };

  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(probes_.size());
  for (std::size_t i = 0; i < probes_.size(); ++i) scored.emplace_back(mahal(probes_[i]), i);
  std::sort(scored.begin(), scored.end());

  const Vec spacing = box_.spans() / 16.0;
  std::vector<Vec> starts;
  for (const auto& [dist, idx] : scored) {
    if (starts.size() >= 4) break;
    const Vec& p = probes_[idx];
    bool separate = true;
    for (const auto& s : starts)
      if (((p - s).array().abs() / spacing.array()).maxCoeff() < 1.0) separate = false;
    if (separate) starts.push_back(p);
  }

  std::vector<Mode> out;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> dists;
  for (Vec x : starts) {
    double lambda = 1e-6;
    double cur = mahal(x);
    for (int it = 0; it < 40; ++it) {
      const Vec m = ch.mean(x);
      const Mat si = ch.noise().covariance_at(m).inverse();
      const Mat j = ch.jacobian(x);
      const Mat jtj = j.transpose() * si * j;
      const Vec grad = j.transpose() * si * (theta - m);
      const double scale = std::max(jtj.diagonal().maxCoeff(), 1e-300);
      const Vec step = (jtj + lambda * scale * Mat::Identity(x.size(), x.size())).ldlt().solve(grad);
      const Vec trial = box_.clamp(x + step);
      const double val = mahal(trial);
      if (val < cur) {
        const bool small = (trial - x).cwiseAbs().maxCoeff() < 1e-13 * box_.spans().maxCoeff();
        x = trial;
        cur = val;
        lambda = std::max(lambda * 0.3, 1e-12);
        if (small) break;
      } else {
        lambda *= 10.0;
        if (lambda > 1e8) break;
      }
    }
    Mode md;
    md.x = x;
    const Vec m = ch.mean(x);
    const Mat j = ch.jacobian(x);
    md.precision = j.transpose() * ch.noise().covariance_at(m).inverse() * j;
    md.usable = std::isfinite(cur);
    best = std::min(best, cur);
    dists.push_back(cur);
    out.push_back(md);
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    if (dists[i] > best + 60.0) out[i].usable = false;
  return out;
}

std::vector<double> InvertedChannel::breakpoints(const std::vector<Mode>& ms, int axis,
                                                 const Vec& prefix) const {
  std::vector<double> bp;
  const auto& iv = box_.axis(axis);
  for (const auto& md : ms) {
    if (!md.usable) continue;
    const Eigen::Index d = md.x.size();
    Mat p = md.precision;
    const double ridge = 1e-12 * std::max(p.diagonal().maxCoeff(), 1e-300);
    Mat c = (p + ridge * Mat::Identity(d, d)).inverse();
    double center = md.x[axis];
    double var = c(axis, axis);
    if (axis > 0) {
      const Mat cpp = c.topLeftCorner(axis, axis);
      const Vec cap = c.block(axis, 0, 1, axis).transpose();
      const Vec diff = prefix.head(axis) - md.x.head(axis);
      const Eigen::LDLT<Mat> ldlt(cpp);
      center += cap.dot(ldlt.solve(diff));
      var -= cap.dot(ldlt.solve(cap));
    }
    double w = std::sqrt(std::max(var, 0.0));
    if (!(w > 0.0) || !std::isfinite(w) || w > iv.span()) w = iv.span() / 16.0;
    bp.push_back(center);
    for (double k : {1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) {
      bp.push_back(center - k * w);
      bp.push_back(center + k * w);
    }
  }
  return bp;
}

double InvertedChannel::raw_normalization(const Vec& theta) const {
  if (theta.size() != dim()) raise(ErrorCode::InvalidArgument, "theta has wrong dimension");
  if (closed_form_) {
    const auto& aff = *ch_->mean_map().affine;
    const Vec z = a_inv_ * (theta - aff.offset);
    double log_mass = log_abs_det_inv_;
    for (int i = 0; i < box_.dim(); ++i) {
      const double m = quad::normal_mass((box_.axis(i).lo - z[i]) / x_sd_[i],
                                         (box_.axis(i).hi - z[i]) / x_sd_[i]);
      if (!(m > 0.0)) return 0.0;
      log_mass += std::log(m);
    }
    return std::exp(log_mass);
  }
  const auto ms = modes(theta);
  const GaussianChannel& ch = *ch_;
  auto f = [&](const Vec& x) {
    Vec v(1);
    const Vec m = ch.mean(x);
    v[0] = std::exp(cgeo::log_density(GaussianDistribution{m, ch.noise().covariance_at(m)}, theta));
    return v;
  };
  quad::AdaptiveOptions o;
  o.rel_tol = opts_.rel_tol;
  auto br = [&](int axis, const Vec& x) { return breakpoints(ms, axis, x); };
  return quad::integrate_box(f, 1, box_, br, o).value[0];
}

double InvertedChannel::normalization(const Vec& theta) const {
  const double z = raw_normalization(theta);
  if (!(z >= opts_.normalization_floor) || z == 0.0)
    raise(ErrorCode::UnreachableParameter,
          "parameter " + format_point(theta) + " is unreachable from the intervention box");
  return z;
}

double InvertedChannel::log_density(const Vec& x, const Vec& theta) const {
  const double z = normalization(theta);
  const Vec m = ch_->mean(x);
  return cgeo::log_density(GaussianDistribution{m, ch_->noise().covariance_at(m)}, theta) - std::log(z);
}

double InvertedChannel::density(const Vec& x, const Vec& theta) const {
  if (!box_.contains(x, 1e-12)) return 0.0;
  return std::exp(log_density(x, theta));
}

Mat InvertedChannel::fisher_metric(const Vec& theta) const {
  const int d = dim();
  normalization(theta);  // reachability check
  if (closed_form_) {
    // Axes of x are independent truncated normals; score = Sigma^-1 A (z - x).
    const auto& aff = *ch_->mean_map().affine;
    const Vec z = a_inv_ * (theta - aff.offset);
    Vec var(d);
    for (int i = 0; i < d; ++i) {
      const double s = x_sd_[i];
      auto mom = [&](double x) {
        Vec v(3);
        const double u = (x - z[i]) / s;
        const double p = std::exp(-0.5 * u * u);
        v << p, p * u, p * u * u;
        return v;
      };
      const auto& iv = box_.axis(i);
      std::vector<double> bp{z[i]};
      for (double k : {1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) {
        bp.push_back(z[i] - k * s);
        bp.push_back(z[i] + k * s);
      }
      quad::AdaptiveOptions o;
      o.rel_tol = 1e-12;
      const Vec r = quad::integrate(mom, 3, iv.lo, iv.hi, bp, o).value;
      const double mean = r[1] / r[0];
      var[i] = s * s * std::max(r[2] / r[0] - mean * mean, 0.0);
    }
    const Mat cov = ch_->noise().covariance_at(theta);
    const Mat b = cov.inverse() * aff.matrix;
    const Mat h = b * var.asDiagonal() * b.transpose();
    return 0.5 * (h + h.transpose());
  }

  const auto ms = modes(theta);
  const GaussianChannel& ch = *ch_;
  const int comps = 1 + d + d * (d + 1) / 2;
  auto f = [&](const Vec& x) {
    Vec v = Vec::Zero(comps);
    const Vec m = ch.mean(x);
    const Mat cov = ch.noise().covariance_at(m);
    const double q = std::exp(cgeo::log_density(GaussianDistribution{m, cov}, theta));
    if (q == 0.0) return v;
    const Vec s = cov.ldlt().solve(theta - m);
    v[0] = q;
    v.segment(1, d) = q * s;
    int k = 1 + d;
    for (int a = 0; a < d; ++a)
      for (int b = a; b < d; ++b) v[k++] = q * s[a] * s[b];
    return v;
  };
  quad::AdaptiveOptions o;
  o.rel_tol = opts_.rel_tol;
  auto br = [&](int axis, const Vec& x) { return breakpoints(ms, axis, x); };
  const Vec r = quad::integrate_box(f, comps, box_, br, o).value;
  const double z = r[0];
  const Vec mean = r.segment(1, d) / z;
  Mat h(d, d);
  int k = 1 + d;
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) {
      h(a, b) = r[k++] / z - mean[a] * mean[b];
      h(b, a) = h(a, b);
    }
  return h;
}

}  // namespace cgeo
