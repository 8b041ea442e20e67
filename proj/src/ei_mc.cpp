#include "cgeo/ei.hpp"
#include "cgeo/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

namespace cgeo {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNu = 5.0;
constexpr double kInflate = 1.2;

double gauss_log_pdf(const Vec& v, const Vec& mean, const Eigen::LLT<Mat>& llt) {
  const Mat& l = llt.matrixLLT();
  const double half_log_det = l.diagonal().array().log().sum();
  const Vec z = llt.matrixL().solve(v - mean);
  return -0.5 * static_cast<double>(v.size()) * kLog2Pi - half_log_det - 0.5 * z.squaredNorm();
}

double lse2(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Student-t proposal centred on a mode; precision-parameterized.
struct TComponent {
  Vec mean;
  Mat chol_prec;  // lower factor of the scaled precision
  double log_const = 0.0;

  TComponent(const Vec& m, const Mat& precision) : mean(m) {
    const auto d = static_cast<double>(m.size());
    const Mat scaled = precision / (kInflate * kInflate);
    Eigen::LLT<Mat> llt(scaled);
    if (llt.info() != Eigen::Success) raise(ErrorCode::Numeric, "proposal precision not positive definite");
    chol_prec = llt.matrixL();
    log_const = std::lgamma(0.5 * (kNu + d)) - std::lgamma(0.5 * kNu) - 0.5 * d * std::log(kNu * std::numbers::pi) +
                chol_prec.diagonal().array().log().sum();
  }

  double log_pdf(const Vec& t) const {
    const auto d = static_cast<double>(t.size());
    const double q = (chol_prec.transpose() * (t - mean)).squaredNorm();
    return log_const - 0.5 * (kNu + d) * std::log1p(q / kNu);
  }

  template <class Rng>
  Vec sample(Rng& rng) const {
    std::normal_distribution<double> n01;
    std::gamma_distribution<double> chi(0.5 * kNu, 2.0);
    Vec z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = n01(rng);
    const double scale = std::sqrt(kNu / chi(rng));
    return mean + chol_prec.transpose().triangularView<Eigen::Upper>().solve(z) * scale;
  }
};

class Estimator {
 public:
  Estimator(const InterventionSet& xs, const GaussianChannel& q, const GaussianChannel& p,
            const MonteCarloSpec& spec)
      : xs_(xs), q_(q), p_(p), spec_(spec), dth_(q.output_dim()) {
    if (p.input_dim() != dth_) raise(ErrorCode::InvalidArgument, "channel dimensions do not chain");
    if (xs.dim() != q.input_dim())
      raise(ErrorCode::InvalidArgument, "intervention set dimension does not match the channel");
    if (xs_.is_box()) {
      inv_.emplace(invert_uniform_prior(q_, xs_));
      log_volume_ = std::log(xs_.domain().volume());
      setup_box_anchors();
    } else {
      for (const auto& x : xs_.points()) {
        const Vec m = q_.mean(x);
        Eigen::LLT<Mat> llt(q_.covariance(x));
        if (llt.info() != Eigen::Success)
          raise(ErrorCode::DegenerateDistribution, "intervention covariance singular at " + format_point(x));
        point_means_.push_back(m);
        point_llt_.push_back(llt);
        anchors_.push_back(m);
        anchor_reg_.push_back(q_.covariance(x).inverse());
      }
      log_k_ = std::log(static_cast<double>(xs_.points().size()));
    }
  }

  template <class Rng>
  double sample_once(Rng& rng) const {
    const Vec x = draw_x(rng);
    const Vec mq = q_.mean(x);
    const Mat cq = q_.covariance(x);
    Eigen::LLT<Mat> q_llt(cq);
    if (q_llt.info() != Eigen::Success)
      raise(ErrorCode::DegenerateDistribution, "intervention covariance singular at " + format_point(x));
    const Vec theta = draw_gauss(mq, q_llt, rng);
    const Vec fy = p_.mean(theta);
    Eigen::LLT<Mat> e_llt(p_.noise().covariance_at(fy));
    if (e_llt.info() != Eigen::Success)
      raise(ErrorCode::DegenerateDistribution, "effect covariance singular at " + format_point(theta));
    const Vec y = draw_gauss(fy, e_llt, rng);

    const Mat prior_prec = cq.inverse();
    Vec post_mode;
    Mat post_prec;
    const double lp = log_effect_given(y, mq, q_llt, prior_prec, rng, post_mode, post_prec);
    const double le = log_effect_distribution(y, post_mode, rng);
    return lp - le;
  }

 private:
  template <class Rng>
  Vec draw_x(Rng& rng) const {
    if (xs_.is_box()) {
      const Domain& b = xs_.domain();
      Vec x(b.dim());
      for (int k = 0; k < b.dim(); ++k) {
        std::uniform_real_distribution<double> u(b.axis(k).lo, b.axis(k).hi);
        x[k] = u(rng);
      }
      return x;
    }
    std::uniform_int_distribution<std::size_t> pick(0, xs_.points().size() - 1);
    return xs_.points()[pick(rng)];
  }

  template <class Rng>
  static Vec draw_gauss(const Vec& mean, const Eigen::LLT<Mat>& llt, Rng& rng) {
    std::normal_distribution<double> n01;
    Vec z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = n01(rng);
    return mean + llt.matrixL() * z;
  }

  double log_p(const Vec& y, const Vec& theta) const {
    const Vec f = p_.mean(theta);
    Eigen::LLT<Mat> llt(p_.noise().covariance_at(f));
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    return gauss_log_pdf(y, f, llt);
  }

  // log of the theta marginal under uniform interventions.
  double log_w(const Vec& theta) const {
    if (inv_) {
      const double z = inv_->raw_normalization(theta);
      return z > 0.0 ? std::log(z) - log_volume_ : -std::numeric_limits<double>::infinity();
    }
    double acc = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < point_means_.size(); ++j)
      acc = lse2(acc, gauss_log_pdf(theta, point_means_[j], point_llt_[j]));
    return acc - log_k_;
  }

  template <class Rng>
  Vec draw_w(Rng& rng) const {
    const Vec x = draw_x(rng);
    Eigen::LLT<Mat> llt(q_.covariance(x));
    return draw_gauss(q_.mean(x), llt, rng);
  }

  // Minimizes r^T E^-1 r / 2 + (t - c)^T reg (t - c) / 2 by damped Gauss-Newton.
  std::pair<Vec, double> fit(const Vec& y, const Vec& start, const Vec& c, const Mat& reg,
                             Mat& precision) const {
    auto objective = [&](const Vec& t, Vec* grad, Mat* hess) {
      const Vec f = p_.mean(t);
      const Mat ei = p_.noise().covariance_at(f).inverse();
      const Vec r = y - f;
      const Vec dc = t - c;
      if (grad) {
        const Mat j = p_.jacobian(t);
        *grad = -j.transpose() * ei * r + reg * dc;
        *hess = j.transpose() * ei * j + reg;
      }
      return 0.5 * r.dot(ei * r) + 0.5 * dc.dot(reg * dc);
    };
    Vec t = start;
    Vec grad;
    Mat hess;
    double cur = objective(t, &grad, &hess);
    double lambda = 1e-3;
    for (int it = 0; it < 30 && std::isfinite(cur); ++it) {
      const Mat damped = hess + lambda * Mat(hess.diagonal().asDiagonal());
      const Vec step = damped.ldlt().solve(-grad);
      const Vec trial = t + step;
      Vec g2;
      Mat h2;
      const double val = objective(trial, &g2, &h2);
      if (std::isfinite(val) && val <= cur) {
        const bool done = (cur - val) <= 1e-12 * (1.0 + std::abs(cur));
        t = trial;
        cur = val;
        grad = g2;
        hess = h2;
        lambda = std::max(lambda * 0.2, 1e-9);
        if (done) break;
      } else {
        lambda *= 8.0;
        if (lambda > 1e10) break;
      }
    }
    precision = symmetrize(hess);
    return {t, cur};
  }

  template <class Rng>
  double log_effect_given(const Vec& y, const Vec& mq, const Eigen::LLT<Mat>& q_llt,
                          const Mat& prior_prec, Rng& rng, Vec& mode, Mat& prec) const {
    const int m = spec_.inner_samples;
    mode = fit(y, mq, mq, prior_prec, prec).first;
    Eigen::LLT<Mat> lap(prec.inverse());
    const bool use_lap = lap.info() == Eigen::Success;
    const int n_prior = use_lap && m > 1 ? m / 2 : m;
    double acc = -std::numeric_limits<double>::infinity();
    const double ln_a = std::log(static_cast<double>(n_prior) / m);
    const double ln_b = n_prior < m ? std::log(static_cast<double>(m - n_prior) / m) : 0.0;
    for (int i = 0; i < m; ++i) {
      const Vec t = i < n_prior ? draw_gauss(mq, q_llt, rng) : draw_gauss(mode, lap, rng);
      const double lq = gauss_log_pdf(t, mq, q_llt);
      const double lr = n_prior < m ? lse2(ln_a + lq, ln_b + gauss_log_pdf(t, mode, lap)) : lq;
      acc = lse2(acc, lq + log_p(y, t) - lr);
    }
    return acc - std::log(static_cast<double>(m));
  }

  template <class Rng>
  double log_effect_distribution(const Vec& y, const Vec& post_mode, Rng& rng) const {
    // Locate the modes of w(t) p(y|t) from the anchors and the posterior mode.
    struct Cand {
      Vec t;
      Mat prec;
      double obj;
    };
    std::vector<Cand> cands;
    auto add = [&](const Vec& start, const Mat& reg) {
      Mat prec;
      auto [t, obj] = fit(y, start, start, reg, prec);
      if (std::isfinite(obj)) cands.push_back({t, prec, obj});
    };
    for (std::size_t i = 0; i < anchors_.size(); ++i) add(anchors_[i], anchor_reg_[i]);
    if (xs_.is_box()) add(post_mode, box_reg_);

    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.obj < b.obj; });
    std::vector<TComponent> comps;
    std::vector<Vec> kept;
    for (const auto& c : cands) {
      if (c.obj > cands.front().obj + 25.0 || comps.size() >= 8) break;
      bool dup = false;
      for (const auto& k : kept)
        if ((k - c.t).dot(c.prec * (k - c.t)) < 1.0) dup = true;
      if (dup) continue;
      if (!std::isfinite(log_w(c.t))) continue;
      try {
        comps.emplace_back(c.t, c.prec);
        kept.push_back(c.t);
      } catch (const Error&) {
      }
    }

    // Deterministic allocation; mixture weights equal the sample fractions so
    // the balance-heuristic estimator is unbiased.
    const int m = spec_.inner_samples;
    const double alpha = comps.empty() ? 1.0 : (xs_.is_box() ? 0.1 : 0.5);
    int n_def = comps.empty() ? m : std::max(1, static_cast<int>(std::lround(alpha * m)));
    if (!comps.empty() && m - n_def < static_cast<int>(comps.size())) n_def = m - static_cast<int>(comps.size());
    if (n_def < 1) {
      comps.clear();
      n_def = m;
    }
    std::vector<int> counts(comps.size(), 0);
    for (int i = 0; i < m - n_def; ++i) ++counts[static_cast<std::size_t>(i) % comps.size()];
    const double ln_m = std::log(static_cast<double>(m));
    const double ln_def = std::log(static_cast<double>(n_def)) - ln_m;
    std::vector<double> ln_comp;
    for (int c : counts) ln_comp.push_back(std::log(static_cast<double>(c)) - ln_m);

    double acc = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      const Vec t = i < n_def ? draw_w(rng) : comps[static_cast<std::size_t>(i - n_def) % comps.size()].sample(rng);
      const double lw = log_w(t);
      if (!std::isfinite(lw)) continue;
      double lr = ln_def + lw;
      for (std::size_t c = 0; c < comps.size(); ++c) lr = lse2(lr, ln_comp[c] + comps[c].log_pdf(t));
      acc = lse2(acc, lw + log_p(y, t) - lr);
    }
    return acc - ln_m;
  }

  void setup_box_anchors() {
    // Bounding box of the intervention means.
    const Domain& b = xs_.domain();
    std::vector<quad::Rule> rules;
    for (int k = 0; k < b.dim(); ++k) rules.push_back(quad::trapezoid(b.dim() == 1 ? 65 : 17, b.axis(k).lo, b.axis(k).hi));
    Vec lo = Vec::Constant(dth_, std::numeric_limits<double>::infinity());
    Vec hi = -lo;
    quad::for_each_tensor_node(rules, [&](const Vec& x, double) {
      const Vec m = q_.mean(x);
      lo = lo.cwiseMin(m);
      hi = hi.cwiseMax(m);
    });
    const Vec span = (hi - lo).cwiseMax(1e-12);
    box_reg_ = Mat::Zero(dth_, dth_);
    for (int k = 0; k < dth_; ++k) box_reg_(k, k) = 1.0 / std::pow(0.25 * span[k], 2);
    const int per = dth_ == 1 ? 7 : dth_ == 2 ? 4 : dth_ == 3 ? 3 : 2;
    std::vector<quad::Rule> grid;
    for (int k = 0; k < dth_; ++k) grid.push_back(quad::midpoint(per, lo[k], hi[k]));
    quad::for_each_tensor_node(grid, [&](const Vec& t, double) {
      anchors_.push_back(t);
      anchor_reg_.push_back(box_reg_);
    });
  }

  const InterventionSet& xs_;
  const GaussianChannel& q_;
  const GaussianChannel& p_;
  MonteCarloSpec spec_;
  int dth_;
  std::optional<InvertedChannel> inv_;
  double log_volume_ = 0.0;
  double log_k_ = 0.0;
  std::vector<Vec> point_means_;
  std::vector<Eigen::LLT<Mat>> point_llt_;
  std::vector<Vec> anchors_;
  std::vector<Mat> anchor_reg_;
  Mat box_reg_;
};

}  // namespace

EIReport ei_exact_mc(const InterventionSet& x_set, const GaussianChannel& ch_xtheta,
                     const GaussianChannel& ch_thetay, const MonteCarloSpec& mc) {
  mc.validate();
  const Estimator est(x_set, ch_xtheta, ch_thetay, mc);
  const auto batches = static_cast<std::size_t>(mc.batches);
  std::vector<double> sums(batches, 0.0);
  std::vector<long> counts(batches, 0);
  const long base = mc.outer_samples / mc.batches;
  const long extra = mc.outer_samples % mc.batches;
  parallel_for(batches, mc.threads, [&](std::size_t b) {
    std::mt19937_64 rng(derive_seed(mc.seed, b));
    const long n = base + (static_cast<long>(b) < extra ? 1 : 0);
    double s = 0.0;
    for (long i = 0; i < n; ++i) {
      const double v = est.sample_once(rng);
      if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "non-finite Monte Carlo sample in batch " << b << ", sample " << i;
        raise(ErrorCode::Numeric, os.str());
      }
      s += v;
    }
    sums[b] = s;
    counts[b] = n;
  });

  double total = 0.0;
  for (double s : sums) total += s;
  const double mean = total / static_cast<double>(mc.outer_samples);
  double var = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    const double bm = sums[b] / static_cast<double>(counts[b]);
    var += (bm - mean) * (bm - mean);
  }
  var /= static_cast<double>(batches - 1);
  const double se = std::sqrt(var / static_cast<double>(batches));

  EIReport r;
  r.method = EIMethod::MonteCarlo;
  r.nats = mean;
  r.bits = nats_to_bits(mean);
  r.stderr_nats = se > 0.0 ? se : std::numeric_limits<double>::min();
  r.seed = mc.seed;
  r.unreliable = se > 0.2 * std::abs(mean);
  r.grid = "outer:" + std::to_string(mc.outer_samples) + " inner:" + std::to_string(mc.inner_samples) +
           " batches:" + std::to_string(mc.batches);
  return r;
}

}  // namespace cgeo
