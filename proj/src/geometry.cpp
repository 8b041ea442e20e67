#include "cgeo/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace cgeo {

namespace {

constexpr double kSingularPivotRatio = 1e-14;

// Squared Cholesky pivots; empty when the factorization fails.
std::optional<Vec> cholesky_pivots(const Mat& m) {
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success) return std::nullopt;
  Vec p = llt.matrixLLT().diagonal().array().square();
  if (!p.allFinite()) return std::nullopt;
  return p;
}

bool near_singular(const Vec& pivots) {
  const double mx = pivots.maxCoeff();
  return !(mx > 0.0) || pivots.minCoeff() <= kSingularPivotRatio * mx;
}

}  // namespace

MetricField MetricField::constant(const Mat& m) {
  const Mat s = symmetrize(m);
  return {static_cast<int>(m.rows()), [s](const Vec&) { return s; }};
}

Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

Mat effect_metric_at(const GaussianChannel& ch, const Vec& theta) {
  const Mat j = ch.jacobian(theta);
  const Mat cov = ch.noise().covariance_at(ch.mean(theta));
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success)
    raise(ErrorCode::DegenerateDistribution, "effect covariance not positive definite at " +
                                                 format_point(theta));
  const Mat w = llt.matrixL().solve(j);
  return symmetrize(w.transpose() * w);
}

MetricField effect_metric(const GaussianChannel& ch) {
  return {ch.input_dim(), [ch](const Vec& theta) { return effect_metric_at(ch, theta); }};
}

MetricField intervention_metric(const InvertedChannel& inv) {
  return {inv.dim(), [inv](const Vec& theta) { return symmetrize(inv.fisher_metric(theta)); }};
}

std::optional<double> log_det_spd(const Mat& m) {
  auto piv = cholesky_pivots(m);
  if (!piv) {
    const double d = static_cast<double>(m.rows());
    const Mat jittered = m + (1e-12 * m.trace() / d) * Mat::Identity(m.rows(), m.cols());
    piv = cholesky_pivots(jittered);
    if (!piv) return std::nullopt;
  }
  return piv->array().log().sum();
}

double mismatch(const Mat& g, const Mat& h) {
  if (g.rows() != h.rows() || g.cols() != h.cols() || g.rows() != g.cols())
    raise(ErrorCode::InvalidArgument, "mismatch needs square metrics of equal size");
  // No jitter here: a g + h that needs it is singular to working precision.
  const auto sum = cholesky_pivots(symmetrize(g + h));
  if (!sum || near_singular(*sum)) raise(ErrorCode::DegenerateModel, "g + h is not positive definite");
  const auto piv = cholesky_pivots(g);
  if (!piv || near_singular(*piv)) return kInfiniteMismatch;
  return 0.5 * (sum->array().log().sum() - piv->array().log().sum());
}

EigenReport causal_eigenvalues(const Mat& g, const Mat& h) {
  if (g.rows() != h.rows() || g.cols() != h.cols() || g.rows() != g.cols())
    raise(ErrorCode::InvalidArgument, "eigen-spectrum needs square metrics of equal size");
  Eigen::LLT<Mat> llt(symmetrize(h));
  if (llt.info() != Eigen::Success ||
      near_singular(llt.matrixLLT().diagonal().array().square().matrix()))
    raise(ErrorCode::IllPosedInterventions, "intervention metric h is singular");
  const auto l = llt.matrixL();
  const Mat a = l.solve(symmetrize(g));
  const Mat w = symmetrize(l.solve(a.transpose()));
  Eigen::SelfAdjointEigenSolver<Mat> es(w);
  if (es.info() != Eigen::Success) raise(ErrorCode::Numeric, "eigen-decomposition failed");
  const Eigen::Index d = w.rows();
  EigenReport r;
  r.basis.resize(d, d);
  const double scale = std::max(std::abs(es.eigenvalues().maxCoeff()), 1e-300);
  for (Eigen::Index i = 0; i < d; ++i) {
    const Eigen::Index src = d - 1 - i;
    double lam = es.eigenvalues()[src];
    if (lam < 0.0) {
      if (lam < -1e-9 * scale) raise(ErrorCode::InvalidArgument, "effect metric g is not positive semi-definite");
      lam = 0.0;
    }
    r.eigenvalues.push_back(lam);
    r.basis.col(i) = es.eigenvectors().col(src);
  }
  return r;
}

MetricField reparameterize(const MetricField& m, const Diffeomorphism& phi) {
  if (phi.dim != m.dim || !phi.map) raise(ErrorCode::InvalidArgument, "diffeomorphism dimension mismatch");
  return {m.dim, [m, phi](const Vec& tp) {
            Mat j;
            if (phi.jacobian) {
              j = phi.jacobian(tp);
            } else {
              const Vec steps = phi.fd_steps.size() == tp.size() ? phi.fd_steps
                                                                   : Vec::Constant(tp.size(), 1e-6);
              j = finite_difference_jacobian(phi.map, tp, steps);
            }
            Eigen::FullPivLU<Mat> lu(j);
            if (!lu.isInvertible() || lu.determinant() == 0.0)
              raise(ErrorCode::SingularJacobian,
                    "reparameterization Jacobian singular at " + format_point(tp));
            return symmetrize(j.transpose() * m(phi.map(tp)) * j);
          }};
}

}  // namespace cgeo
