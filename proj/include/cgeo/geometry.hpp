#pragma once

#include "cgeo/channels.hpp"

#include <functional>
#include <limits>

namespace cgeo {

struct MetricField {
  int dim = 0;
  std::function<Mat(const Vec&)> eval;

  Mat operator()(const Vec& theta) const { return eval(theta); }
  static MetricField constant(const Mat& m);
};

struct EigenReport {
  std::vector<double> eigenvalues;  // descending
  Mat basis;                        // columns, in h-whitened coordinates
};

// g = J^T Sigma^-1 J, Sigma evaluated at f(theta).
MetricField effect_metric(const GaussianChannel& ch);
Mat effect_metric_at(const GaussianChannel& ch, const Vec& theta);

// Fisher metric of the uniform-prior inverse, by adaptive quadrature over x.
MetricField intervention_metric(const InvertedChannel& inv);

inline constexpr double kInfiniteMismatch = std::numeric_limits<double>::infinity();

// l = (ln det(g+h) - ln det g)/2; +inf when g is singular.
double mismatch(const Mat& g, const Mat& h);

// Generalized eigenvalues of the (g, h) pencil.
EigenReport causal_eigenvalues(const Mat& g, const Mat& h);

// Cholesky log-determinant with one jitter retry; nullopt when not PD.
std::optional<double> log_det_spd(const Mat& m);

struct Diffeomorphism {
  int dim = 0;
  std::function<Vec(const Vec&)> map;       // theta' -> theta
  std::function<Mat(const Vec&)> jacobian;  // d theta / d theta'; empty: finite differences
  Vec fd_steps;                             // used only without jacobian
};

MetricField reparameterize(const MetricField& m, const Diffeomorphism& phi);

Mat symmetrize(const Mat& m);

}  // namespace cgeo
