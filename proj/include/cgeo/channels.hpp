#pragma once

#include "cgeo/types.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

namespace cgeo {

struct ConstantIsotropic {
  double sigma = 0.0;
};

// sigma_at receives the channel mean, not the sample point.
struct DiagonalStateDependent {
  std::function<Vec(const Vec&)> sigma_at;
};

struct FullConstant {
  Mat covariance;
};

class NoiseSpec {
 public:
  using Variant = std::variant<ConstantIsotropic, DiagonalStateDependent, FullConstant>;

  static NoiseSpec constant(double sigma);
  static NoiseSpec state_dependent(std::function<Vec(const Vec&)> sigma_at);
  static NoiseSpec full(const Mat& covariance);

  Mat covariance_at(const Vec& mean) const;
  bool is_constant() const;
  const Variant& variant() const { return v_; }

 private:
  explicit NoiseSpec(Variant v) : v_(std::move(v)) {}
  Variant v_;
};

struct AffineMap {
  Mat matrix;
  Vec offset;
};

struct MeanMap {
  int input_dim = 0;
  int output_dim = 0;
  std::function<Vec(const Vec&)> value;
  std::function<Mat(const Vec&)> jacobian;  // empty: central differences
  std::optional<AffineMap> affine;          // set when the map is exactly affine

  static MeanMap from_affine(const Mat& matrix, const Vec& offset);
  static MeanMap identity(int dim);
};

struct GaussianDistribution {
  Vec mean;
  Mat covariance;
};

double log_density(const GaussianDistribution& dist, const Vec& p);

// Central differences with a per-axis step.
Mat finite_difference_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x,
                               const Vec& steps);

class GaussianChannel {
 public:
  GaussianChannel(MeanMap mean, NoiseSpec noise, Domain input, Domain output);

  GaussianDistribution push_forward(const Vec& x) const;
  Vec mean(const Vec& x) const { return map_.value(x); }
  Mat covariance(const Vec& x) const { return noise_.covariance_at(map_.value(x)); }
  Mat jacobian(const Vec& x) const;

  bool has_analytic_jacobian() const { return static_cast<bool>(map_.jacobian); }
  GaussianChannel with_finite_differences() const;

  const MeanMap& mean_map() const { return map_; }
  const NoiseSpec& noise() const { return noise_; }
  const Domain& input_domain() const { return in_; }
  const Domain& output_domain() const { return out_; }
  int input_dim() const { return map_.input_dim; }
  int output_dim() const { return map_.output_dim; }

 private:
  MeanMap map_;
  NoiseSpec noise_;
  Domain in_;
  Domain out_;
  Vec fd_steps_;
};

class InterventionSet {
 public:
  static InterventionSet box(const Domain& domain);
  static InterventionSet discrete(std::vector<Vec> points);

  bool is_box() const { return points_.empty(); }
  int dim() const;
  const Domain& domain() const;  // box only
  const std::vector<Vec>& points() const { return points_; }
  // Bounding box of the discrete points, or the box itself.
  Domain hull() const;

 private:
  InterventionSet() = default;
  Domain box_;
  std::vector<Vec> points_;
};

struct InversionOptions {
  double normalization_floor = 1e-300;
  double rel_tol = 1e-10;
};

// theta -> density over the intervention box, q(theta|do x) / Z(theta).
class InvertedChannel {
 public:
  double normalization(const Vec& theta) const;
  double log_density(const Vec& x, const Vec& theta) const;
  double density(const Vec& x, const Vec& theta) const;
  Mat fisher_metric(const Vec& theta) const;

  // Z(theta) without the floor check; 0 when nothing reaches theta.
  double raw_normalization(const Vec& theta) const;

  const GaussianChannel& channel() const { return *ch_; }
  const Domain& box() const { return box_; }
  int dim() const { return ch_->output_dim(); }

 private:
  friend InvertedChannel invert_uniform_prior(const GaussianChannel&, const InterventionSet&,
                                              InversionOptions);
  struct Mode {
    Vec x;          // preimage estimate
    Mat precision;  // J^T Sigma^-1 J at x (x-space precision)
    bool usable = false;
  };
  std::vector<Mode> modes(const Vec& theta) const;
  std::vector<double> breakpoints(const std::vector<Mode>& ms, int axis, const Vec& prefix) const;
  bool closed_form_ok() const { return closed_form_; }

  std::shared_ptr<const GaussianChannel> ch_;
  Domain box_;
  InversionOptions opts_;
  bool closed_form_ = false;
  Mat a_inv_;   // closed form only
  Vec x_sd_;    // closed form only: x-space standard deviations
  double log_abs_det_inv_ = 0.0;
  std::vector<Vec> probes_;
};

InvertedChannel invert_uniform_prior(const GaussianChannel& ch, const InterventionSet& x_set,
                                     InversionOptions opts = {});

}  // namespace cgeo
