#pragma once

#include "cgeo/geometry.hpp"
#include "cgeo/quadrature.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

namespace cgeo {

enum class EIMethod { Quadrature, MonteCarlo, Geometric, DimmerApprox };
const char* method_name(EIMethod m) noexcept;

struct EIReport {
  double nats = 0.0;
  double bits = 0.0;
  EIMethod method = EIMethod::Quadrature;
  std::optional<double> volume_term;
  std::optional<double> mean_mismatch;
  std::optional<double> stderr_nats;
  std::optional<std::uint64_t> seed;
  std::string grid;  // e.g. "x:GL201 y:GL201 mesh:812" or "outer:20000 inner:256"
  bool negative_geometric = false;
  bool unconverged = false;
  bool unreliable = false;
  std::optional<double> convergence_delta;
};

inline double nats_to_bits(double nats) { return nats / std::log(2.0); }

enum class QuadRule { GaussLegendre, Trapezoid };

struct QuadratureSpec {
  int nodes_per_axis = 201;
  QuadRule rule = QuadRule::GaussLegendre;
  double effect_tail_sigmas = 8.0;
  bool check_convergence = false;
  int threads = 0;
  void validate() const;
};

// Midpoint grid for metric-field integrals.
struct GridSpec {
  int nodes_per_axis = 101;
  int threads = 0;
  void validate() const;
};

struct MonteCarloSpec {
  long outer_samples = 20000;
  int inner_samples = 256;
  std::uint64_t seed = 1;
  int batches = 20;
  int threads = 0;
  void validate() const;
};

// x -> y with theta integrated out, plus the effect distribution E_D.
class ComposedChannel {
 public:
  ComposedChannel(const InterventionSet& x_set, const GaussianChannel& ch_xtheta,
                  const GaussianChannel& ch_thetay, const QuadratureSpec& spec = {});
  ~ComposedChannel();
  ComposedChannel(ComposedChannel&&) noexcept;
  ComposedChannel& operator=(ComposedChannel&&) noexcept;

  double log_effect_given(const Vec& x, const Vec& y) const;
  double log_effect_distribution(const Vec& y) const;
  // KL(P(y|do x) || E_D) by tensor quadrature over the effect window.
  double divergence_given(const Vec& x) const;

  // Region holding all but a tail of mass of P(y|do x) or E_D.
  Domain effect_window_given(const Vec& x) const;
  Domain effect_window() const;

  std::size_t mesh_size() const;
  int y_dim() const;
  const InterventionSet& interventions() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct DensityEstimate {
  std::shared_ptr<const ComposedChannel> channel;
  double log_density(const Vec& y) const { return channel->log_effect_distribution(y); }
  double density(const Vec& y) const { return std::exp(log_density(y)); }
  Domain window() const { return channel->effect_window(); }
};

DensityEstimate effect_distribution(std::shared_ptr<const ComposedChannel> comp);

EIReport ei_exact_quadrature(const InterventionSet& x_set, const GaussianChannel& ch_xtheta,
                             const GaussianChannel& ch_thetay, const QuadratureSpec& q = {});

EIReport ei_exact_mc(const InterventionSet& x_set, const GaussianChannel& ch_xtheta,
                     const GaussianChannel& ch_thetay, const MonteCarloSpec& mc = {});

EIReport ei_geometric(const MetricField& g, const MetricField& h, const Domain& theta,
                      const GridSpec& grid = {});

double intervention_volume(const MetricField& h, const Domain& theta, const GridSpec& grid = {});

// Nodes of the staggered midpoint grid: axis k gets m + k cells, m even.
std::vector<quad::Rule> staggered_midpoint_rules(const Domain& box, int nodes_per_axis);

struct Profile1D {
  std::function<double(double)> f;
  std::function<double(double)> df;
};

EIReport ei_dimmer_approx(const Profile1D& f, const std::function<double(double)>& eps_of_y,
                          double delta, const Domain& theta, int nodes = 2001);

}  // namespace cgeo
