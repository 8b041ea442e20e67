#pragma once

#include "cgeo/manifold.hpp"

#include <optional>
#include <string>

namespace cgeo {

struct CausalModel {
  std::string name;
  InterventionSet interventions;
  GaussianChannel intervention;  // x -> theta
  GaussianChannel effect;        // theta -> y
  MetricField g;
  MetricField h;
  Domain theta;
};

struct DimmerProfile {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> df;
  std::optional<double> family_param;

  Profile1D as_1d() const { return {f, df}; }
};

DimmerProfile linear_profile();
DimmerProfile quadratic_profile();
// (e^{theta/r} - 1) / (e^{1/r} - 1)
DimmerProfile exponential_profile(double r);
// (e^{a theta} - 1) / (e^a - 1), linear at a = 0; a in [-5, 5]
DimmerProfile dimmer_family(double a);

struct EffectNoise {
  enum class Kind { Constant, Weber };
  Kind kind = Kind::Constant;
  double epsilon = 0.03;
  double y_floor = 1e-3;  // Weber only

  static EffectNoise constant(double eps) { return {Kind::Constant, eps, 1e-3}; }
  static EffectNoise weber(double eps0, double floor = 1e-3) { return {Kind::Weber, eps0, floor}; }
  double sigma_at(double y) const;
};

CausalModel dimmer_model(const DimmerProfile& profile, const EffectNoise& noise, double delta);
CausalModel binary_switch_model(double epsilon, double delta,
                                const DimmerProfile& profile = linear_profile());

struct TwoSpeciesConfig {
  Mat A = Mat::Identity(2, 2);
  double delta_t = 1.0;
  int n_points = 3;
  double epsilon = 1e-2;
  double delta = 1e-2;
  void validate() const;
};

CausalModel two_species_model(const TwoSpeciesConfig& cfg);
Submanifold submanifold_A();
Submanifold submanifold_B();

struct DecayConfounderConfig {
  double alpha = 1.0;
  double sigma_T = 0.05;
  double sigma_x = 1.0;
  double x_hat = 1.0;
  // Effect side, used only when the model is run as a causal model.
  double epsilon = 1e-2;
  double delta_t = 1.0;
  int n_points = 3;
  void validate() const;
};

struct DecayConfounderMetrics {
  MetricField h_caus;
  MetricField h_stat;
  std::function<double(double)> h_stat_series;  // throws outside its regime
};

DecayConfounderMetrics decay_confounder_metrics(const DecayConfounderConfig& cfg);
CausalModel decay_confounder_model(const DecayConfounderConfig& cfg);

}  // namespace cgeo
