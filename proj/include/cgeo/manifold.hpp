#pragma once

#include "cgeo/ei.hpp"

#include <string>
#include <utility>
#include <vector>

namespace cgeo {

struct Submanifold {
  int k = 1;
  int d = 2;
  std::function<Vec(const Vec&)> embed;
  std::function<Mat(const Vec&)> jacobian;  // d x k; empty: finite differences
  Domain sigma_domain;
  std::string label;

  Mat jacobian_at(const Vec& sigma) const;
};

Mat pullback(const Mat& m, const Mat& js);
Mat pullback(const MetricField& m, const Submanifold& sub, const Vec& sigma);
MetricField pullback_field(const MetricField& m, const Submanifold& sub);

EIReport coarse_grained_ei(const MetricField& g, const MetricField& h, const Submanifold& sub,
                           const GridSpec& grid = {});

enum class SweepVariable { Epsilon, Delta, Both, DeltaT, Other };
const char* sweep_variable_name(SweepVariable v) noexcept;

struct SweepSpec {
  SweepVariable variable = SweepVariable::Both;
  std::string name;  // column name; defaults from variable
  std::vector<double> grid;
  bool log_spaced = true;
  int threads = 0;
};

std::vector<double> make_grid(double from, double to, int steps, bool log_spaced);

struct ScanModel {
  std::string label;
  std::function<EIReport(double)> evaluate;
};

struct Crossing {
  std::pair<std::string, std::string> labels;
  double value = 0.0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
};

struct ScanPoint {
  std::optional<EIReport> report;
  std::string error;  // set when the point is invalid
};

struct CrossoverScan {
  SweepSpec sweep;
  std::vector<std::string> labels;
  std::vector<std::vector<ScanPoint>> curves;  // [model][grid index]
  std::vector<Crossing> crossings;
  std::vector<std::string> argmax;  // empty where no model is valid
};

CrossoverScan crossover_scan(const std::vector<ScanModel>& models, const SweepSpec& sweep);

// Sign changes of a(v) - b(v) between adjacent valid points, refined by
// bisection on the linear interpolant (log coordinates when log_spaced).
std::vector<Crossing> find_crossings(const std::string& label_a, const std::vector<double>& a,
                                     const std::string& label_b, const std::vector<double>& b,
                                     const std::vector<double>& grid, bool log_spaced);

}  // namespace cgeo
