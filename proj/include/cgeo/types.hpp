#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace cgeo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ErrorCode {
  InvalidArgument,
  DomainViolation,
  UnreachableParameter,
  DegenerateDistribution,
  DegenerateModel,
  IllPosedInterventions,
  DegenerateEmbedding,
  DegenerateProfile,
  SingularJacobian,
  UseMonteCarlo,
  RegimeViolation,
  Numeric,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& what);

// "(0.25, 0.75)" with full precision; used in error messages.
std::string format_point(const Vec& p);

Vec to_vec(const std::vector<double>& v);
std::vector<double> to_std(const Vec& v);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double span() const { return hi - lo; }
  bool contains(double t) const { return t >= lo && t <= hi; }
};

// Axis-aligned box. Houses the ranges of x, theta and y.
class Domain {
 public:
  Domain() = default;
  explicit Domain(std::vector<Interval> axes);
  static Domain unit(int dim);
  static Domain cube(int dim, double lo, double hi);

  int dim() const { return static_cast<int>(axes_.size()); }
  const Interval& axis(int i) const { return axes_.at(static_cast<std::size_t>(i)); }
  const std::vector<Interval>& axes() const { return axes_; }

  bool contains(const Vec& p, double slack = 0.0) const;
  double volume() const;
  Vec lower() const;
  Vec upper() const;
  Vec center() const;
  Vec spans() const;
  Vec clamp(const Vec& p) const;

  bool operator==(const Domain& o) const;

 private:
  std::vector<Interval> axes_;
};

}  // namespace cgeo
