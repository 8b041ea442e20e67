#include "cgeo/types.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace cgeo {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::DomainViolation: return "domain-violation";
    case ErrorCode::UnreachableParameter: return "unreachable-parameter";
    case ErrorCode::DegenerateDistribution: return "degenerate-distribution";
    case ErrorCode::DegenerateModel: return "degenerate-model";
    case ErrorCode::IllPosedInterventions: return "ill-posed-interventions";
    case ErrorCode::DegenerateEmbedding: return "degenerate-embedding";
    case ErrorCode::DegenerateProfile: return "degenerate-profile";
    case ErrorCode::SingularJacobian: return "singular-jacobian";
    case ErrorCode::UseMonteCarlo: return "use-monte-carlo";
    case ErrorCode::RegimeViolation: return "regime-violation";
    case ErrorCode::Numeric: return "numeric";
  }
  return "unknown";
}

void raise(ErrorCode code, const std::string& what) { throw Error(code, what); }

std::string format_point(const Vec& p) {
  std::string out = "(";
  char buf[32];
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", p[i]);
    if (i) out += ", ";
    out += buf;
  }
  return out + ")";
}

Vec to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

Domain::Domain(std::vector<Interval> axes) : axes_(std::move(axes)) {
  if (axes_.empty()) raise(ErrorCode::InvalidArgument, "domain needs at least one axis");
  for (std::size_t i = 0; i < axes_.size(); ++i) {
    const auto& a = axes_[i];
    if (!(std::isfinite(a.lo) && std::isfinite(a.hi) && a.lo < a.hi)) {
      std::ostringstream os;
      os << "domain axis " << i << " needs finite lo < hi, got [" << a.lo << ", " << a.hi << "]";
      raise(ErrorCode::InvalidArgument, os.str());
    }
  }
}

Domain Domain::unit(int dim) { return cube(dim, 0.0, 1.0); }

Domain Domain::cube(int dim, double lo, double hi) {
  if (dim < 1) raise(ErrorCode::InvalidArgument, "domain dimension must be >= 1");
  return Domain(std::vector<Interval>(static_cast<std::size_t>(dim), Interval{lo, hi}));
}

bool Domain::contains(const Vec& p, double slack) const {
  if (p.size() != dim()) return false;
  for (int i = 0; i < dim(); ++i) {
    const double tol = slack * axes_[i].span();
    if (!(p[i] >= axes_[i].lo - tol && p[i] <= axes_[i].hi + tol)) return false;
  }
  return true;
}

double Domain::volume() const {
  double v = 1.0;
  for (const auto& a : axes_) v *= a.span();
  return v;
}

Vec Domain::lower() const {
  Vec v(dim());
  for (int i = 0; i < dim(); ++i) v[i] = axes_[i].lo;
  return v;
}

Vec Domain::upper() const {
  Vec v(dim());
  for (int i = 0; i < dim(); ++i) v[i] = axes_[i].hi;
  return v;
}

Vec Domain::center() const { return 0.5 * (lower() + upper()); }
Vec Domain::spans() const { return upper() - lower(); }

Vec Domain::clamp(const Vec& p) const {
  Vec out = p;
  for (int i = 0; i < dim(); ++i) out[i] = std::min(std::max(p[i], axes_[i].lo), axes_[i].hi);
  return out;
}

bool Domain::operator==(const Domain& o) const {
  if (dim() != o.dim()) return false;
  for (int i = 0; i < dim(); ++i)
    if (axes_[i].lo != o.axes_[i].lo || axes_[i].hi != o.axes_[i].hi) return false;
  return true;
}

}  // namespace cgeo
