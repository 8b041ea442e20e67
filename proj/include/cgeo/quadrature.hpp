#pragma once

#include "cgeo/types.hpp"

#include <functional>
#include <vector>

namespace cgeo::quad {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::size_t size() const { return nodes.size(); }
};

Rule gauss_legendre(int n, double lo, double hi);
Rule trapezoid(int n, double lo, double hi);
Rule midpoint(int n, double lo, double hi);

struct AdaptiveOptions {
  double abs_tol = 0.0;
  double rel_tol = 1e-10;
  int max_intervals = 4000;
};

struct AdaptiveResult {
  Vec value;
  double error = 0.0;
  int evaluations = 0;
  bool converged = true;
};

using VecFn = std::function<Vec(double)>;

// Globally adaptive Gauss-Kronrod 7/15 for a vector-valued integrand.
// Breakpoints inside (lo, hi) seed the initial partition.
AdaptiveResult integrate(const VecFn& f, int components, double lo, double hi,
                         const std::vector<double>& breakpoints = {},
                         const AdaptiveOptions& opts = {});

double integrate_scalar(const std::function<double(double)>& f, double lo, double hi,
                        const std::vector<double>& breakpoints = {},
                        const AdaptiveOptions& opts = {});

// Nested adaptive integration over a box. `breaks(axis, x)` returns
// breakpoints for `axis` given coordinates x[0..axis) already fixed.
using BoxFn = std::function<Vec(const Vec&)>;
using BreakFn = std::function<std::vector<double>(int axis, const Vec& x)>;

AdaptiveResult integrate_box(const BoxFn& f, int components, const Domain& box,
                             const BreakFn& breaks, const AdaptiveOptions& opts = {});

// Tensor product of 1D rules; calls visit(point, weight) for every node.
void for_each_tensor_node(const std::vector<Rule>& rules,
                          const std::function<void(const Vec&, double)>& visit);
std::size_t tensor_size(const std::vector<Rule>& rules);
// Node number `flat` of the tensor product (last axis fastest).
void tensor_node(const std::vector<Rule>& rules, std::size_t flat, Vec& point, double& weight);

// Standard normal CDF difference Phi(b) - Phi(a) without cancellation.
double normal_mass(double a, double b);

double log_sum_exp(const std::vector<double>& v);

}  // namespace cgeo::quad
