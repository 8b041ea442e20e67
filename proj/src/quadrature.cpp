#include "cgeo/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

namespace cgeo::quad {

namespace {

void check_count(int n, int min) {
  if (n < min) raise(ErrorCode::InvalidArgument, "quadrature rule needs at least " +
                                                     std::to_string(min) + " nodes");
}

// Kronrod 15 / Gauss 7 abscissae and weights on [-1, 1].
constexpr double kXgk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                            0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                            0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                            0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr double kWgk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                            0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                            0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                            0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr double kWg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                           0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double a = 0.0;
  double b = 0.0;
  Vec value;
  double error = 0.0;
};

struct ByError {
  bool operator()(const Segment& l, const Segment& r) const { return l.error < r.error; }
};

Segment gk15(const VecFn& f, int comps, double a, double b, int& evals) {
  const double c = 0.5 * (a + b);
  const double hw = 0.5 * (b - a);
  Vec fc = f(c);
  Vec kron = fc * kWgk[7];
  Vec gauss = fc * kWg[3];
  Vec abs_k = fc.cwiseAbs() * kWgk[7];
  Vec f_at[15];
  f_at[7] = fc;
  for (int j = 0; j < 7; ++j) {
    const double dx = hw * kXgk[j];
    Vec f1 = f(c - dx);
    Vec f2 = f(c + dx);
    kron += kWgk[j] * (f1 + f2);
    abs_k += kWgk[j] * (f1.cwiseAbs() + f2.cwiseAbs());
    if (j % 2 == 1) gauss += kWg[j / 2] * (f1 + f2);
    f_at[j] = std::move(f1);
    f_at[14 - j] = std::move(f2);
  }
  evals += 15;
  const Vec mean = kron * 0.5;
  Vec asc = kWgk[7] * (f_at[7] - mean).cwiseAbs();
  for (int j = 0; j < 7; ++j)
    asc += kWgk[j] * ((f_at[j] - mean).cwiseAbs() + (f_at[14 - j] - mean).cwiseAbs());

  Segment s{a, b, kron * hw, 0.0};
  double err = 0.0;
  for (int i = 0; i < comps; ++i) {
    double e = std::abs((kron[i] - gauss[i]) * hw);
    const double resasc = asc[i] * std::abs(hw);
    const double resabs = abs_k[i] * std::abs(hw);
    if (resasc != 0.0 && e != 0.0) e = resasc * std::min(1.0, std::pow(200.0 * e / resasc, 1.5));
    const double floor = 50.0 * std::numeric_limits<double>::epsilon() * resabs;
    if (resabs > std::numeric_limits<double>::min() / (50.0 * std::numeric_limits<double>::epsilon()))
      e = std::max(e, floor);
    err = std::max(err, e);
  }
  s.error = err;
  return s;
}

}  // namespace

Rule gauss_legendre(int n, double lo, double hi) {
  check_count(n, 1);
  Rule r;
  r.nodes.resize(static_cast<std::size_t>(n));
  r.weights.resize(static_cast<std::size_t>(n));
  const double c = 0.5 * (lo + hi);
  const double hw = 0.5 * (hi - lo);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) {
        p1 = z;
        p0 = 1.0;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // Recompute the derivative at the converged root.
    double p0 = 1.0;
    double p1 = z;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (z * p1 - p0) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    const auto lo_i = static_cast<std::size_t>(i);
    const auto hi_i = static_cast<std::size_t>(n - 1 - i);
    r.nodes[lo_i] = c - hw * z;
    r.nodes[hi_i] = c + hw * z;
    r.weights[lo_i] = hw * w;
    r.weights[hi_i] = hw * w;
  }
  if (n == 1) {
    r.nodes[0] = c;
    r.weights[0] = hi - lo;
  }
  return r;
}

Rule trapezoid(int n, double lo, double hi) {
  check_count(n, 2);
  Rule r;
  const double h = (hi - lo) / (n - 1);
  for (int i = 0; i < n; ++i) {
    r.nodes.push_back(i == n - 1 ? hi : lo + i * h);
    r.weights.push_back((i == 0 || i == n - 1) ? 0.5 * h : h);
  }
  return r;
}

Rule midpoint(int n, double lo, double hi) {
  check_count(n, 1);
  Rule r;
  const double h = (hi - lo) / n;
  for (int i = 0; i < n; ++i) {
    r.nodes.push_back(lo + (i + 0.5) * h);
    r.weights.push_back(h);
  }
  return r;
}

AdaptiveResult integrate(const VecFn& f, int components, double lo, double hi,
                         const std::vector<double>& breakpoints, const AdaptiveOptions& opts) {
  AdaptiveResult out;
  out.value = Vec::Zero(components);
  if (!(hi > lo)) return out;

  std::vector<double> cuts{lo};
  for (double b : breakpoints)
    if (b > lo && b < hi) cuts.push_back(b);
  cuts.push_back(hi);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::priority_queue<Segment, std::vector<Segment>, ByError> heap;
  Vec total = Vec::Zero(components);
  double err_sum = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    Segment s = gk15(f, components, cuts[i], cuts[i + 1], out.evaluations);
    total += s.value;
    err_sum += s.error;
    heap.push(std::move(s));
  }

  int count = static_cast<int>(heap.size());
  auto tolerance = [&] { return std::max(opts.abs_tol, opts.rel_tol * total.cwiseAbs().maxCoeff()); };
  while (err_sum > tolerance() && count < opts.max_intervals) {
    Segment worst = heap.top();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b) ||
        (worst.b - worst.a) < 1e-14 * std::max(1.0, std::abs(mid)))
      break;
    heap.pop();
    Segment l = gk15(f, components, worst.a, mid, out.evaluations);
    Segment r = gk15(f, components, mid, worst.b, out.evaluations);
    total += l.value + r.value - worst.value;
    err_sum += l.error + r.error - worst.error;
    heap.push(std::move(l));
    heap.push(std::move(r));
    ++count;
  }

  // Re-sum to shed accumulated update rounding.
  Vec sum = Vec::Zero(components);
  double esum = 0.0;
  while (!heap.empty()) {
    sum += heap.top().value;
    esum += heap.top().error;
    heap.pop();
  }
  out.value = sum;
  out.error = esum;
  out.converged = esum <= std::max(opts.abs_tol, opts.rel_tol * sum.cwiseAbs().maxCoeff()) * 1.0001;
  return out;
}

double integrate_scalar(const std::function<double(double)>& f, double lo, double hi,
                        const std::vector<double>& breakpoints, const AdaptiveOptions& opts) {
  auto vf = [&](double t) {
    Vec v(1);
    v[0] = f(t);
    return v;
  };
  return integrate(vf, 1, lo, hi, breakpoints, opts).value[0];
}

AdaptiveResult integrate_box(const BoxFn& f, int components, const Domain& box,
                             const BreakFn& breaks, const AdaptiveOptions& opts) {
  const int d = box.dim();
  AdaptiveResult total;
  int evals = 0;
  bool converged = true;
  std::function<Vec(int, Vec&)> level = [&](int axis, Vec& x) -> Vec {
    const auto& iv = box.axis(axis);
    auto bp = breaks ? breaks(axis, x) : std::vector<double>{};
    auto inner = [&](double t) -> Vec {
      x[axis] = t;
      if (axis + 1 == d) {
        ++evals;
        return f(x);
      }
      return level(axis + 1, x);
    };
    AdaptiveResult r = integrate(inner, components, iv.lo, iv.hi, bp, opts);
    converged = converged && r.converged;
    if (axis == 0) total.error = r.error;
    return r.value;
  };
  Vec x = box.center();
  total.value = level(0, x);
  total.evaluations = evals;
  total.converged = converged;
  return total;
}

std::size_t tensor_size(const std::vector<Rule>& rules) {
  std::size_t n = 1;
  for (const auto& r : rules) n *= r.size();
  return n;
}

void tensor_node(const std::vector<Rule>& rules, std::size_t flat, Vec& point, double& weight) {
  const int d = static_cast<int>(rules.size());
  point.resize(d);
  weight = 1.0;
  for (int k = d - 1; k >= 0; --k) {
    const auto& r = rules[static_cast<std::size_t>(k)];
    const std::size_t i = flat % r.size();
    flat /= r.size();
    point[k] = r.nodes[i];
    weight *= r.weights[i];
  }
}

void for_each_tensor_node(const std::vector<Rule>& rules,
                          const std::function<void(const Vec&, double)>& visit) {
  const std::size_t n = tensor_size(rules);
  Vec p;
  double w = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    tensor_node(rules, i, p, w);
    visit(p, w);
  }
}

double normal_mass(double a, double b) {
  if (b < a) return -normal_mass(b, a);
  constexpr double r2 = std::numbers::sqrt2;
  if (a >= 0.0) return 0.5 * (std::erfc(a / r2) - std::erfc(b / r2));
  if (b <= 0.0) return 0.5 * (std::erfc(-b / r2) - std::erfc(-a / r2));
  return 1.0 - 0.5 * std::erfc(-a / r2) - 0.5 * std::erfc(b / r2);
}

double log_sum_exp(const std::vector<double>& v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace cgeo::quad
