#include "cgeo/manifold.hpp"
#include "cgeo/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace cgeo {

Mat Submanifold::jacobian_at(const Vec& sigma) const {
  if (jacobian) return jacobian(sigma);
  const Vec steps = 1e-6 * sigma_domain.spans();
  return finite_difference_jacobian(embed, sigma, steps);
}

Mat pullback(const Mat& m, const Mat& js) { return symmetrize(js.transpose() * m * js); }

Mat pullback(const MetricField& m, const Submanifold& sub, const Vec& sigma) {
  if (!sub.sigma_domain.contains(sigma, 1e-12))
    raise(ErrorCode::DomainViolation, "point " + format_point(sigma) + " outside the " + sub.label +
                                          " parameter domain");
  const Mat js = sub.jacobian_at(sigma);
  if (js.rows() != sub.d || js.cols() != sub.k)
    raise(ErrorCode::InvalidArgument, "embedding Jacobian has the wrong shape");
  Eigen::JacobiSVD<Mat> svd(js);
  const auto& sv = svd.singularValues();
  if (!(sv.minCoeff() > 1e-12 * std::max(sv.maxCoeff(), 1e-300)))
    raise(ErrorCode::DegenerateEmbedding,
          "embedding " + sub.label + " loses rank at " + format_point(sigma));
  return pullback(m(sub.embed(sigma)), js);
}

MetricField pullback_field(const MetricField& m, const Submanifold& sub) {
  if (m.dim != sub.d) raise(ErrorCode::InvalidArgument, "metric and embedding dimensions differ");
  return {sub.k, [m, sub](const Vec& sigma) { return pullback(m, sub, sigma); }};
}

EIReport coarse_grained_ei(const MetricField& g, const MetricField& h, const Submanifold& sub,
                           const GridSpec& grid) {
  return ei_geometric(pullback_field(g, sub), pullback_field(h, sub), sub.sigma_domain, grid);
}

const char* sweep_variable_name(SweepVariable v) noexcept {
  switch (v) {
    case SweepVariable::Epsilon: return "epsilon";
    case SweepVariable::Delta: return "delta";
    case SweepVariable::Both: return "both";
    case SweepVariable::DeltaT: return "delta_t";
    case SweepVariable::Other: return "other";
  }
  return "other";
}

std::vector<double> make_grid(double from, double to, int steps, bool log_spaced) {
  if (steps < 2) raise(ErrorCode::InvalidArgument, "sweep needs at least 2 steps");
  if (!std::isfinite(from) || !std::isfinite(to) || from == to)
    raise(ErrorCode::InvalidArgument, "sweep bounds must be finite and distinct");
  if (log_spaced && !(from > 0.0 && to > 0.0))
    raise(ErrorCode::InvalidArgument, "log-spaced sweep needs positive bounds");
  std::vector<double> g;
  for (int i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) / (steps - 1);
    double v = log_spaced ? std::exp(std::log(from) + t * (std::log(to) - std::log(from)))
                          : from + t * (to - from);
    if (i == 0) v = from;
    if (i == steps - 1) v = to;
    g.push_back(v);
  }
  return g;
}

namespace {

double coord(double v, bool log_spaced) { return log_spaced ? std::log(v) : v; }
double uncoord(double u, bool log_spaced) { return log_spaced ? std::exp(u) : u; }

int sign_of(double d) { return d > 0.0 ? 1 : (d < 0.0 ? -1 : 0); }

Crossing refine(double v0, double d0, double v1, double d1, bool log_spaced) {
  Crossing c;
  c.bracket_lo = std::min(v0, v1);
  c.bracket_hi = std::max(v0, v1);
  double u0 = coord(v0, log_spaced);
  double u1 = coord(v1, log_spaced);
  if (!std::isfinite(d0) || !std::isfinite(d1)) {
    c.value = uncoord(0.5 * (u0 + u1), log_spaced);
    return c;
  }
  // Bisection on the linear interpolant of the difference.
  const double ua = u0;
  const double ub = u1;
  auto interp = [&](double u) { return d0 + (d1 - d0) * (u - ua) / (ub - ua); };
  double lo = u0;
  double hi = u1;
  for (int it = 0; it < 200; ++it) {
    const double vl = uncoord(lo, log_spaced);
    const double vh = uncoord(hi, log_spaced);
    if (std::abs(vh - vl) <= 1e-3 * std::max(std::abs(vl), std::abs(vh))) break;
    const double mid = 0.5 * (lo + hi);
    if (sign_of(interp(mid)) == sign_of(d0))
      lo = mid;
    else
      hi = mid;
  }
  c.value = uncoord(0.5 * (lo + hi), log_spaced);
  return c;
}

}  // namespace

std::vector<Crossing> find_crossings(const std::string& label_a, const std::vector<double>& a,
                                     const std::string& label_b, const std::vector<double>& b,
                                     const std::vector<double>& grid, bool log_spaced) {
  if (a.size() != grid.size() || b.size() != grid.size())
    raise(ErrorCode::InvalidArgument, "curve and grid sizes differ");
  std::vector<Crossing> out;
  std::optional<std::size_t> last;      // last valid point with nonzero difference
  std::optional<std::size_t> zero_run;  // first exact-zero point since `last`
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double d = a[i] - b[i];
    if (std::isnan(d)) continue;
    const int s = sign_of(d);
    if (s == 0) {
      if (!zero_run) zero_run = i;
      continue;
    }
    if (last) {
      const double dl = a[*last] - b[*last];
      if (sign_of(dl) != s) {
        Crossing c;
        if (zero_run) {
          c.value = grid[*zero_run];
          c.bracket_lo = std::min(grid[*last], grid[i]);
          c.bracket_hi = std::max(grid[*last], grid[i]);
        } else {
          c = refine(grid[*last], dl, grid[i], d, log_spaced);
        }
        c.labels = {label_a, label_b};
        out.push_back(c);
      }
    }
    last = i;
    zero_run.reset();
  }
  return out;
}

CrossoverScan crossover_scan(const std::vector<ScanModel>& models, const SweepSpec& sweep) {
  if (models.size() < 2) raise(ErrorCode::InvalidArgument, "crossover scan needs at least 2 models");
  if (sweep.grid.size() < 8) raise(ErrorCode::InvalidArgument, "crossover scan needs at least 8 grid points");
  CrossoverScan scan;
  scan.sweep = sweep;
  const std::size_t n = sweep.grid.size();
  const std::size_t nm = models.size();
  scan.curves.assign(nm, std::vector<ScanPoint>(n));
  for (const auto& m : models) scan.labels.push_back(m.label);

  parallel_for(nm * n, sweep.threads, [&](std::size_t job) {
    const std::size_t mi = job / n;
    const std::size_t gi = job % n;
    ScanPoint& pt = scan.curves[mi][gi];
    try {
      pt.report = models[mi].evaluate(sweep.grid[gi]);
      if (std::isnan(pt.report->nats)) {
        pt.report.reset();
        pt.error = "EI is not a number";
      }
    } catch (const std::exception& e) {
      pt.error = e.what();
    }
  });

  for (std::size_t gi = 0; gi < n; ++gi) {
    std::string best;
    double best_v = 0.0;
    for (std::size_t mi = 0; mi < nm; ++mi) {
      const auto& pt = scan.curves[mi][gi];
      if (!pt.report) continue;
      if (best.empty() || pt.report->nats > best_v) {
        best = models[mi].label;
        best_v = pt.report->nats;
      }
    }
    scan.argmax.push_back(best);
  }

  auto values = [&](std::size_t mi) {
    std::vector<double> v(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t gi = 0; gi < n; ++gi)
      if (scan.curves[mi][gi].report) v[gi] = scan.curves[mi][gi].report->nats;
    return v;
  };
  for (std::size_t i = 0; i < nm; ++i)
    for (std::size_t j = i + 1; j < nm; ++j) {
      auto c = find_crossings(models[i].label, values(i), models[j].label, values(j), sweep.grid,
                              sweep.log_spaced);
      scan.crossings.insert(scan.crossings.end(), c.begin(), c.end());
    }
  return scan;
}

}  // namespace cgeo
