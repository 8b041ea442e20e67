#include "experiment.hpp"

#include <cgeo/cgeo.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "svg_plot.hpp"

namespace cgeo_cli {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Library handles

struct ModelDeleter {
  void operator()(cg_model* m) const { cg_model_destroy(m); }
};
using ModelPtr = std::shared_ptr<cg_model>;

ModelPtr create_model(const std::string& name, const json& params) {
  cg_model* m = nullptr;
  const std::string text = params.dump();
  const cg_status st = cg_model_create(name.c_str(), text.c_str(), &m);
  if (st != CG_OK) throw ConfigError(cg_last_error());
  return ModelPtr(m, ModelDeleter{});
}

template <class Fn>
std::string read_buffer(Fn&& fn) {
  std::size_t needed = 0;
  fn(nullptr, 0, &needed);
  std::string buf(needed, '\0');
  if (fn(buf.data(), buf.size(), &needed) != CG_OK) throw std::runtime_error(cg_last_error());
  buf.resize(needed > 0 ? needed - 1 : 0);
  return buf;
}

json resolved_params(const cg_model* m) {
  return json::parse(read_buffer([&](char* b, std::size_t c, std::size_t* n) { return cg_model_params(m, b, c, n); }));
}

// ---------------------------------------------------------------------------
// Config document

constexpr int kSchemaVersion = 1;

const std::vector<std::string> kComputations = {"ei-exact", "ei-geom", "ei-both", "eigen", "crossover-scan",
                                                "metrics"};

struct ModelEntry {
  std::string label;
  std::string name;
  json params;  // fully resolved
};

struct SweepConfig {
  std::string variable;
  double from = 0.0;
  double to = 1.0;
  int steps = 2;
  bool log = false;
};

struct Config {
  std::vector<ModelEntry> models;
  bool multi = false;  // declared through "models"
  std::string computation;
  std::string method = "auto";
  std::string estimator = "geometric";
  std::optional<SweepConfig> sweep;
  std::vector<std::string> submanifolds;
  bool include_full = true;
  std::vector<std::vector<double>> theta;
  cg_quadrature_spec quad{};
  cg_grid_spec grid{};
  cg_mc_spec mc{};
  std::uint64_t seed = 1;
  std::string units = "bits";
  std::string output = "results";
  bool plot = false;
  int threads = 0;
};

void check_keys(const json& obj, const std::string& where, const std::vector<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) != allowed.end()) continue;
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    throw ConfigError("unknown key '" + it.key() + "' in " + where + " (allowed: " + list + ")");
  }
}

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

bool one_of(const std::string& v, const std::vector<std::string>& options) {
  return std::find(options.begin(), options.end(), v) != options.end();
}

std::string joined(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
  return s;
}

ModelEntry parse_model(const json& j, const std::string& where, bool need_label) {
  check_keys(j, where, {"label", "name", "params"});
  ModelEntry e;
  e.name = get_or<std::string>(j, "name", "");
  if (e.name.empty()) throw ConfigError(where + " needs a 'name'");
  e.label = get_or<std::string>(j, "label", need_label ? "" : e.name);
  if (e.label.empty()) throw ConfigError(where + " needs a 'label'");
  json params = j.contains("params") ? j.at("params") : json::object();
  if (!params.is_object()) throw ConfigError(where + ".params must be a JSON object");
  e.params = resolved_params(create_model(e.name, params).get());
  return e;
}

Config parse_config(const json& doc) {
  check_keys(doc, "config",
             {"schema_version", "model", "models", "computation", "method", "estimator", "sweep", "submanifolds",
              "include_full", "theta", "quadrature", "grid", "monte_carlo", "seed", "units", "output", "plot",
              "threads"});
  if (!doc.contains("schema_version")) throw ConfigError("config is missing 'schema_version'");
  const int version = get_or<int>(doc, "schema_version", 0);
  if (version != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");

  Config c;
  if (doc.contains("model") == doc.contains("models"))
    throw ConfigError("config needs exactly one of 'model' or 'models'");
  if (doc.contains("model")) {
    c.models.push_back(parse_model(doc.at("model"), "model", false));
  } else {
    const json& list = doc.at("models");
    if (!list.is_array() || list.empty()) throw ConfigError("'models' must be a non-empty list");
    c.multi = true;
    for (std::size_t i = 0; i < list.size(); ++i) {
      ModelEntry e = parse_model(list[i], "models[" + std::to_string(i) + "]", true);
      for (const auto& prev : c.models)
        if (prev.label == e.label) throw ConfigError("duplicate model label '" + e.label + "'");
      c.models.push_back(std::move(e));
    }
  }

  c.computation = get_or<std::string>(doc, "computation", "");
  if (!one_of(c.computation, kComputations))
    throw ConfigError("'computation' must be one of: " + joined(kComputations));
  c.method = get_or<std::string>(doc, "method", c.method);
  if (!one_of(c.method, {"auto", "quadrature", "monte-carlo"}))
    throw ConfigError("'method' must be one of: auto, quadrature, monte-carlo");
  c.estimator = get_or<std::string>(doc, "estimator", c.estimator);
  if (!one_of(c.estimator, {"geometric", "exact"})) throw ConfigError("'estimator' must be geometric or exact");

  if (doc.contains("sweep")) {
    const json& s = doc.at("sweep");
    check_keys(s, "sweep", {"variable", "from", "to", "steps", "log"});
    SweepConfig sw;
    sw.variable = get_or<std::string>(s, "variable", "");
    if (sw.variable.empty()) throw ConfigError("sweep needs a 'variable'");
    if (!s.contains("from") || !s.contains("to") || !s.contains("steps"))
      throw ConfigError("sweep needs 'from', 'to' and 'steps'");
    sw.from = get_or<double>(s, "from", 0.0);
    sw.to = get_or<double>(s, "to", 0.0);
    sw.steps = get_or<int>(s, "steps", 0);
    sw.log = get_or<bool>(s, "log", false);
    if (sw.steps < 2) throw ConfigError("sweep steps must be >= 2");
    if (!(sw.from < sw.to)) throw ConfigError("sweep needs from < to");
    if (sw.log && sw.from <= 0.0) throw ConfigError("log-spaced sweep needs a positive range");
    for (const auto& m : c.models) {
      const std::vector<std::string> keys =
          sw.variable == "both" ? std::vector<std::string>{"epsilon", "delta"} : std::vector<std::string>{sw.variable};
      for (const auto& k : keys) {
        if (!m.params.contains(k) || !m.params.at(k).is_number())
          throw ConfigError("sweep variable '" + sw.variable + "' is not a numeric parameter of model '" + m.name +
                            "'");
        if (m.params.at(k).is_number_integer())
          throw ConfigError("sweep variable '" + k + "' of model '" + m.name + "' is an integer parameter");
      }
    }
    c.sweep = sw;
  }

  if (doc.contains("submanifolds")) {
    try {
      c.submanifolds = doc.at("submanifolds").get<std::vector<std::string>>();
    } catch (const json::exception&) {
      throw ConfigError("'submanifolds' must be a list of names");
    }
    for (const auto& s : c.submanifolds)
      if (s != "A" && s != "B") throw ConfigError("unknown submanifold '" + s + "' (known: A, B)");
    for (const auto& m : c.models)
      if (!c.submanifolds.empty() && !cg_model_has_submanifolds(create_model(m.name, m.params).get()))
        throw ConfigError("model '" + m.name + "' has no submanifolds");
  }
  c.include_full = get_or<bool>(doc, "include_full", true);

  if (doc.contains("theta")) {
    const json& t = doc.at("theta");
    try {
      if (t.is_array() && !t.empty() && t[0].is_number())
        for (const auto& v : t) c.theta.push_back({v.get<double>()});
      else
        c.theta = t.get<std::vector<std::vector<double>>>();
    } catch (const json::exception&) {
      throw ConfigError("'theta' must be a list of points");
    }
  }

  cg_quadrature_spec_default(&c.quad);
  if (doc.contains("quadrature")) {
    const json& q = doc.at("quadrature");
    check_keys(q, "quadrature", {"nodes_per_axis", "rule", "effect_tail_sigmas", "check_convergence"});
    c.quad.nodes_per_axis = get_or<int>(q, "nodes_per_axis", c.quad.nodes_per_axis);
    const auto rule = get_or<std::string>(q, "rule", "gauss-legendre");
    if (rule != "gauss-legendre" && rule != "trapezoid")
      throw ConfigError("quadrature.rule must be gauss-legendre or trapezoid");
    c.quad.trapezoid = rule == "trapezoid";
    c.quad.effect_tail_sigmas = get_or<double>(q, "effect_tail_sigmas", c.quad.effect_tail_sigmas);
    c.quad.check_convergence = get_or<bool>(q, "check_convergence", false);
    if (c.quad.nodes_per_axis < 21) throw ConfigError("quadrature.nodes_per_axis must be >= 21");
    if (!(c.quad.effect_tail_sigmas >= 4.0)) throw ConfigError("quadrature.effect_tail_sigmas must be >= 4");
  }
  cg_grid_spec_default(&c.grid);
  if (doc.contains("grid")) {
    const json& g = doc.at("grid");
    check_keys(g, "grid", {"nodes_per_axis"});
    c.grid.nodes_per_axis = get_or<int>(g, "nodes_per_axis", c.grid.nodes_per_axis);
    if (c.grid.nodes_per_axis < 2) throw ConfigError("grid.nodes_per_axis must be >= 2");
  }
  cg_mc_spec_default(&c.mc);
  if (doc.contains("monte_carlo")) {
    const json& m = doc.at("monte_carlo");
    check_keys(m, "monte_carlo", {"outer_samples", "inner_samples", "batches"});
    c.mc.outer_samples = get_or<long>(m, "outer_samples", c.mc.outer_samples);
    c.mc.inner_samples = get_or<int>(m, "inner_samples", c.mc.inner_samples);
    c.mc.batches = get_or<int>(m, "batches", c.mc.batches);
    if (c.mc.batches < 2 || c.mc.inner_samples < 2 || c.mc.outer_samples < c.mc.batches)
      throw ConfigError("monte_carlo needs batches >= 2, inner_samples >= 2 and outer_samples >= batches");
  }
  c.seed = get_or<std::uint64_t>(doc, "seed", c.seed);
  c.units = get_or<std::string>(doc, "units", c.units);
  c.output = get_or<std::string>(doc, "output", c.output);
  c.plot = get_or<bool>(doc, "plot", c.plot);
  c.threads = get_or<int>(doc, "threads", c.threads);

  const bool is_ei = c.computation != "eigen" && c.computation != "metrics";
  if (!is_ei && c.theta.empty()) throw ConfigError("computation '" + c.computation + "' needs 'theta' points");
  if (c.computation == "crossover-scan") {
    if (!c.sweep) throw ConfigError("crossover-scan needs a 'sweep'");
    if (c.sweep->steps < 8) throw ConfigError("crossover-scan needs at least 8 sweep steps");
  }
  return c;
}

void validate_runtime(Config& c) {
  if (c.units != "bits" && c.units != "nats") throw ConfigError("'units' must be bits or nats");
  if (c.threads < 0) throw ConfigError("'threads' must be >= 0");
  if (c.output.empty()) throw ConfigError("'output' must be a directory path");
  c.mc.seed = c.seed;
}

json resolved_json(const Config& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  if (c.multi) {
    json list = json::array();
    for (const auto& m : c.models) list.push_back({{"label", m.label}, {"name", m.name}, {"params", m.params}});
    j["models"] = list;
  } else {
    j["model"] = {{"name", c.models[0].name}, {"params", c.models[0].params}};
  }
  j["computation"] = c.computation;
  j["method"] = c.method;
  j["estimator"] = c.estimator;
  if (c.sweep)
    j["sweep"] = {{"variable", c.sweep->variable},
                  {"from", c.sweep->from},
                  {"to", c.sweep->to},
                  {"steps", c.sweep->steps},
                  {"log", c.sweep->log}};
  j["submanifolds"] = c.submanifolds;
  j["include_full"] = c.include_full;
  if (!c.theta.empty()) j["theta"] = c.theta;
  j["quadrature"] = {{"nodes_per_axis", c.quad.nodes_per_axis},
                     {"rule", c.quad.trapezoid ? "trapezoid" : "gauss-legendre"},
                     {"effect_tail_sigmas", c.quad.effect_tail_sigmas},
                     {"check_convergence", c.quad.check_convergence != 0}};
  j["grid"] = {{"nodes_per_axis", c.grid.nodes_per_axis}};
  j["monte_carlo"] = {
      {"outer_samples", c.mc.outer_samples}, {"inner_samples", c.mc.inner_samples}, {"batches", c.mc.batches}};
  j["seed"] = c.seed;
  j["units"] = c.units;
  j["output"] = c.output;
  j["plot"] = c.plot;
  j["threads"] = c.threads;
  return j;
}

// ---------------------------------------------------------------------------
// Execution

int resolve_threads(int t) {
  if (t > 0) return t;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n) on a pool; results land by index so order never depends on scheduling.
template <class Fn>
void run_pool(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

struct Series {
  std::string label;   // used for argmax and crossings
  std::string column;  // csv header stem, without the unit suffix
  std::size_t model = 0;
  bool exact = false;
  std::string submanifold;  // empty: full model
};

std::vector<Series> build_series(const Config& c, const std::vector<int>& dims) {
  std::vector<Series> out;
  const bool scan = c.computation == "crossover-scan";
  const bool exact_only = c.computation == "ei-exact" || (scan && c.estimator == "exact");
  const bool geom_only = c.computation == "ei-geom" || (scan && c.estimator == "geometric");
  for (std::size_t i = 0; i < c.models.size(); ++i) {
    const std::string prefix = c.multi ? c.models[i].label : "";
    auto add = [&](const std::string& tag, bool exact, const std::string& sub) {
      Series s;
      s.model = i;
      s.exact = exact;
      s.submanifold = sub;
      std::string stem = prefix;
      if (!tag.empty()) stem += (stem.empty() ? "" : "_") + tag;
      s.label = stem.empty() ? c.models[i].name : stem;
      s.column = stem.empty() ? "ei" : "ei_" + stem;
      out.push_back(s);
    };
    if (exact_only) {
      add("", true, "");
      continue;
    }
    const bool lone_full = c.include_full && c.submanifolds.empty();
    if (geom_only) {
      if (c.include_full) add(lone_full ? "" : std::to_string(dims[i]) + "d", false, "");
    } else {
      add("exact", true, "");
      if (c.include_full) add("geom", false, "");
    }
    for (const auto& s : c.submanifolds) add("sub" + s, false, s);
  }
  if (out.empty()) throw ConfigError("nothing to compute: include_full is false and no submanifolds are listed");
  return out;
}

struct Outcome {
  bool ok = false;
  cg_ei_report report{};
  cg_status status = CG_OK;
  std::string error;
};

Outcome compute(const Config& c, const cg_model* m, const Series& s, int inner_threads) {
  Outcome o;
  if (s.exact) {
    cg_quadrature_spec q = c.quad;
    q.threads = inner_threads;
    cg_mc_spec mc = c.mc;
    mc.threads = inner_threads;
    if (c.method == "monte-carlo") {
      o.status = cg_ei_exact_mc(m, &mc, &o.report);
    } else {
      o.status = cg_ei_exact_quadrature(m, &q, &o.report);
      if (o.status == CG_USE_MONTE_CARLO && c.method == "auto") o.status = cg_ei_exact_mc(m, &mc, &o.report);
    }
  } else {
    cg_grid_spec g = c.grid;
    g.threads = inner_threads;
    o.status = cg_ei_geometric(m, s.submanifold.empty() ? nullptr : s.submanifold.c_str(), &g, &o.report);
  }
  o.ok = o.status == CG_OK;
  if (!o.ok) o.error = cg_last_error();
  return o;
}

std::vector<double> sweep_grid(const SweepConfig& s) {
  std::vector<double> g(static_cast<std::size_t>(s.steps));
  if (cg_make_grid(s.from, s.to, s.steps, s.log, g.data()) != CG_OK) throw ConfigError(cg_last_error());
  return g;
}

json params_at(const ModelEntry& m, const std::optional<SweepConfig>& sweep, double value) {
  json p = m.params;
  if (!sweep) return p;
  if (sweep->variable == "both") {
    p["epsilon"] = value;
    p["delta"] = value;
  } else {
    p[sweep->variable] = value;
  }
  return p;
}

std::string sweep_column(const SweepConfig& s) { return s.variable == "both" ? "delta" : s.variable; }

std::string point_name(const Config& c, double value) {
  if (!c.sweep) return "the single configuration";
  return sweep_column(*c.sweep) + "=" + num(value);
}

// Models for every (sweep point, model entry), created up front so bad parameters are config errors.
std::vector<std::vector<ModelPtr>> build_models(const Config& c, const std::vector<double>& points) {
  std::vector<std::vector<ModelPtr>> out(points.size());
  for (std::size_t p = 0; p < points.size(); ++p)
    for (const auto& m : c.models) {
      try {
        out[p].push_back(create_model(m.name, params_at(m, c.sweep, points[p])));
      } catch (const ConfigError& e) {
        throw ConfigError(std::string(e.what()) + " (at " + point_name(c, points[p]) + ")");
      }
    }
  return out;
}

struct Artifacts {
  std::string csv;
  std::optional<PlotSpec> plot;
  std::string summary;
};

Artifacts run_ei(const Config& c, int threads, std::ostream& err) {
  const std::vector<double> points = c.sweep ? sweep_grid(*c.sweep) : std::vector<double>{0.0};
  const auto models = build_models(c, points);
  std::vector<int> dims;
  for (const auto& m : models[0]) dims.push_back(cg_model_theta_dim(m.get()));
  const std::vector<Series> series = build_series(c, dims);
  const bool scan = c.computation == "crossover-scan";
  if (scan && series.size() < 2) throw ConfigError("crossover-scan needs at least two curves");

  const std::size_t ns = series.size();
  const std::size_t jobs = points.size() * ns;
  const int inner = jobs >= static_cast<std::size_t>(threads) ? 1 : std::max(1, threads / static_cast<int>(jobs));
  std::vector<Outcome> results(jobs);
  run_pool(jobs, threads, [&](std::size_t k) {
    const Series& s = series[k % ns];
    results[k] = compute(c, models[k / ns][s.model].get(), s, inner);
  });

  for (std::size_t k = 0; k < jobs; ++k) {
    const Outcome& o = results[k];
    if (o.ok) continue;
    const std::string where = point_name(c, points[k / ns]) + ", curve " + series[k % ns].label;
    if (o.status == CG_INVALID_ARGUMENT) throw ConfigError("invalid setting at " + where + ": " + o.error);
    if (!scan) throw NumericError("numeric error at " + where + ": " + o.error);
    err << "warning: point excluded at " << where << ": " << o.error << "\n";
  }
  if (scan)
    for (std::size_t s = 0; s < ns; ++s) {
      bool any = false;
      for (std::size_t p = 0; p < points.size(); ++p) any = any || results[p * ns + s].ok;
      if (!any) throw NumericError("numeric error: every point of curve " + series[s].label + " failed");
    }

  const bool bits = c.units == "bits";
  const double scale = bits ? 1.0 / std::log(2.0) : 1.0;
  const std::string unit = "_" + c.units;
  auto value = [&](std::size_t p, std::size_t s) {
    const Outcome& o = results[p * ns + s];
    if (!o.ok) return std::numeric_limits<double>::quiet_NaN();
    return bits ? o.report.bits : o.report.nats;
  };
  std::vector<bool> has_stderr(ns, false);
  for (std::size_t k = 0; k < jobs; ++k)
    if (results[k].ok && results[k].report.has_stderr) has_stderr[k % ns] = true;

  for (std::size_t k = 0; k < jobs; ++k) {
    const Outcome& o = results[k];
    if (!o.ok) continue;
    const std::string where = point_name(c, points[k / ns]) + ", curve " + series[k % ns].label;
    if (o.report.flags & CG_FLAG_UNCONVERGED)
      err << "warning: quadrature not converged at " << where << " (" << num(o.report.convergence_delta)
          << " nats)\n";
    if (o.report.flags & CG_FLAG_UNRELIABLE) err << "warning: Monte Carlo estimate unreliable at " << where << "\n";
  }

  std::ostringstream csv;
  std::vector<std::string> header;
  if (c.sweep) header.push_back(sweep_column(*c.sweep));
  for (std::size_t s = 0; s < ns; ++s) {
    header.push_back(series[s].column + unit);
    if (has_stderr[s]) header.push_back(series[s].column + "_stderr" + unit);
  }
  for (std::size_t i = 0; i < header.size(); ++i) csv << (i ? "," : "") << header[i];
  csv << "\n";
  for (std::size_t p = 0; p < points.size(); ++p) {
    bool first = true;
    auto cell = [&](const std::string& v) {
      csv << (first ? "" : ",") << v;
      first = false;
    };
    if (c.sweep) cell(num(points[p]));
    for (std::size_t s = 0; s < ns; ++s) {
      cell(num(value(p, s)));
      if (has_stderr[s]) {
        const Outcome& o = results[p * ns + s];
        cell(num(o.ok && o.report.has_stderr ? o.report.stderr_nats * scale
                                             : std::numeric_limits<double>::quiet_NaN()));
      }
    }
    csv << "\n";
  }

  Artifacts a;
  if (scan) {
    for (std::size_t p = 0; p < points.size(); ++p) {
      std::size_t best = ns;
      for (std::size_t s = 0; s < ns; ++s) {
        const double v = value(p, s);
        if (std::isfinite(v) && (best == ns || v > value(p, best))) best = s;
      }
      csv << "#argmax," << num(points[p]) << "," << (best == ns ? "nan" : series[best].label) << "\n";
    }
    for (std::size_t i = 0; i < ns; ++i)
      for (std::size_t j = i + 1; j < ns; ++j) {
        std::vector<double> ya(points.size()), yb(points.size());
        for (std::size_t p = 0; p < points.size(); ++p) {
          ya[p] = value(p, i);
          yb[p] = value(p, j);
        }
        std::size_t count = 0;
        cg_find_crossings(ya.data(), yb.data(), points.data(), points.size(), c.sweep->log, nullptr, nullptr,
                          nullptr, 0, &count);
        std::vector<double> v(count), lo(count), hi(count);
        if (count > 0 && cg_find_crossings(ya.data(), yb.data(), points.data(), points.size(), c.sweep->log,
                                           v.data(), lo.data(), hi.data(), count, &count) != CG_OK)
          throw NumericError(std::string("crossing search failed: ") + cg_last_error());
        for (std::size_t k = 0; k < count; ++k)
          csv << "#crossing," << series[i].label << "," << series[j].label << "," << num(v[k]) << "," << num(lo[k])
              << "," << num(hi[k]) << "\n";
      }
  }
  a.csv = csv.str();

  if (c.sweep) {
    PlotSpec plot;
    plot.title = c.computation + " (" + c.models[0].name + (c.multi ? ", ..." : "") + ")";
    plot.x_label = sweep_column(*c.sweep);
    plot.y_label = "EI (" + c.units + ")";
    plot.log_x = c.sweep->log;
    plot.x = points;
    for (std::size_t s = 0; s < ns; ++s) {
      PlotSeries ps{series[s].label, {}};
      for (std::size_t p = 0; p < points.size(); ++p) ps.y.push_back(value(p, s));
      plot.series.push_back(std::move(ps));
    }
    a.plot = std::move(plot);
  } else {
    std::ostringstream sum;
    const char* methods[] = {"quadrature", "monte-carlo", "geometric", "dimmer-approx"};
    for (std::size_t s = 0; s < ns; ++s) {
      const cg_ei_report& r = results[s].report;
      sum << series[s].label << ": " << num(value(0, s)) << " " << c.units << " [" << methods[r.method];
      if (r.has_stderr) sum << ", stderr " << num(r.stderr_nats * scale);
      sum << ", " << r.grid << "]";
      if (r.flags & CG_FLAG_NEGATIVE_GEOMETRIC) sum << " (negative: geometric value no longer tracks exact EI)";
      sum << "\n";
    }
    a.summary = sum.str();
  }
  return a;
}

// eigen and metrics: one row per (sweep point, model, theta).
Artifacts run_pointwise(const Config& c, int threads) {
  const std::vector<double> points = c.sweep ? sweep_grid(*c.sweep) : std::vector<double>{0.0};
  const auto models = build_models(c, points);
  std::vector<int> dims;
  for (const auto& m : models[0]) dims.push_back(cg_model_theta_dim(m.get()));
  for (std::size_t i = 0; i < c.models.size(); ++i)
    for (const auto& t : c.theta)
      if (static_cast<int>(t.size()) != dims[i])
        throw ConfigError("theta points for model '" + c.models[i].name + "' need " + std::to_string(dims[i]) +
                          " coordinates");
  const int d = dims[0];
  for (int x : dims)
    if (x != d) throw ConfigError("all models of a pointwise computation must share the parameter dimension");
  const bool eigen = c.computation == "eigen";
  const bool decay = std::all_of(c.models.begin(), c.models.end(), [](const auto& m) { return m.name == "decay-confounder"; });

  struct Row {
    std::vector<double> values;
    std::string error;
    bool numeric_error = false;
  };
  const std::size_t nm = c.models.size();
  const std::size_t nt = c.theta.size();
  std::vector<Row> rows(points.size() * nm * nt);
  run_pool(rows.size(), threads, [&](std::size_t k) {
    const std::size_t p = k / (nm * nt);
    const std::size_t i = (k / nt) % nm;
    const std::vector<double>& theta = c.theta[k % nt];
    const cg_model* m = models[p][i].get();
    Row& row = rows[k];
    auto fail = [&] {
      row.error = cg_last_error();
      row.numeric_error = true;
    };
    if (eigen) {
      std::vector<double> lambda(static_cast<std::size_t>(d));
      double l = 0.0;
      if (cg_eigen(m, theta.data(), theta.size(), lambda.data(), nullptr) != CG_OK) return fail();
      if (cg_mismatch(m, theta.data(), theta.size(), &l) != CG_OK) return fail();
      row.values = lambda;
      row.values.push_back(l);
    } else {
      std::vector<double> g(static_cast<std::size_t>(d * d)), h(g.size());
      if (cg_metrics(m, theta.data(), theta.size(), g.data(), h.data()) != CG_OK) return fail();
      for (int r = 0; r < d; ++r)
        for (int q = r; q < d; ++q) row.values.push_back(g[static_cast<std::size_t>(r * d + q)]);
      for (int r = 0; r < d; ++r)
        for (int q = r; q < d; ++q) row.values.push_back(h[static_cast<std::size_t>(r * d + q)]);
      if (decay) {
        double hc = 0.0, hs = 0.0, series = 0.0;
        if (cg_decay_confounder_metrics(m, theta[0], &hc, &hs, nullptr) != CG_OK) return fail();
        if (cg_decay_confounder_metrics(m, theta[0], &hc, &hs, &series) != CG_OK)
          series = std::numeric_limits<double>::quiet_NaN();
        row.values.insert(row.values.end(), {hc, hs, series});
      }
    }
  });
  for (std::size_t k = 0; k < rows.size(); ++k)
    if (rows[k].numeric_error) {
      std::string where = point_name(c, points[k / (nm * nt)]) + ", theta=(";
      for (std::size_t j = 0; j < c.theta[k % nt].size(); ++j) where += (j ? "," : "") + num(c.theta[k % nt][j]);
      throw NumericError("numeric error at " + where + "): " + rows[k].error);
    }

  std::ostringstream csv;
  std::vector<std::string> header;
  if (c.sweep) header.push_back(sweep_column(*c.sweep));
  if (c.multi) header.push_back("model");
  for (int j = 1; j <= d; ++j) header.push_back("theta_" + std::to_string(j));
  if (eigen) {
    for (int j = 1; j <= d; ++j) header.push_back("lambda_" + std::to_string(j));
    header.push_back("mismatch");
  } else {
    for (const char* name : {"g", "h"})
      for (int r = 1; r <= d; ++r)
        for (int q = r; q <= d; ++q) header.push_back(std::string(name) + "_" + std::to_string(r) + std::to_string(q));
    if (decay) header.insert(header.end(), {"h_caus", "h_stat", "h_stat_series"});
  }
  for (std::size_t i = 0; i < header.size(); ++i) csv << (i ? "," : "") << header[i];
  csv << "\n";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::vector<std::string> cells;
    if (c.sweep) cells.push_back(num(points[k / (nm * nt)]));
    if (c.multi) cells.push_back(c.models[(k / nt) % nm].label);
    for (double t : c.theta[k % nt]) cells.push_back(num(t));
    for (double v : rows[k].values) cells.push_back(num(v));
    for (std::size_t i = 0; i < cells.size(); ++i) csv << (i ? "," : "") << cells[i];
    csv << "\n";
  }
  Artifacts a;
  a.csv = csv.str();
  return a;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  f.close();
  if (!f) throw ConfigError("cannot write " + path.string());
}

json load_document(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  // A manifest carries the resolved config under "config".
  if (doc.is_object() && doc.contains("config") && doc.contains("tool")) return doc.at("config");
  return doc;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used == 0 || used != item.size()) throw ConfigError("cannot parse number '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty number list");
  return out;
}

}  // namespace

std::optional<int> threads_from_env() {
  const char* v = std::getenv("CG_THREADS");
  if (v == nullptr || *v == '\0') return std::nullopt;
  std::size_t used = 0;
  const int t = std::stoi(v, &used);
  if (used != std::string(v).size() || t < 0) throw std::invalid_argument("CG_THREADS must be a non-negative integer");
  return t;
}

int run_experiment(const std::string& config_path, const RunOverrides& overrides, std::ostream& out,
                   std::ostream& err) {
  try {
    Config c = parse_config(load_document(config_path));
    std::optional<int> env_threads;
    try {
      env_threads = threads_from_env();
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    if (env_threads) c.threads = *env_threads;
    if (overrides.threads) c.threads = *overrides.threads;
    if (overrides.output) c.output = *overrides.output;
    if (overrides.seed) c.seed = *overrides.seed;
    if (overrides.units) c.units = *overrides.units;
    if (overrides.plot) c.plot = *overrides.plot;
    validate_runtime(c);

    const fs::path dir(c.output);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("output directory " + c.output + " is not writable");

    const int threads = resolve_threads(c.threads);
    const bool pointwise = c.computation == "eigen" || c.computation == "metrics";
    Artifacts a = pointwise ? run_pointwise(c, threads) : run_ei(c, threads, err);

    write_file(dir / "results.csv", a.csv);
    json manifest;
    manifest["tool"] = "cgeo";
    manifest["version"] = cg_version();
    manifest["seed"] = c.seed;
    manifest["config"] = resolved_json(c);
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    if (c.plot && a.plot) write_file(dir / "plot.svg", render_svg(*a.plot));
    out << a.summary;
    out << "wrote " << (dir / "results.csv").string() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}

int list_models(bool as_json, std::ostream& out, std::ostream& err) {
  try {
    out << read_buffer([&](char* b, std::size_t c, std::size_t* n) { return cg_list_models(as_json, b, c, n); });
    if (as_json) out << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}

int eigen_query(const std::string& model, const std::string& theta, const std::string& params_json,
                const std::vector<std::string>& sets, std::ostream& out, std::ostream& err) {
  try {
    json params = json::object();
    if (!params_json.empty()) {
      try {
        params = json::parse(params_json);
      } catch (const json::parse_error& e) {
        throw ConfigError(std::string("--params is not valid JSON: ") + e.what());
      }
      if (!params.is_object()) throw ConfigError("--params must be a JSON object");
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
      const std::string key = s.substr(0, eq);
      const std::string raw = s.substr(eq + 1);
      try {
        params[key] = json::parse(raw);
      } catch (const json::parse_error&) {
        params[key] = raw;  // bare strings such as profile=quadratic
      }
    }
    const ModelPtr m = create_model(model, params);
    const std::vector<double> t = parse_list(theta);
    const int d = cg_model_theta_dim(m.get());
    if (static_cast<int>(t.size()) != d)
      throw ConfigError("--theta needs " + std::to_string(d) + " coordinates for model " + model);
    std::vector<double> lambda(static_cast<std::size_t>(d));
    double l = 0.0;
    cg_status st = cg_eigen(m.get(), t.data(), t.size(), lambda.data(), nullptr);
    if (st == CG_OK) st = cg_mismatch(m.get(), t.data(), t.size(), &l);
    if (st != CG_OK) {
      const std::string msg = cg_last_error();
      if (st == CG_INVALID_ARGUMENT || st == CG_DOMAIN) throw ConfigError(msg);
      std::string where;
      for (std::size_t j = 0; j < t.size(); ++j) where += (j ? "," : "") + num(t[j]);
      throw NumericError("numeric error at theta=(" + where + "): " + msg);
    }
    for (int j = 0; j < d; ++j) out << "lambda_" << j + 1 << "," << num(lambda[static_cast<std::size_t>(j)]) << "\n";
    out << "mismatch," << num(l) << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << e.what() << "\n";
    return kExitNumeric;
  }
}

}  // namespace cgeo_cli
