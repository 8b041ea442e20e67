#include "cgeo/cgeo.h"

#include "cgeo/models.hpp"
#include "registry.hpp"

#include <cstring>
#include <string>

struct cg_model {
  cgeo::registry::BuiltModel built;
};

namespace {

thread_local std::string g_last_error;

cg_status status_of(cgeo::ErrorCode c) {
  using cgeo::ErrorCode;
  switch (c) {
    case ErrorCode::InvalidArgument: return CG_INVALID_ARGUMENT;
    case ErrorCode::DomainViolation: return CG_DOMAIN;
    case ErrorCode::UnreachableParameter: return CG_UNREACHABLE;
    case ErrorCode::DegenerateDistribution:
    case ErrorCode::DegenerateModel:
    case ErrorCode::IllPosedInterventions:
    case ErrorCode::DegenerateEmbedding:
    case ErrorCode::DegenerateProfile:
    case ErrorCode::SingularJacobian: return CG_DEGENERATE;
    case ErrorCode::UseMonteCarlo: return CG_USE_MONTE_CARLO;
    case ErrorCode::RegimeViolation: return CG_REGIME;
    case ErrorCode::Numeric: return CG_NUMERIC;
  }
  return CG_INTERNAL;
}

cg_status fail(cg_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class F>
cg_status guarded(F&& f) {
  try {
    g_last_error.clear();
    return f();
  } catch (const cgeo::registry::UnknownModel& e) {
    return fail(CG_UNKNOWN_MODEL, e.what());
  } catch (const cgeo::Error& e) {
    return fail(status_of(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(CG_INVALID_ARGUMENT, std::string("invalid JSON: ") + e.what());
  } catch (const std::bad_alloc&) {
    return fail(CG_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CG_INTERNAL, e.what());
  } catch (...) {
    return fail(CG_INTERNAL, "unknown failure");
  }
}

cg_status write_string(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (!buf || cap < s.size() + 1) {
    if (buf && cap > 0) buf[0] = '\0';
    return fail(CG_BUFFER_TOO_SMALL, "buffer too small");
  }
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return CG_OK;
}

void fill(const cgeo::EIReport& r, cg_ei_report* out) {
  std::memset(out, 0, sizeof *out);
  out->nats = r.nats;
  out->bits = r.bits;
  out->method = static_cast<cg_method>(r.method);
  if (r.volume_term) {
    out->has_volume_term = 1;
    out->volume_term = *r.volume_term;
  }
  if (r.mean_mismatch) {
    out->has_mean_mismatch = 1;
    out->mean_mismatch = *r.mean_mismatch;
  }
  if (r.stderr_nats) {
    out->has_stderr = 1;
    out->stderr_nats = *r.stderr_nats;
  }
  if (r.seed) {
    out->has_seed = 1;
    out->seed = *r.seed;
  }
  if (r.convergence_delta) {
    out->has_convergence_delta = 1;
    out->convergence_delta = *r.convergence_delta;
  }
  unsigned flags = 0;
  if (r.negative_geometric) flags |= CG_FLAG_NEGATIVE_GEOMETRIC;
  if (r.unconverged) flags |= CG_FLAG_UNCONVERGED;
  if (r.unreliable) flags |= CG_FLAG_UNRELIABLE;
  out->flags = flags;
  std::strncpy(out->grid, r.grid.c_str(), sizeof out->grid - 1);
}

cgeo::Vec theta_of(const cg_model* m, const double* theta, size_t dim) {
  const auto d = static_cast<size_t>(m->built.model->theta.dim());
  if (!theta || dim != d)
    cgeo::raise(cgeo::ErrorCode::InvalidArgument,
                "theta must have " + std::to_string(d) + " components, got " + std::to_string(dim));
  cgeo::Vec t = Eigen::Map<const cgeo::Vec>(theta, static_cast<Eigen::Index>(dim));
  if (!m->built.model->theta.contains(t, 1e-12))
    cgeo::raise(cgeo::ErrorCode::DomainViolation, "theta " + cgeo::format_point(t) + " lies outside the parameter domain");
  return t;
}

void copy_row_major(const cgeo::Mat& m, double* out) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r * m.cols() + c] = m(r, c);
}

#define CG_REQUIRE(cond, msg) \
  if (!(cond)) return fail(CG_INVALID_ARGUMENT, msg)

}  // namespace

extern "C" {

void cg_quadrature_spec_default(cg_quadrature_spec* spec) {
  if (!spec) return;
  const cgeo::QuadratureSpec d;
  spec->nodes_per_axis = d.nodes_per_axis;
  spec->trapezoid = 0;
  spec->effect_tail_sigmas = d.effect_tail_sigmas;
  spec->check_convergence = 0;
  spec->threads = 0;
}

void cg_grid_spec_default(cg_grid_spec* spec) {
  if (!spec) return;
  spec->nodes_per_axis = cgeo::GridSpec{}.nodes_per_axis;
  spec->threads = 0;
}

void cg_mc_spec_default(cg_mc_spec* spec) {
  if (!spec) return;
  const cgeo::MonteCarloSpec d;
  spec->outer_samples = d.outer_samples;
  spec->inner_samples = d.inner_samples;
  spec->seed = d.seed;
  spec->batches = d.batches;
  spec->threads = 0;
}

const char* cg_version(void) { return CGEO_VERSION_STRING; }

const char* cg_status_name(cg_status status) {
  switch (status) {
    case CG_OK: return "ok";
    case CG_INVALID_ARGUMENT: return "invalid-argument";
    case CG_UNKNOWN_MODEL: return "unknown-model";
    case CG_DOMAIN: return "domain-violation";
    case CG_UNREACHABLE: return "unreachable-parameter";
    case CG_DEGENERATE: return "degenerate";
    case CG_USE_MONTE_CARLO: return "use-monte-carlo";
    case CG_REGIME: return "regime-violation";
    case CG_NUMERIC: return "numeric";
    case CG_BUFFER_TOO_SMALL: return "buffer-too-small";
    case CG_INTERNAL: return "internal";
  }
  return "unknown-status";
}

const char* cg_last_error(void) { return g_last_error.c_str(); }

cg_status cg_list_models(int as_json, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    const auto& cat = cgeo::registry::catalog();
    std::string s;
    if (as_json) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& m : cat) {
        nlohmann::json params = nlohmann::json::array();
        for (const auto& p : m.params)
          params.push_back({{"name", p.name}, {"type", p.type}, {"default", p.default_value},
                            {"description", p.description}});
        arr.push_back({{"name", m.name}, {"description", m.description}, {"params", params}});
      }
      s = nlohmann::json{{"models", arr}}.dump(2);
    } else {
      for (const auto& m : cat) {
        s += m.name + "\n    " + m.description + "\n";
        for (const auto& p : m.params)
          s += "    " + p.name + " (" + p.type + ", default " + p.default_value.dump() + "): " + p.description + "\n";
      }
    }
    return write_string(s, buf, cap, needed);
  });
}

cg_status cg_model_create(const char* name, const char* params_json, cg_model** out) {
  return guarded([&] {
    CG_REQUIRE(name && out, "model name and output pointer are required");
    *out = nullptr;
    nlohmann::json params;
    if (params_json && *params_json) params = nlohmann::json::parse(params_json);
    auto m = std::make_unique<cg_model>(cg_model{cgeo::registry::build(name, params)});
    *out = m.release();
    return CG_OK;
  });
}

void cg_model_destroy(cg_model* model) { delete model; }

cg_status cg_model_params(const cg_model* model, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    CG_REQUIRE(model, "model is NULL");
    return write_string(model->built.params.dump(), buf, cap, needed);
  });
}

int cg_model_theta_dim(const cg_model* model) { return model ? model->built.model->theta.dim() : 0; }

int cg_model_has_submanifolds(const cg_model* model) { return model && model->built.has_submanifolds ? 1 : 0; }

cg_status cg_ei_exact_quadrature(const cg_model* model, const cg_quadrature_spec* spec, cg_ei_report* out) {
  return guarded([&] {
    CG_REQUIRE(model && out, "model and report are required");
    cgeo::QuadratureSpec q;
    if (spec) {
      q.nodes_per_axis = spec->nodes_per_axis;
      q.rule = spec->trapezoid ? cgeo::QuadRule::Trapezoid : cgeo::QuadRule::GaussLegendre;
      q.effect_tail_sigmas = spec->effect_tail_sigmas;
      q.check_convergence = spec->check_convergence != 0;
      q.threads = spec->threads;
    }
    const auto& m = *model->built.model;
    fill(cgeo::ei_exact_quadrature(m.interventions, m.intervention, m.effect, q), out);
    return CG_OK;
  });
}

cg_status cg_ei_exact_mc(const cg_model* model, const cg_mc_spec* spec, cg_ei_report* out) {
  return guarded([&] {
    CG_REQUIRE(model && out, "model and report are required");
    cgeo::MonteCarloSpec mc;
    if (spec) {
      mc.outer_samples = spec->outer_samples;
      mc.inner_samples = spec->inner_samples;
      mc.seed = spec->seed;
      mc.batches = spec->batches;
      mc.threads = spec->threads;
    }
    const auto& m = *model->built.model;
    fill(cgeo::ei_exact_mc(m.interventions, m.intervention, m.effect, mc), out);
    return CG_OK;
  });
}

cg_status cg_ei_geometric(const cg_model* model, const char* submanifold, const cg_grid_spec* spec,
                          cg_ei_report* out) {
  return guarded([&] {
    CG_REQUIRE(model && out, "model and report are required");
    cgeo::GridSpec g;
    if (spec) {
      g.nodes_per_axis = spec->nodes_per_axis;
      g.threads = spec->threads;
    }
    const auto& m = *model->built.model;
    const std::string sub = submanifold ? submanifold : "";
    if (sub.empty()) {
      fill(cgeo::ei_geometric(m.g, m.h, m.theta, g), out);
      return CG_OK;
    }
    if (!model->built.has_submanifolds)
      return fail(CG_INVALID_ARGUMENT, "model " + model->built.name + " has no submanifolds");
    if (sub == "A" || sub == "subA") {
      fill(cgeo::coarse_grained_ei(m.g, m.h, cgeo::submanifold_A(), g), out);
    } else if (sub == "B" || sub == "subB") {
      fill(cgeo::coarse_grained_ei(m.g, m.h, cgeo::submanifold_B(), g), out);
    } else {
      return fail(CG_INVALID_ARGUMENT, "unknown submanifold '" + sub + "' (known: A, B)");
    }
    return CG_OK;
  });
}

cg_status cg_ei_dimmer_approx(const cg_model* model, int nodes, cg_ei_report* out) {
  return guarded([&] {
    CG_REQUIRE(model && out, "model and report are required");
    CG_REQUIRE(nodes >= 2, "nodes must be >= 2");
    const auto& d = model->built.dimmer;
    if (!d) return fail(CG_INVALID_ARGUMENT, "the dimmer approximation needs a continuous dimmer model");
    const auto noise = d->noise;
    fill(cgeo::ei_dimmer_approx(d->profile.as_1d(), [noise](double y) { return noise.sigma_at(y); }, d->delta,
                                model->built.model->theta, nodes),
         out);
    return CG_OK;
  });
}

cg_status cg_metrics(const cg_model* model, const double* theta, size_t dim, double* g_out, double* h_out) {
  return guarded([&] {
    CG_REQUIRE(model, "model is NULL");
    const cgeo::Vec t = theta_of(model, theta, dim);
    const auto& m = *model->built.model;
    if (g_out) copy_row_major(m.g(t), g_out);
    if (h_out) copy_row_major(m.h(t), h_out);
    return CG_OK;
  });
}

cg_status cg_eigen(const cg_model* model, const double* theta, size_t dim, double* eigenvalues_out,
                   double* basis_out) {
  return guarded([&] {
    CG_REQUIRE(model && eigenvalues_out, "model and eigenvalue buffer are required");
    const cgeo::Vec t = theta_of(model, theta, dim);
    const auto& m = *model->built.model;
    const auto rep = cgeo::causal_eigenvalues(m.g(t), m.h(t));
    for (size_t i = 0; i < rep.eigenvalues.size(); ++i) eigenvalues_out[i] = rep.eigenvalues[i];
    if (basis_out) copy_row_major(rep.basis, basis_out);
    return CG_OK;
  });
}

cg_status cg_mismatch(const cg_model* model, const double* theta, size_t dim, double* out) {
  return guarded([&] {
    CG_REQUIRE(model && out, "model and output are required");
    const cgeo::Vec t = theta_of(model, theta, dim);
    const auto& m = *model->built.model;
    *out = cgeo::mismatch(m.g(t), m.h(t));
    return CG_OK;
  });
}

cg_status cg_decay_confounder_metrics(const cg_model* model, double theta, double* h_caus, double* h_stat,
                                      double* h_stat_series) {
  return guarded([&] {
    CG_REQUIRE(model, "model is NULL");
    if (!model->built.decay) return fail(CG_INVALID_ARGUMENT, "model is not decay-confounder");
    const auto m = cgeo::decay_confounder_metrics(*model->built.decay);
    cgeo::Vec t(1);
    t[0] = theta;
    if (h_caus) *h_caus = m.h_caus(t)(0, 0);
    if (h_stat) *h_stat = m.h_stat(t)(0, 0);
    if (h_stat_series) *h_stat_series = m.h_stat_series(theta);
    return CG_OK;
  });
}

cg_status cg_make_grid(double from, double to, int steps, int log_spaced, double* out) {
  return guarded([&] {
    CG_REQUIRE(out, "output buffer is NULL");
    const auto g = cgeo::make_grid(from, to, steps, log_spaced != 0);
    std::copy(g.begin(), g.end(), out);
    return CG_OK;
  });
}

cg_status cg_find_crossings(const double* a, const double* b, const double* grid, size_t n, int log_spaced,
                            double* value_out, double* lo_out, double* hi_out, size_t cap, size_t* count) {
  return guarded([&] {
    CG_REQUIRE(a && b && grid && count, "curves, grid and count are required");
    const std::vector<double> va(a, a + n), vb(b, b + n), vg(grid, grid + n);
    const auto cs = cgeo::find_crossings("a", va, "b", vb, vg, log_spaced != 0);
    *count = cs.size();
    for (size_t i = 0; i < cs.size() && i < cap; ++i) {
      if (value_out) value_out[i] = cs[i].value;
      if (lo_out) lo_out[i] = cs[i].bracket_lo;
      if (hi_out) hi_out[i] = cs[i].bracket_hi;
    }
    return CG_OK;
  });
}

}  // extern "C"
