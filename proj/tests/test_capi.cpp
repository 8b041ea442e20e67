#include <doctest.h>

#include <cgeo/cgeo.h>

#include <cmath>
#include <cstring>
#include <string>
#include <thread>
#include <vector>

namespace {

struct Model {
  cg_model* p = nullptr;
  Model(const char* name, const char* params) { REQUIRE(cg_model_create(name, params, &p) == CG_OK); }
  ~Model() { cg_model_destroy(p); }
};

std::string models_text(int as_json) {
  std::size_t needed = 0;
  REQUIRE(cg_list_models(as_json, nullptr, 0, &needed) == CG_BUFFER_TOO_SMALL);
  std::string buf(needed, '\0');
  REQUIRE(cg_list_models(as_json, buf.data(), buf.size(), &needed) == CG_OK);
  return buf.c_str();
}

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::string(cg_version()) == "0.1.0");
  CHECK(std::string(cg_status_name(CG_OK)) == "ok");
  CHECK(std::string(cg_status_name(CG_USE_MONTE_CARLO)).size() > 0);
}

TEST_CASE("spec defaults") {
  cg_quadrature_spec q;
  cg_quadrature_spec_default(&q);
  CHECK(q.nodes_per_axis == 201);
  CHECK(q.trapezoid == 0);
  CHECK(q.effect_tail_sigmas == 8.0);
  cg_grid_spec g;
  cg_grid_spec_default(&g);
  CHECK(g.nodes_per_axis == 101);
  cg_mc_spec mc;
  cg_mc_spec_default(&mc);
  CHECK(mc.outer_samples == 20000);
  CHECK(mc.inner_samples == 256);
  CHECK(mc.seed == 1);
}

TEST_CASE("model listing") {
  const std::string text = models_text(0);
  for (const char* name : {"dimmer", "dimmer-family", "dimmer-weber", "binary-switch", "two-species", "decay-confounder"})
    CHECK(text.find(name) != std::string::npos);
  const std::string js = models_text(1);
  CHECK(js.front() == '{');
  CHECK(js.find("\"models\"") != std::string::npos);
  char tiny[4];
  std::size_t needed = 0;
  CHECK(cg_list_models(0, tiny, sizeof tiny, &needed) == CG_BUFFER_TOO_SMALL);
  CHECK(needed > sizeof tiny);
  CHECK(tiny[0] == '\0');
}

TEST_CASE("model creation errors") {
  cg_model* m = nullptr;
  CHECK(cg_model_create("lamp", nullptr, &m) == CG_UNKNOWN_MODEL);
  CHECK(m == nullptr);
  CHECK(std::string(cg_last_error()).find("two-species") != std::string::npos);
  CHECK(cg_model_create("dimmer", "{\"epsilon\": -1}", &m) == CG_INVALID_ARGUMENT);
  CHECK(cg_model_create("dimmer", "{\"eps\": 0.1}", &m) == CG_INVALID_ARGUMENT);
  CHECK(std::string(cg_last_error()).find("epsilon") != std::string::npos);
  CHECK(cg_model_create("dimmer", "{not json", &m) == CG_INVALID_ARGUMENT);
  CHECK(cg_model_create("dimmer-family", "{\"a\": 7}", &m) == CG_INVALID_ARGUMENT);
  CHECK(cg_model_create("two-species", "{\"A\": [[1, 2], [0.5, 1]]}", &m) == CG_INVALID_ARGUMENT);
  CHECK(cg_model_create(nullptr, nullptr, &m) == CG_INVALID_ARGUMENT);
  CHECK(cg_model_create("dimmer", nullptr, nullptr) == CG_INVALID_ARGUMENT);
  cg_model_destroy(nullptr);
}

TEST_CASE("resolved parameters") {
  Model m("dimmer-family", "{\"a\": 1.5}");
  std::size_t needed = 0;
  cg_model_params(m.p, nullptr, 0, &needed);
  std::string buf(needed, '\0');
  REQUIRE(cg_model_params(m.p, buf.data(), buf.size(), &needed) == CG_OK);
  CHECK(buf.find("\"a\":1.5") != std::string::npos);
  CHECK(buf.find("\"epsilon\":0.03") != std::string::npos);
  CHECK(cg_model_theta_dim(m.p) == 1);
  CHECK(cg_model_has_submanifolds(m.p) == 0);
}

TEST_CASE("exact EI through the C API") {
  Model m("dimmer", "{\"epsilon\": 0.03, \"delta\": 0.03}");
  cg_quadrature_spec q;
  cg_quadrature_spec_default(&q);
  q.check_convergence = 1;
  cg_ei_report r;
  REQUIRE(cg_ei_exact_quadrature(m.p, &q, &r) == CG_OK);
  CHECK(r.method == CG_METHOD_QUADRATURE);
  CHECK(r.nats == doctest::Approx(1.8176846).epsilon(1e-6));
  CHECK(r.bits == r.nats / std::log(2.0));
  CHECK(r.has_convergence_delta == 1);
  CHECK((r.flags & CG_FLAG_UNCONVERGED) == 0);
  CHECK(std::string(r.grid).find("GL201") != std::string::npos);

  cg_ei_report a;
  REQUIRE(cg_ei_dimmer_approx(m.p, 2001, &a) == CG_OK);
  CHECK(a.method == CG_METHOD_DIMMER_APPROX);
  CHECK(a.nats == doctest::Approx(1.741).epsilon(1e-3));
}

TEST_CASE("two-species: quadrature refuses, Monte Carlo and geometric work") {
  Model m("two-species", nullptr);
  CHECK(cg_model_theta_dim(m.p) == 2);
  CHECK(cg_model_has_submanifolds(m.p) == 1);
  cg_quadrature_spec q;
  cg_quadrature_spec_default(&q);
  cg_ei_report r;
  CHECK(cg_ei_exact_quadrature(m.p, &q, &r) == CG_USE_MONTE_CARLO);

  cg_mc_spec mc;
  cg_mc_spec_default(&mc);
  mc.outer_samples = 300;
  mc.seed = 9;
  REQUIRE(cg_ei_exact_mc(m.p, &mc, &r) == CG_OK);
  CHECK(r.has_stderr == 1);
  CHECK(r.stderr_nats > 0.0);
  CHECK(r.has_seed == 1);
  CHECK(r.seed == 9);
  cg_ei_report again;
  REQUIRE(cg_ei_exact_mc(m.p, &mc, &again) == CG_OK);
  CHECK(std::memcmp(&r.nats, &again.nats, sizeof(double)) == 0);

  cg_grid_spec g;
  cg_grid_spec_default(&g);
  cg_ei_report full, sub_a, sub_b;
  REQUIRE(cg_ei_geometric(m.p, nullptr, &g, &full) == CG_OK);
  REQUIRE(cg_ei_geometric(m.p, "A", &g, &sub_a) == CG_OK);
  REQUIRE(cg_ei_geometric(m.p, "B", &g, &sub_b) == CG_OK);
  CHECK(full.method == CG_METHOD_GEOMETRIC);
  CHECK(full.has_volume_term == 1);
  CHECK(full.nats == full.volume_term - full.mean_mismatch);
  CHECK(full.nats == doctest::Approx(4.09973).epsilon(1e-5));
  CHECK(sub_a.nats == doctest::Approx(3.32596).epsilon(1e-5));
  CHECK(cg_ei_geometric(m.p, "C", &g, &r) == CG_INVALID_ARGUMENT);
}

TEST_CASE("submanifolds need the two-species model") {
  Model m("dimmer", nullptr);
  cg_grid_spec g;
  cg_grid_spec_default(&g);
  cg_ei_report r;
  CHECK(cg_ei_geometric(m.p, "A", &g, &r) == CG_INVALID_ARGUMENT);
}

TEST_CASE("metrics, eigenvalues and mismatch") {
  Model m("two-species", "{\"epsilon\": 0.02, \"delta\": 0.01}");
  const double theta[2] = {0.3, 0.6};
  double g[4], h[4], lam[2], basis[4], l = 0.0;
  REQUIRE(cg_metrics(m.p, theta, 2, g, h) == CG_OK);
  CHECK(g[1] == g[2]);
  CHECK(h[0] == doctest::Approx(1e4));
  CHECK(h[1] == doctest::Approx(0.0));
  REQUIRE(cg_eigen(m.p, theta, 2, lam, basis) == CG_OK);
  CHECK(lam[0] >= lam[1]);
  REQUIRE(cg_mismatch(m.p, theta, 2, &l) == CG_OK);
  CHECK(l == doctest::Approx(0.5 * (std::log1p(1.0 / lam[0]) + std::log1p(1.0 / lam[1]))).epsilon(1e-10));
  CHECK(cg_metrics(m.p, theta, 1, g, h) == CG_INVALID_ARGUMENT);
  const double outside[2] = {0.3, 1.7};
  CHECK(cg_eigen(m.p, outside, 2, lam, nullptr) == CG_DOMAIN);
}

TEST_CASE("decay confounder metrics") {
  Model m("decay-confounder", nullptr);
  double hc = 0, hs = 0, series = 0;
  REQUIRE(cg_decay_confounder_metrics(m.p, 0.2, &hc, &hs, &series) == CG_OK);
  CHECK(hc == doctest::Approx(400.0));
  CHECK(hs == doctest::Approx(400.04232).epsilon(1e-6));
  CHECK(series == doctest::Approx(hs).epsilon(1e-4));
  Model wide("decay-confounder", "{\"sigma_T\": 0.2}");
  CHECK(cg_decay_confounder_metrics(wide.p, 0.2, &hc, &hs, nullptr) == CG_OK);
  CHECK(cg_decay_confounder_metrics(wide.p, 0.2, &hc, &hs, &series) == CG_REGIME);
  Model other("dimmer", nullptr);
  CHECK(cg_decay_confounder_metrics(other.p, 0.2, &hc, &hs, nullptr) == CG_INVALID_ARGUMENT);
}

TEST_CASE("grids and crossings") {
  std::vector<double> grid(9);
  REQUIRE(cg_make_grid(1e-3, 1e-1, 9, 1, grid.data()) == CG_OK);
  CHECK(grid.front() == 1e-3);
  CHECK(grid.back() == 1e-1);
  CHECK(cg_make_grid(0.0, 1.0, 9, 1, grid.data()) == CG_INVALID_ARGUMENT);
  std::vector<double> a(9), b(9, 0.5);
  for (int i = 0; i < 9; ++i) a[static_cast<std::size_t>(i)] = i / 8.0;
  std::vector<double> lin(9);
  REQUIRE(cg_make_grid(0.0, 1.0, 9, 0, lin.data()) == CG_OK);
  std::size_t count = 0;
  double v = 0, lo = 0, hi = 0;
  REQUIRE(cg_find_crossings(a.data(), b.data(), lin.data(), 9, 0, &v, &lo, &hi, 1, &count) == CG_OK);
  CHECK(count == 1);
  CHECK(v == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("null arguments are rejected") {
  Model m("dimmer", nullptr);
  cg_ei_report r;
  CHECK(cg_ei_exact_quadrature(nullptr, nullptr, &r) == CG_INVALID_ARGUMENT);
  CHECK(cg_ei_exact_quadrature(m.p, nullptr, nullptr) == CG_INVALID_ARGUMENT);
  CHECK(cg_mismatch(m.p, nullptr, 1, nullptr) == CG_INVALID_ARGUMENT);
}

TEST_CASE("last error is per thread") {
  cg_model* m = nullptr;
  REQUIRE(cg_model_create("nope", nullptr, &m) == CG_UNKNOWN_MODEL);
  const std::string mine = cg_last_error();
  std::string theirs;
  std::thread t([&] {
    cg_model* x = nullptr;
    (void)cg_model_create("dimmer", "{\"delta\": \"x\"}", &x);
    theirs = cg_last_error();
  });
  t.join();
  CHECK(std::string(cg_last_error()) == mine);
  CHECK(theirs != mine);
}
