#include <cgeo/cgeo.h>

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Effective information and causal geometry experiments", "cgeo"};
  app.set_version_flag("--version", std::string(cg_version()));
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run an experiment config (or a manifest.json) and write its artifacts");
  std::string config_path;
  int threads = 0;
  std::string output, units;
  std::uint64_t seed = 0;
  bool plot = false, no_plot = false;
  run->add_option("config", config_path, "experiment config file")->required();
  auto* threads_opt = run->add_option("--threads", threads, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
  auto* output_opt = run->add_option("--output", output, "output directory");
  auto* seed_opt = run->add_option("--seed", seed, "Monte Carlo seed");
  auto* units_opt = run->add_option("--units", units, "bits or nats")->check(CLI::IsMember({"bits", "nats"}));
  run->add_flag("--plot", plot, "write plot.svg for sweeps");
  run->add_flag("--no-plot", no_plot, "do not write plot.svg")->excludes("--plot");

  auto* list = app.add_subcommand("list-models", "list the built-in models and their parameters");
  bool as_json = false;
  list->add_flag("--json", as_json, "machine-readable output");

  auto* eigen = app.add_subcommand("eigen", "eigenvalues of h^-1 g and the mismatch at one parameter point");
  std::string model, theta, params;
  std::vector<std::string> sets;
  eigen->add_option("--model", model, "model name")->required();
  eigen->add_option("--theta", theta, "comma-separated parameter point")->required();
  eigen->add_option("--params", params, "model parameters as a JSON object");
  eigen->add_option("--set", sets, "model parameter as key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cgeo_cli::kExitConfig;
  }

  if (*run) {
    cgeo_cli::RunOverrides o;
    if (*threads_opt) o.threads = threads;
    if (*output_opt) o.output = output;
    if (*seed_opt) o.seed = seed;
    if (*units_opt) o.units = units;
    if (plot) o.plot = true;
    if (no_plot) o.plot = false;
    return cgeo_cli::run_experiment(config_path, o, std::cout, std::cerr);
  }
  if (*list) return cgeo_cli::list_models(as_json, std::cout, std::cerr);
  return cgeo_cli::eigen_query(model, theta, params, sets, std::cout, std::cerr);
}
