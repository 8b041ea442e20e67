#include "registry.hpp"

#include <sstream>

namespace cgeo::registry {

using nlohmann::json;

namespace {

ParamInfo num(const char* name, double def, const char* desc) { return {name, "number", def, desc}; }
ParamInfo integer(const char* name, int def, const char* desc) { return {name, "integer", def, desc}; }
ParamInfo str(const char* name, const char* def, const char* desc) { return {name, "string", def, desc}; }

std::vector<ModelInfo> make_catalog() {
  const char* profile_desc = "dimmer profile: linear, quadratic, exponential or family";
  return {
      {"dimmer",
       "continuous dimmer switch: x -> theta identity with noise delta, theta -> y = f(theta) with noise epsilon",
       {str("profile", "linear", profile_desc), num("a", 0.0, "family parameter, profile=family, in [-5, 5]"),
        num("r", 0.1, "scale of the exponential profile (e^{theta/r}-1)/(e^{1/r}-1)"),
        num("epsilon", 0.03, "effect error"), num("delta", 0.03, "intervention error")}},
      {"dimmer-family",
       "dimmer with profile f_a(theta) = (e^{a theta}-1)/(e^a-1), linear at a = 0",
       {num("a", 0.0, "family parameter in [-5, 5]"), num("epsilon", 0.03, "effect error"),
        num("delta", 0.03, "intervention error")}},
      {"dimmer-weber",
       "dimmer with brightness-proportional effect error epsilon * max(y, y_floor)",
       {str("profile", "exponential", profile_desc), num("a", 0.0, "family parameter, profile=family"),
        num("r", 0.1, "scale of the exponential profile"), num("epsilon", 0.03, "relative effect error"),
        num("y_floor", 1e-3, "floor on y inside the error law"), num("delta", 0.003, "intervention error")}},
      {"binary-switch",
       "dimmer restricted to the two interventions x in {0, 1}",
       {str("profile", "linear", profile_desc), num("a", 0.0, "family parameter, profile=family"),
        num("r", 0.1, "scale of the exponential profile"), num("epsilon", 0.03, "effect error"),
        num("delta", 0.03, "intervention error")}},
      {"two-species",
       "two decaying species observed through the total population at n*delta_t, theta = A x",
       {ParamInfo{"A", "matrix", json::array({json::array({1.0, 0.0}), json::array({0.0, 1.0})}),
                  "2x2 intervention matrix, row-major nested list"},
        num("delta_t", 1.0, "spacing of the observation times"),
        integer("n_points", 3, "number of observation times, >= 2"), num("epsilon", 1e-2, "effect error"),
        num("delta", 1e-2, "intervention error")}},
      {"decay-confounder",
       "single decay rate with a temperature confounder; causal vs statistical intervention metrics",
       {num("alpha", 1.0, "temperature coupling"), num("sigma_T", 0.05, "temperature fluctuation scale"),
        num("sigma_x", 1.0, "reference concentration spread"), num("x_hat", 1.0, "mean reference concentration"),
        num("epsilon", 1e-2, "effect error on each observation"), num("delta_t", 1.0, "observation spacing"),
        integer("n_points", 3, "number of observation times")}},
  };
}

const ModelInfo* find(const std::string& name) {
  for (const auto& m : catalog())
    if (m.name == name) return &m;
  return nullptr;
}

json resolve(const ModelInfo& info, const json& params) {
  if (!params.is_null() && !params.is_object())
    raise(ErrorCode::InvalidArgument, "model params must be a JSON object");
  json out = json::object();
  for (const auto& p : info.params) out[p.name] = p.default_value;
  if (params.is_object()) {
    for (auto it = params.begin(); it != params.end(); ++it) {
      const ParamInfo* pi = nullptr;
      for (const auto& p : info.params)
        if (p.name == it.key()) pi = &p;
      if (!pi) {
        std::string known;
        for (const auto& p : info.params) known += (known.empty() ? "" : ", ") + p.name;
        raise(ErrorCode::InvalidArgument,
              "unknown parameter '" + it.key() + "' for model " + info.name + " (known: " + known + ")");
      }
      const json& v = it.value();
      const bool ok = (pi->type == "number" && v.is_number()) ||
                      (pi->type == "integer" && v.is_number_integer()) ||
                      (pi->type == "string" && v.is_string()) || (pi->type == "matrix" && v.is_array());
      if (!ok)
        raise(ErrorCode::InvalidArgument,
              "parameter '" + it.key() + "' of model " + info.name + " must be of type " + pi->type);
      out[it.key()] = v;
    }
  }
  return out;
}

DimmerProfile profile_from(const json& p) {
  const std::string name = p.at("profile").get<std::string>();
  if (name == "linear") return linear_profile();
  if (name == "quadratic") return quadratic_profile();
  if (name == "exponential") return exponential_profile(p.at("r").get<double>());
  if (name == "family") return dimmer_family(p.at("a").get<double>());
  raise(ErrorCode::InvalidArgument, "unknown dimmer profile '" + name +
                                        "' (known: linear, quadratic, exponential, family)");
}

Mat matrix_from(const json& j) {
  if (!j.is_array() || j.size() != 2) raise(ErrorCode::InvalidArgument, "A must be a 2x2 nested list");
  Mat a(2, 2);
  for (std::size_t r = 0; r < 2; ++r) {
    if (!j[r].is_array() || j[r].size() != 2) raise(ErrorCode::InvalidArgument, "A must be a 2x2 nested list");
    for (std::size_t c = 0; c < 2; ++c) {
      if (!j[r][c].is_number()) raise(ErrorCode::InvalidArgument, "A entries must be numbers");
      a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return a;
}

}  // namespace

const std::vector<ModelInfo>& catalog() {
  static const std::vector<ModelInfo> c = make_catalog();
  return c;
}

std::string model_names() {
  std::string out;
  for (const auto& m : catalog()) out += (out.empty() ? "" : ", ") + m.name;
  return out;
}

BuiltModel build(const std::string& name, const json& params) {
  const ModelInfo* info = find(name);
  if (!info) throw UnknownModel("unknown model '" + name + "'; available models: " + model_names());
  BuiltModel b{name, resolve(*info, params), std::nullopt, std::nullopt, std::nullopt, false};
  const json& p = b.params;
  if (name == "dimmer" || name == "dimmer-family" || name == "dimmer-weber") {
    DimmerProfile prof = name == "dimmer-family" ? dimmer_family(p.at("a").get<double>()) : profile_from(p);
    const EffectNoise noise = name == "dimmer-weber"
                                  ? EffectNoise::weber(p.at("epsilon").get<double>(), p.at("y_floor").get<double>())
                                  : EffectNoise::constant(p.at("epsilon").get<double>());
    const double delta = p.at("delta").get<double>();
    b.model = dimmer_model(prof, noise, delta);
    b.dimmer = DimmerInfo{prof, noise, delta};
  } else if (name == "binary-switch") {
    b.model = binary_switch_model(p.at("epsilon").get<double>(), p.at("delta").get<double>(), profile_from(p));
  } else if (name == "two-species") {
    TwoSpeciesConfig c;
    c.A = matrix_from(p.at("A"));
    c.delta_t = p.at("delta_t").get<double>();
    c.n_points = p.at("n_points").get<int>();
    c.epsilon = p.at("epsilon").get<double>();
    c.delta = p.at("delta").get<double>();
    b.model = two_species_model(c);
    b.has_submanifolds = true;
  } else {
    DecayConfounderConfig c;
    c.alpha = p.at("alpha").get<double>();
    c.sigma_T = p.at("sigma_T").get<double>();
    c.sigma_x = p.at("sigma_x").get<double>();
    c.x_hat = p.at("x_hat").get<double>();
    c.epsilon = p.at("epsilon").get<double>();
    c.delta_t = p.at("delta_t").get<double>();
    c.n_points = p.at("n_points").get<int>();
    b.model = decay_confounder_model(c);
    b.decay = c;
  }
  return b;
}

}  // namespace cgeo::registry
