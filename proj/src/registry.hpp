#pragma once

#include "cgeo/models.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace cgeo::registry {

struct ParamInfo {
  std::string name;
  std::string type;  // number, integer, string, matrix
  nlohmann::json default_value;
  std::string description;
};

struct ModelInfo {
  std::string name;
  std::string description;
  std::vector<ParamInfo> params;
};

const std::vector<ModelInfo>& catalog();
std::string model_names();  // comma-separated

struct DimmerInfo {
  DimmerProfile profile;
  EffectNoise noise;
  double delta = 0.0;
};

struct BuiltModel {
  std::string name;
  nlohmann::json params;  // fully resolved
  std::optional<CausalModel> model;
  std::optional<DimmerInfo> dimmer;  // continuous dimmers only
  std::optional<DecayConfounderConfig> decay;
  bool has_submanifolds = false;
};

class UnknownModel : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws UnknownModel or cgeo::Error(InvalidArgument).
BuiltModel build(const std::string& name, const nlohmann::json& params);

}  // namespace cgeo::registry
