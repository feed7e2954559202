#pragma once

#include <string>

#include "json.hpp"

#include "qsp/model.hpp"

namespace qsp {

using json = nlohmann::ordered_json;

json params_to_json(const ModelParams& params);
/// Strict: unknown keys and missing required fields raise ConfigError.
ModelParams params_from_json(const json& j);

ModelParams load_params(const std::string& path);
void save_params(const ModelParams& params, const std::string& path);

}  // namespace qsp
