#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qsp/model.hpp"

namespace qsp::cli {

enum ExitCode { kOk = 0, kFailure = 1, kConfigError = 2, kNumericalFailure = 3 };

/// Runs one command line (without the program name). When `params_override`
/// is set it replaces whatever --params would have loaded.
int run(const std::vector<std::string>& args, std::optional<ModelParams> params_override = std::nullopt);

}  // namespace qsp::cli
