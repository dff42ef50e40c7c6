#pragma once

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "subspace/harness.hpp"

namespace subspace::config {

using json = nlohmann::json;

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

json load_json_file(const std::string& path);

/// Applies one "a.b.c=value" override; the value is parsed as JSON when
/// possible and kept as a string otherwise.
void apply_override(json& cfg, const std::string& assignment);

/// Fills defaults into a copy of the user config and validates the result.
/// The resolved document is what gets hashed and echoed into summaries.
json resolve(const json& user);

/// Short content hash of the resolved config (fnv1a-64, 12 hex chars);
/// output files are named by it so distinct configs never collide.
std::string experiment_id(const json& resolved);

harness::ExperimentConfig experiment_from(const json& resolved);

StepSchedule schedule_from(const json& algo);

}  // namespace subspace::config
