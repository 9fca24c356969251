#pragma once

#include "lanmdp/curve_task.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace lanmdp::cli {

/// Everything a command needs besides its file paths. Echoed into every artifact.
struct RunConfig {
  std::string profile = "curve";
  curve::CurveEnvConfig env;
  double min_a = 1.0;  // demo generation constraint on |a|
  TrainConfig train = curve::curve_profile(4);
  int eval_rollouts = 200;
  LangevinConfig plan_sampler = curve::plan_profile();
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

/// Layers a JSON document over the curve profile. Unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& doc);
/// Parsed config file, or an empty object when no path is given.
nlohmann::json read_config_doc(const std::optional<std::string>& path);

/// --seed, then the config file, then LANMDP_SEED, then 0.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const nlohmann::json& file_doc);

}  // namespace lanmdp::cli
