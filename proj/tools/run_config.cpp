#include "run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace lanmdp::cli {

namespace {

void reject_unknown(const nlohmann::json& doc, const std::set<std::string>& known,
                    const std::string& where) {
  if (!doc.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!known.contains(key)) throw ValidationError("unknown key '" + key + "' in " + where);
  }
}

std::uint64_t parse_seed(const std::string& text, const std::string& where) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || text.front() == '-') {
    throw ValidationError(where + " is not a non-negative integer: '" + text + "'");
  }
  return v;
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  return {{"profile", profile},
          {"env", curve::env_config_to_json(env)},
          {"demos", {{"min_a", min_a}}},
          {"train", train_config_to_json(train)},
          {"eval", {{"rollouts", eval_rollouts}}},
          {"plan", {{"sampler", langevin_to_json(plan_sampler)}}},
          {"seed", seed}};
}

RunConfig run_config_from_json(const nlohmann::json& doc) {
  reject_unknown(doc, {"profile", "env", "demos", "train", "eval", "plan", "seed"}, "run config");
  RunConfig rc;
  if (doc.contains("profile")) {
    rc.profile = doc.at("profile").get<std::string>();
    if (rc.profile != "curve") throw ValidationError("unsupported profile '" + rc.profile + "'");
  }
  if (doc.contains("env")) rc.env = curve::env_config_from_json(doc.at("env"));
  if (doc.contains("demos")) {
    reject_unknown(doc.at("demos"), {"min_a"}, "demos");
    rc.min_a = doc.at("demos").value("min_a", rc.min_a);
  }
  if (doc.contains("train")) {
    const auto& t = doc.at("train");
    if (!t.is_object()) throw ValidationError("train must be a JSON object");
    const int L = t.value("context_len", rc.train.context_len);
    rc.train = train_config_from_json(t, curve::curve_profile(L));
  }
  if (doc.contains("eval")) {
    reject_unknown(doc.at("eval"), {"rollouts"}, "eval");
    rc.eval_rollouts = doc.at("eval").value("rollouts", rc.eval_rollouts);
  }
  if (doc.contains("plan")) {
    reject_unknown(doc.at("plan"), {"sampler"}, "plan");
    if (doc.at("plan").contains("sampler")) {
      rc.plan_sampler = langevin_from_json(doc.at("plan").at("sampler"), rc.plan_sampler);
    }
  }
  if (doc.contains("seed")) rc.seed = doc.at("seed").get<std::uint64_t>();
  if (rc.min_a < 0.0) throw ValidationError("demos.min_a must be non-negative");
  if (rc.eval_rollouts < 1) throw ValidationError("eval.rollouts must be positive");
  rc.env.validate();
  return rc;
}

nlohmann::json read_config_doc(const std::optional<std::string>& path) {
  if (!path) return nlohmann::json::object();
  std::ifstream in(*path);
  if (!in) throw ValidationError("cannot open config '" + *path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config '" + *path + "' is not valid JSON: " + e.what());
  }
  return doc;
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const nlohmann::json& file_doc) {
  if (flag) return *flag;
  if (file_doc.is_object() && file_doc.contains("seed")) return file_doc.at("seed").get<std::uint64_t>();
  if (const char* env = std::getenv("LANMDP_SEED"); env && *env) return parse_seed(env, "LANMDP_SEED");
  return 0;
}

}  // namespace lanmdp::cli
