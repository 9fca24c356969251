#include "lanmdp/envs.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace lanmdp::curve {

int CurveEnvConfig::horizon() const {
  return static_cast<int>(std::lround((x_max - x_min) / h));
}

void CurveEnvConfig::validate() const {
  require(h > 0.0, "curve step h must be positive");
  require(x_max > x_min && y_max > y_min, "curve ranges must be non-empty");
  require(slope_max >= slope_min, "slope range must be non-empty");
  require(horizon() >= 4, "curve horizon must be at least 4 steps");
}

Vec env_step(const CurveEnvConfig& cfg, const Vec& state, const Vec& action) {
  require(state.size() == 2, "curve state must be (x, y)");
  require(action.size() == 1, "curve action must be a single dy");
  Vec next(2);
  next << state[0] + cfg.h, state[1] + action[0];
  return next;
}

CubicCoeffs cubic_from_hermite(double y_left, double y_right, double slope_left,
                               double slope_right) {
  // Rows: y(-1), y(1), y'(-1), y'(1) against unknowns (a, b, c, d).
  Eigen::Matrix4d m;
  m << -1, 1, -1, 1,
        1, 1, 1, 1,
        3, -2, 1, 0,
        3, 2, 1, 0;
  const Eigen::Vector4d rhs(y_left, y_right, slope_left, slope_right);
  const Eigen::Vector4d sol = m.fullPivLu().solve(rhs);
  return CubicCoeffs{sol[0], sol[1], sol[2], sol[3]};
}

CurveTrajectory curve_from_coeffs(const CurveEnvConfig& cfg, const CubicCoeffs& coeffs) {
  CurveTrajectory traj;
  const int steps = cfg.horizon();
  traj.points.reserve(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) {
    const double x = cfg.x_min + cfg.h * i;
    Vec p(2);
    p << x, coeffs(x);
    traj.points.push_back(std::move(p));
  }
  traj.true_coeffs = coeffs;
  return traj;
}

bool accept_demo(const CurveEnvConfig& cfg, const CubicCoeffs& coeffs, double min_a) {
  if (std::abs(coeffs.a) < min_a) return false;
  const int steps = cfg.horizon();
  for (int i = 0; i <= steps; ++i) {
    const double y = coeffs(cfg.x_min + cfg.h * i);
    if (y < cfg.y_min || y > cfg.y_max) return false;
  }
  return true;
}

DemoDraw sample_cubic_demo(const CurveEnvConfig& cfg, double min_a, Rng& rng) {
  require(min_a > 0.0, "min_a must be positive");
  cfg.validate();
  std::uniform_real_distribution<double> y_dist(cfg.y_min, cfg.y_max);
  std::uniform_real_distribution<double> slope_dist(cfg.slope_min, cfg.slope_max);
  double best_a = 0.0;
  for (long attempt = 1; attempt <= cfg.max_retries; ++attempt) {
    const double y_left = y_dist(rng);
    const double y_right = y_dist(rng);
    const double s_left = slope_dist(rng);
    const double s_right = slope_dist(rng);
    const CubicCoeffs coeffs = cubic_from_hermite(y_left, y_right, s_left, s_right);
    best_a = std::max(best_a, std::abs(coeffs.a));
    if (accept_demo(cfg, coeffs, min_a)) return DemoDraw{curve_from_coeffs(cfg, coeffs), attempt};
  }
  std::ostringstream msg;
  msg << "cubic demo rejection sampling exceeded " << cfg.max_retries
      << " draws (min_a=" << min_a << ", largest |a| seen=" << best_a << ")";
  throw std::runtime_error(msg.str());
}

std::vector<Vec> recover_actions(const CurveTrajectory& traj) {
  if (traj.size() < 2) throw std::invalid_argument("need at least two points to recover actions");
  std::vector<Vec> actions;
  actions.reserve(traj.size() - 1);
  for (std::size_t t = 0; t + 1 < traj.size(); ++t) {
    Vec a(1);
    a << traj.points[t + 1][1] - traj.points[t][1];
    actions.push_back(std::move(a));
  }
  return actions;
}

CubicFit cubic_fit(const CurveTrajectory& traj) {
  const auto n = static_cast<Eigen::Index>(traj.size());
  if (n < 4) throw std::invalid_argument("cubic fit needs at least four points");
  Mat design(n, 4);
  Vec y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = traj.points[static_cast<std::size_t>(i)][0];
    design(i, 0) = x * x * x;
    design(i, 1) = x * x;
    design(i, 2) = x;
    design(i, 3) = 1.0;
    y[i] = traj.points[static_cast<std::size_t>(i)][1];
  }
  const Vec beta = design.colPivHouseholderQr().solve(y);
  CubicFit fit;
  fit.coeffs = CubicCoeffs{beta[0], beta[1], beta[2], beta[3]};
  fit.residual = (design * beta - y).squaredNorm() / static_cast<double>(n);
  return fit;
}

RolloutEvaluation evaluate_rollouts(const std::vector<CurveTrajectory>& trajs, double accept_a,
                                    double residual_gate) {
  if (trajs.empty()) throw std::invalid_argument("no trajectories to evaluate");
  RolloutEvaluation out;
  double resid_sum = 0.0;
  std::size_t n_accepted = 0;
  for (const auto& traj : trajs) {
    CubicFit fit = cubic_fit(traj);
    const bool ok = std::abs(fit.coeffs.a) > accept_a;
    if (ok) {
      ++n_accepted;
      resid_sum += fit.residual;
    }
    out.accepted.push_back(ok);
    out.fits.push_back(fit);
  }
  out.acceptance_rate = static_cast<double>(n_accepted) / static_cast<double>(trajs.size());
  if (n_accepted > 0 && out.acceptance_rate > residual_gate) {
    out.mean_residual = resid_sum / static_cast<double>(n_accepted);
  }
  return out;
}

double finite_difference_jerk(const CurveTrajectory& traj, std::size_t t, double h) {
  if (t < 3) throw std::invalid_argument("third difference needs t >= 3");
  if (t >= traj.size()) throw std::out_of_range("jerk index beyond trajectory");
  const auto y = [&](std::size_t i) { return traj.points[i][1]; };
  return (y(t) - 3.0 * y(t - 1) + 3.0 * y(t - 2) - y(t - 3)) / (h * h * h);
}

CurveTrajectory shortest_path_reference(const CurveEnvConfig& cfg,
                                        const std::vector<Vec>& ctx_states, const Vec& goal,
                                        int steps) {
  if (steps < 1) throw std::invalid_argument("shortest path needs at least one remaining step");
  require(!ctx_states.empty(), "shortest path needs a current state");
  require(goal.size() == 2, "curve goal must be (x, y)");
  CurveTrajectory path;
  Vec s = ctx_states.back();
  path.points.push_back(s);
  const double dy = (goal[1] - s[1]) / steps;
  for (int k = 0; k < steps; ++k) {
    Vec a(1);
    a << dy;
    s = env_step(cfg, s, a);
    path.points.push_back(s);
  }
  path.points.back()[1] = goal[1];
  return path;
}

nlohmann::json env_config_to_json(const CurveEnvConfig& cfg) {
  return {{"h", cfg.h},
          {"x_range", {cfg.x_min, cfg.x_max}},
          {"y_range", {cfg.y_min, cfg.y_max}},
          {"slope_range", {cfg.slope_min, cfg.slope_max}},
          {"max_retries", cfg.max_retries}};
}

CurveEnvConfig env_config_from_json(const nlohmann::json& doc) {
  CurveEnvConfig cfg;
  cfg.h = doc.value("h", cfg.h);
  if (doc.contains("x_range")) {
    cfg.x_min = doc["x_range"].at(0).get<double>();
    cfg.x_max = doc["x_range"].at(1).get<double>();
  }
  if (doc.contains("y_range")) {
    cfg.y_min = doc["y_range"].at(0).get<double>();
    cfg.y_max = doc["y_range"].at(1).get<double>();
  }
  if (doc.contains("slope_range")) {
    cfg.slope_min = doc["slope_range"].at(0).get<double>();
    cfg.slope_max = doc["slope_range"].at(1).get<double>();
  }
  cfg.max_retries = doc.value("max_retries", cfg.max_retries);
  cfg.validate();
  return cfg;
}

nlohmann::json demo_header(const CurveEnvConfig& cfg, const nlohmann::json& run_config) {
  return {{"format", "lanmdp.demos"}, {"version", 1}, {"env", env_config_to_json(cfg)},
          {"config", run_config}};
}

nlohmann::json trajectory_to_json(const CurveTrajectory& traj) {
  nlohmann::json pts = nlohmann::json::array();
  for (const Vec& p : traj.points) pts.push_back({p[0], p[1]});
  nlohmann::json doc{{"points", std::move(pts)}};
  if (traj.true_coeffs) {
    const auto& c = *traj.true_coeffs;
    doc["coeffs"] = {c.a, c.b, c.c, c.d};
  }
  return doc;
}

CurveTrajectory trajectory_from_json(const nlohmann::json& doc) {
  try {
    CurveTrajectory traj;
    for (const auto& p : doc.at("points")) {
      if (p.size() != 2) throw ValidationError("trajectory point must be [x, y]");
      Vec s(2);
      s << p[0].get<double>(), p[1].get<double>();
      traj.points.push_back(std::move(s));
    }
    if (doc.contains("coeffs") && !doc["coeffs"].is_null()) {
      const auto c = doc["coeffs"].get<std::vector<double>>();
      if (c.size() != 4) throw ValidationError("coeffs must hold four numbers");
      traj.true_coeffs = CubicCoeffs{c[0], c[1], c[2], c[3]};
    }
    return traj;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed trajectory record: ") + e.what());
  }
}

void write_demo_file(const std::string& path, const DemoFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << file.header.dump() << '\n';
  for (const auto& traj : file.trajectories) out << trajectory_to_json(traj).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

DemoFile read_demo_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open demo file '" + path + "'");
  DemoFile file;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (first && doc.contains("format")) {
      if (doc["format"] != "lanmdp.demos") throw ValidationError(path + ": not a demo file");
      file.header = std::move(doc);
    } else {
      file.trajectories.push_back(trajectory_from_json(doc));
    }
    first = false;
  }
  return file;
}

}  // namespace lanmdp::curve
