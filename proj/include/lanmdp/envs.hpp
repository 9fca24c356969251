#pragma once

#include "lanmdp/common.hpp"

#include <json.hpp>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace lanmdp::curve {

/// Path-planning task: x advances by h every step, the action is the y increment.
struct CurveEnvConfig {
  double h = 0.1;
  double x_min = -1.0;
  double x_max = 1.0;
  double y_min = -1.0;
  double y_max = 1.0;
  double slope_min = -4.0;  // endpoint-derivative sampling range for demos
  double slope_max = 4.0;
  int max_retries = 1'000'000;

  int horizon() const;  // number of steps; states = horizon + 1
  void validate() const;
};

/// y = a x^3 + b x^2 + c x + d
struct CubicCoeffs {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;

  double operator()(double x) const { return ((a * x + b) * x + c) * x + d; }
};

struct CurveTrajectory {
  std::vector<Vec> points;  // each (x, y)
  std::optional<CubicCoeffs> true_coeffs;

  std::size_t size() const { return points.size(); }
};

Vec env_step(const CurveEnvConfig& cfg, const Vec& state, const Vec& action);

/// Cubic with y(-1) = y_left, y(1) = y_right, y'(-1) = slope_left, y'(1) = slope_right.
CubicCoeffs cubic_from_hermite(double y_left, double y_right, double slope_left,
                               double slope_right);

/// Grid points x = x_min, x_min + h, ..., x_max on the given cubic.
CurveTrajectory curve_from_coeffs(const CurveEnvConfig& cfg, const CubicCoeffs& coeffs);

/// Demo acceptance rule: |a| >= min_a and every grid point has y within [y_min, y_max].
bool accept_demo(const CurveEnvConfig& cfg, const CubicCoeffs& coeffs, double min_a);

struct DemoDraw {
  CurveTrajectory trajectory;
  long attempts = 0;  // rejection-sampling draws consumed, including the accepted one
};

DemoDraw sample_cubic_demo(const CurveEnvConfig& cfg, double min_a, Rng& rng);

/// dy_t = y_{t+1} - y_t, returned as 1-d action vectors.
std::vector<Vec> recover_actions(const CurveTrajectory& traj);

struct CubicFit {
  CubicCoeffs coeffs;
  double residual = 0.0;  // mean squared error
};

/// Least squares on (x^3, x^2, x, 1) via column-pivoted Householder QR.
CubicFit cubic_fit(const CurveTrajectory& traj);

struct RolloutEvaluation {
  double acceptance_rate = 0.0;
  std::optional<double> mean_residual;  // over accepted only; absent below the gate
  std::vector<CubicFit> fits;
  std::vector<bool> accepted;
};

/// A trajectory is accepted iff its fitted |a| > accept_a. The mean residual is reported
/// only when acceptance_rate > residual_gate.
RolloutEvaluation evaluate_rollouts(const std::vector<CurveTrajectory>& trajs,
                                    double accept_a = 0.5, double residual_gate = 0.05);

/// (y_t - 3 y_{t-1} + 3 y_{t-2} - y_{t-3}) / h^3
double finite_difference_jerk(const CurveTrajectory& traj, std::size_t t, double h);

/// Equal dy per remaining step from ctx_states.back() to goal; the returned path starts
/// at the current state and ends exactly on the goal's y.
CurveTrajectory shortest_path_reference(const CurveEnvConfig& cfg,
                                        const std::vector<Vec>& ctx_states, const Vec& goal,
                                        int steps);

// Line-delimited JSON demo file: a header line, then one trajectory per line.
nlohmann::json demo_header(const CurveEnvConfig& cfg, const nlohmann::json& run_config);
nlohmann::json trajectory_to_json(const CurveTrajectory& traj);
CurveTrajectory trajectory_from_json(const nlohmann::json& doc);

struct DemoFile {
  nlohmann::json header;
  std::vector<CurveTrajectory> trajectories;
};

void write_demo_file(const std::string& path, const DemoFile& file);
DemoFile read_demo_file(const std::string& path);

nlohmann::json env_config_to_json(const CurveEnvConfig& cfg);
CurveEnvConfig env_config_from_json(const nlohmann::json& doc);

}  // namespace lanmdp::curve
