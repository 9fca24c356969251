#pragma once

#include "lanmdp/envs.hpp"

#include <string>

namespace lanmdp::cli {

/// Stacked line plots of the metrics CSV columns against step. Raw values are drawn
/// thin, their centered moving average (over present values) thick.
std::string metrics_svg(const std::string& csv_text, int window, const std::string& config_echo);

/// 2-D paths of every trajectory; the plot frame is the env's (x, y) box.
std::string trajectories_svg(const curve::DemoFile& file, const std::string& config_echo);

}  // namespace lanmdp::cli
