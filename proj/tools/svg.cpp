#include "svg.hpp"

#include "lanmdp/training.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>

namespace lanmdp::cli {

namespace {

constexpr const char* kHeader = "step,acceptance_rate,mean_residual,policy_loss,transition_nll,buffer_size";
constexpr std::array<const char*, 4> kPlotted{"acceptance_rate", "mean_residual", "policy_loss",
                                              "transition_nll"};
constexpr double kWidth = 480.0;
constexpr double kPanel = 160.0;
constexpr double kMargin = 40.0;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// XML comments may not contain "--".
std::string comment_safe(std::string s) {
  for (std::size_t pos = s.find("--"); pos != std::string::npos; pos = s.find("--", pos)) s[pos + 1] = '_';
  return s;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_number(const std::string& cell, std::size_t lineno) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != cell.size()) {
    throw ValidationError("metrics line " + std::to_string(lineno) + ": bad number '" + cell + "'");
  }
  return v;
}

struct Series {
  std::vector<double> x;
  std::vector<double> y;
};

std::vector<double> moving_average(const std::vector<double>& y, int window) {
  const auto n = static_cast<long>(y.size());
  const long half = std::max(0, window) / 2;
  std::vector<double> out(y.size());
  for (long i = 0; i < n; ++i) {
    const long lo = std::max(0L, i - half);
    const long hi = std::min(n - 1, i + half);
    double sum = 0.0;
    for (long j = lo; j <= hi; ++j) sum += y[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

std::string polyline(const std::vector<std::pair<double, double>>& pts, const char* style) {
  std::string s = "<polyline fill=\"none\" " + std::string(style) + " points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i) s += ' ';
    s += fmt(pts[i].first) + "," + fmt(pts[i].second);
  }
  return s + "\"/>\n";
}

}  // namespace

std::string metrics_svg(const std::string& csv_text, int window, const std::string& config_echo) {
  std::istringstream in(csv_text);
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  std::array<Series, kPlotted.size()> series;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!have_header) {
      if (line != kHeader) throw ValidationError("metrics file has an unexpected header: '" + line + "'");
      have_header = true;
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != 6) {
      throw ValidationError("metrics line " + std::to_string(lineno) + ": expected 6 columns, got " +
                            std::to_string(cells.size()));
    }
    const double step = parse_number(cells[0], lineno);
    for (std::size_t k = 0; k < kPlotted.size(); ++k) {
      if (cells[k + 1].empty()) continue;
      series[k].x.push_back(step);
      series[k].y.push_back(parse_number(cells[k + 1], lineno));
    }
  }
  if (!have_header) throw ValidationError("metrics file has no header");

  std::ostringstream svg;
  const double height = kPanel * static_cast<double>(kPlotted.size());
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(kWidth) << "\" height=\""
      << fmt(height) << "\" viewBox=\"0 0 " << fmt(kWidth) << ' ' << fmt(height) << "\">\n";
  svg << "<!-- config: " << comment_safe(config_echo) << " -->\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t k = 0; k < kPlotted.size(); ++k) {
    const Series& s = series[k];
    const double top = kPanel * static_cast<double>(k) + 20.0;
    const double left = kMargin + 20.0;
    const double w = kWidth - left - 10.0;
    const double h = kPanel - 50.0;
    svg << "<g class=\"panel\" data-metric=\"" << kPlotted[k] << "\">\n";
    svg << "<text x=\"" << fmt(left) << "\" y=\"" << fmt(top - 6.0) << "\" font-size=\"12\">"
        << kPlotted[k] << "</text>\n";
    svg << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(w)
        << "\" height=\"" << fmt(h) << "\" fill=\"none\" stroke=\"#888\"/>\n";
    if (s.x.empty()) {
      svg << "<text x=\"" << fmt(left + 8.0) << "\" y=\"" << fmt(top + h / 2) << "\" font-size=\"11\">no data</text>\n</g>\n";
      continue;
    }
    const auto [xmin_it, xmax_it] = std::minmax_element(s.x.begin(), s.x.end());
    const auto [ymin_it, ymax_it] = std::minmax_element(s.y.begin(), s.y.end());
    double x0 = *xmin_it, x1 = *xmax_it, y0 = *ymin_it, y1 = *ymax_it;
    if (x1 == x0) { x0 -= 0.5; x1 += 0.5; }
    if (y1 == y0) { y0 -= 0.5; y1 += 0.5; }
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * w; };
    auto py = [&](double y) { return top + h - (y - y0) / (y1 - y0) * h; };
    svg << "<text x=\"2\" y=\"" << fmt(top + 10.0) << "\" font-size=\"10\">" << label(y1) << "</text>\n";
    svg << "<text x=\"2\" y=\"" << fmt(top + h) << "\" font-size=\"10\">" << label(y0) << "</text>\n";
    svg << "<text x=\"" << fmt(left) << "\" y=\"" << fmt(top + h + 14.0) << "\" font-size=\"10\">"
        << label(x0) << "</text>\n";
    svg << "<text x=\"" << fmt(left + w - 30.0) << "\" y=\"" << fmt(top + h + 14.0)
        << "\" font-size=\"10\">" << label(x1) << "</text>\n";
    if (s.x.size() == 1) {
      svg << "<circle cx=\"" << fmt(px(s.x[0])) << "\" cy=\"" << fmt(py(s.y[0]))
          << "\" r=\"3\" fill=\"#1f77b4\"/>\n</g>\n";
      continue;
    }
    const std::vector<double> smooth = moving_average(s.y, window);
    std::vector<std::pair<double, double>> raw_pts, smooth_pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      raw_pts.emplace_back(px(s.x[i]), py(s.y[i]));
      smooth_pts.emplace_back(px(s.x[i]), py(smooth[i]));
    }
    svg << polyline(raw_pts, "stroke=\"#bbb\" stroke-width=\"1\"");
    svg << polyline(smooth_pts, "stroke=\"#1f77b4\" stroke-width=\"2\"");
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string trajectories_svg(const curve::DemoFile& file, const std::string& config_echo) {
  curve::CurveEnvConfig env;
  if (file.header.contains("env")) env = curve::env_config_from_json(file.header.at("env"));
  constexpr double size = 400.0;
  constexpr double pad = 20.0;
  auto px = [&](double x) { return pad + (x - env.x_min) / (env.x_max - env.x_min) * size; };
  auto py = [&](double y) { return pad + size - (y - env.y_min) / (env.y_max - env.y_min) * size; };

  std::ostringstream svg;
  const double total = size + 2 * pad;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(total) << "\" height=\""
      << fmt(total) << "\" viewBox=\"0 0 " << fmt(total) << ' ' << fmt(total) << "\">\n";
  svg << "<!-- config: " << comment_safe(config_echo) << " -->\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<rect class=\"frame\" x=\"" << fmt(pad) << "\" y=\"" << fmt(pad) << "\" width=\"" << fmt(size)
      << "\" height=\"" << fmt(size) << "\" fill=\"none\" stroke=\"#888\"/>\n";
  for (const auto& traj : file.trajectories) {
    std::vector<std::pair<double, double>> pts;
    for (const Vec& p : traj.points) pts.emplace_back(px(p[0]), py(p[1]));
    svg << polyline(pts, "stroke=\"#1f77b4\" stroke-opacity=\"0.4\" stroke-width=\"1\"");
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace lanmdp::cli
