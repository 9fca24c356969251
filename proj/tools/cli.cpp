#include "cli.hpp"

#include "run_config.hpp"
#include "svg.hpp"

#include "lanmdp/curve_task.hpp"
#include "lanmdp/oracle.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

namespace lanmdp::cli {

namespace fs = std::filesystem;

namespace {

// Seed streams for the commands that sample.
constexpr std::uint64_t kEvalStream = 100;
constexpr std::uint64_t kPlanStream = 200;
constexpr std::uint64_t kVerifyStream = 300;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write '" + path + "'");
  f << text;
  if (!f) throw ValidationError("failed writing '" + path + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read '" + path + "'");
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write_json(const std::string& path, const nlohmann::json& doc) { write_text(path, doc.dump(2) + "\n"); }

nlohmann::json points_json(const std::vector<Vec>& pts) {
  nlohmann::json out = nlohmann::json::array();
  for (const Vec& p : pts) out.push_back(std::vector<double>(p.data(), p.data() + p.size()));
  return out;
}

nlohmann::json coeffs_json(const curve::CubicCoeffs& c) {
  return {{"a", c.a}, {"b", c.b}, {"c", c.c}, {"d", c.d}};
}

// "x,y" -> 2-vector
Vec parse_point(const std::string& text) {
  std::istringstream in(text);
  std::string a, b, extra;
  if (!std::getline(in, a, ',') || !std::getline(in, b, ',') || std::getline(in, extra, ',')) {
    throw ValidationError("expected 'x,y', got '" + text + "'");
  }
  Vec p(2);
  for (int i = 0; i < 2; ++i) {
    const std::string& cell = i == 0 ? a : b;
    std::size_t used = 0;
    try {
      p[i] = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
    if (used == 0 || used != cell.size() || !std::isfinite(p[i])) {
      throw ValidationError("bad coordinate '" + cell + "' in '" + text + "'");
    }
  }
  return p;
}

// "x,y;x,y;..."
std::vector<Vec> parse_prefix(const std::string& text) {
  std::vector<Vec> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ';')) out.push_back(parse_point(item));
  if (out.empty()) throw ValidationError("prefix must hold at least one state");
  return out;
}

// Config from --config, else from the model's own echo, else the profile defaults.
RunConfig config_for_model(const std::optional<std::string>& config_path, const ModelBundle& bundle,
                           std::optional<std::uint64_t> seed_flag) {
  nlohmann::json doc = read_config_doc(config_path);
  if (!config_path && bundle.config.is_object() && bundle.config.contains("profile")) doc = bundle.config;
  RunConfig rc = run_config_from_json(doc);
  rc.seed = resolve_seed(seed_flag, config_path ? doc : nlohmann::json::object());
  return rc;
}

// --- gen-demos ---------------------------------------------------------------------------

struct GenDemosArgs {
  int n = 0;
  std::optional<double> min_a;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::string> config;
};

int gen_demos(const GenDemosArgs& a, std::ostream& out) {
  if (a.n <= 0) throw ValidationError("--n must be positive");
  const nlohmann::json doc = read_config_doc(a.config);
  RunConfig rc = run_config_from_json(doc);
  rc.seed = resolve_seed(a.seed, doc);
  if (a.min_a) {
    if (*a.min_a < 0.0) throw ValidationError("--min-a must be non-negative");
    rc.min_a = *a.min_a;
  }
  Rng rng(rc.seed);
  curve::DemoFile file;
  long attempts = 0;
  double sum_abs_a = 0.0;
  for (int i = 0; i < a.n; ++i) {
    curve::DemoDraw draw = curve::sample_cubic_demo(rc.env, rc.min_a, rng);
    attempts += draw.attempts;
    sum_abs_a += std::abs(draw.trajectory.true_coeffs->a);
    file.trajectories.push_back(std::move(draw.trajectory));
  }
  file.header = curve::demo_header(rc.env, rc.to_json());
  curve::write_demo_file(a.out, file);
  out << "demos " << a.n << "\n";
  out << "mean_abs_a " << sum_abs_a / a.n << "\n";
  out << "rejection_ratio " << static_cast<double>(attempts - a.n) / static_cast<double>(attempts) << "\n";
  return kOk;
}

// --- train -------------------------------------------------------------------------------

struct TrainArgs {
  std::string demos;
  std::optional<std::string> eval_demos;
  std::optional<int> context;
  std::optional<int> steps;
  std::optional<std::string> mode;
  std::optional<int> eval_interval;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string metrics;
  std::optional<std::string> config;
};

int train_cmd(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const nlohmann::json doc = read_config_doc(a.config);
  RunConfig rc = run_config_from_json(doc);
  rc.seed = resolve_seed(a.seed, doc);
  if (a.context) {
    if (*a.context < 1) throw ValidationError("--context must be at least 1");
    rc.train.context_len = *a.context;
  }
  if (a.steps) rc.train.iterations = *a.steps;
  if (a.mode) rc.train.posterior_mode = posterior_mode_from_name(*a.mode);
  if (a.eval_interval) rc.train.eval_interval = *a.eval_interval;
  rc.train.seed = rc.seed;
  rc.train.eval_rollouts = rc.eval_rollouts;
  rc.train.validate();

  const curve::DemoFile demos = curve::read_demo_file(a.demos);
  if (demos.trajectories.empty()) throw ValidationError("demo file '" + a.demos + "' is empty");
  if (demos.header.contains("env")) rc.env = curve::env_config_from_json(demos.header.at("env"));
  const std::vector<curve::CurveTrajectory> eval_set =
      a.eval_demos ? curve::read_demo_file(*a.eval_demos).trajectories : demos.trajectories;
  if (eval_set.empty()) throw ValidationError("evaluation demo file is empty");

  const TrainEnvironment env = curve::make_environment(rc.env, demos.trajectories, rc.train.sigma);
  const DemoDataset data = make_dataset(curve::state_sequences(demos.trajectories), rc.train.context_len);
  const TaskEvaluator evaluator =
      curve::make_evaluator(rc.env, curve::start_states(eval_set), rc.eval_rollouts, rc.train.eval_sampler);
  const nlohmann::json echo = rc.to_json();

  auto emit = [&](TrainResult result) {
    result.bundle.config = echo;
    result.log.config = echo;
    save_bundle(a.out, result.bundle);
    write_text(a.metrics, result.log.to_csv());
    return result;
  };
  try {
    const TrainResult result = emit(train(rc.train, data, env, evaluator));
    const MetricsRow& last = result.log.rows.back();
    out << "steps " << last.step << "\n";
    out << "acceptance_rate "
        << (last.acceptance_rate ? std::to_string(*last.acceptance_rate) : std::string("absent")) << "\n";
    out << "mean_residual "
        << (last.mean_residual ? std::to_string(*last.mean_residual) : std::string("absent")) << "\n";
    out << "skipped_segments " << result.skipped_segments << "\n";
    return kOk;
  } catch (const TrainingDiverged& e) {
    emit(e.checkpoint());
    err << "error: training diverged at step " << e.step() << ": " << e.what()
        << "; last finite checkpoint written to " << a.out << "\n";
    return kDiverged;
  }
}

// --- eval --------------------------------------------------------------------------------

struct EvalArgs {
  std::string model;
  std::string demos;
  int n = 200;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::string> rollouts_out;
  std::optional<std::string> config;
};

int eval_cmd(const EvalArgs& a, std::ostream& out) {
  if (a.n <= 0) throw ValidationError("--n must be positive");
  const ModelBundle bundle = load_bundle(a.model);
  RunConfig rc = config_for_model(a.config, bundle, a.seed);
  rc.eval_rollouts = a.n;
  const curve::DemoFile demos = curve::read_demo_file(a.demos);
  if (demos.trajectories.empty()) throw ValidationError("demo file '" + a.demos + "' is empty");
  if (demos.header.contains("env")) rc.env = curve::env_config_from_json(demos.header.at("env"));

  Rng rng(mix_seed(rc.seed, kEvalStream));
  const curve::PolicyEvaluation ev = curve::evaluate_policy(
      rc.env, bundle.policy, curve::start_states(demos.trajectories), a.n, rc.train.eval_sampler, rng);

  const nlohmann::json echo = rc.to_json();
  nlohmann::json trajs = nlohmann::json::array();
  for (std::size_t i = 0; i < ev.rollouts.size(); ++i) {
    nlohmann::json t = coeffs_json(ev.metrics.fits[i].coeffs);
    t["residual"] = ev.metrics.fits[i].residual;
    t["accepted"] = static_cast<bool>(ev.metrics.accepted[i]);
    trajs.push_back(std::move(t));
  }
  nlohmann::json report{{"config", echo},
                        {"model", a.model},
                        {"rollouts", a.n},
                        {"context_len", bundle.policy.context_len},
                        {"acceptance_rate", ev.metrics.acceptance_rate},
                        {"mean_residual", nullptr},
                        {"trajectories", std::move(trajs)}};
  if (ev.metrics.mean_residual) report["mean_residual"] = *ev.metrics.mean_residual;
  write_json(a.out, report);
  if (a.rollouts_out) {
    curve::DemoFile file{curve::demo_header(rc.env, echo), ev.rollouts};
    curve::write_demo_file(*a.rollouts_out, file);
  }
  out << "acceptance_rate " << ev.metrics.acceptance_rate << "\n";
  out << "mean_residual "
      << (ev.metrics.mean_residual ? std::to_string(*ev.metrics.mean_residual) : std::string("absent")) << "\n";
  return kOk;
}

// --- plan --------------------------------------------------------------------------------

struct PlanArgs {
  std::string model;
  std::string prefix;
  std::string goal;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::string> summary;
  std::optional<std::string> config;
};

int plan_cmd(const PlanArgs& a, std::ostream& out) {
  const std::vector<Vec> prefix = parse_prefix(a.prefix);
  const Vec goal = parse_point(a.goal);
  const ModelBundle bundle = load_bundle(a.model);
  RunConfig rc = config_for_model(a.config, bundle, a.seed);
  const curve::CurveEnvConfig& env = rc.env;

  for (std::size_t i = 1; i < prefix.size(); ++i) {
    if (std::abs(prefix[i][0] - prefix[i - 1][0] - env.h) > 1e-9) {
      throw ValidationError("prefix x values must advance by h = " + std::to_string(env.h));
    }
  }
  const int steps = env.horizon() - static_cast<int>(prefix.size() - 1);
  if (steps < 1) throw ValidationError("prefix already covers the whole horizon");
  const double goal_x = prefix.back()[0] + steps * env.h;
  if (std::abs(goal[0] - goal_x) > 1e-6) {
    throw ValidationError("goal x must be " + std::to_string(goal_x) + " (end of the horizon)");
  }

  Rng rng(mix_seed(rc.seed, kPlanStream));
  const curve::GoalPlan gp = curve::plan_to_goal(env, bundle.policy, bundle.ensemble.primary(), prefix,
                                                 goal, rc.plan_sampler, rc.train.eval_sampler, rng);
  const nlohmann::json echo = rc.to_json();
  write_text(a.out, "# config: " + echo.dump() + "\n" + plan_to_csv(gp.plan));

  nlohmann::json summary = plan_summary(gp.plan);
  summary["config"] = echo;
  summary["prefix"] = points_json(prefix);
  summary["path"] = points_json(gp.path.points);
  summary["goal_y_error"] = std::abs(gp.path.points.back()[1] - goal[1]);
  summary["fit"] = {{"coeffs", coeffs_json(gp.fit.coeffs)}, {"residual", gp.fit.residual}};
  summary["reference"] = {{"path", points_json(gp.reference.points)},
                          {"coeffs", coeffs_json(gp.reference_fit.coeffs)},
                          {"residual", gp.reference_fit.residual}};
  if (a.summary) write_json(*a.summary, summary);
  out << "residual_to_goal " << gp.plan.residual_to_goal << "\n";
  out << "fit_a " << gp.fit.coeffs.a << " fit_residual " << gp.fit.residual << "\n";
  out << "reference_a " << gp.reference_fit.coeffs.a << "\n";
  return kOk;
}

// --- verify ------------------------------------------------------------------------------

struct VerifyArgs {
  std::optional<std::string> instances;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

struct NamedInstance {
  std::string name;
  std::optional<tabular::TabularNmdp> instance;
  std::string load_error;
};

std::vector<NamedInstance> bundled_instances() {
  struct Shape { int s, a, t; std::uint64_t seed; };
  const Shape shapes[] = {{2, 2, 1, 1}, {3, 2, 3, 2}, {2, 3, 4, 3}, {4, 3, 2, 4}, {3, 3, 3, 5}, {8, 8, 2, 6}};
  std::vector<NamedInstance> out;
  for (const Shape& s : shapes) {
    std::ostringstream name;
    name << "bundled/s" << s.s << "_a" << s.a << "_t" << s.t;
    out.push_back({name.str(), tabular::random_instance(s.s, s.a, s.t, s.seed, 1.0), {}});
  }
  return out;
}

int verify_cmd(const VerifyArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<NamedInstance> instances = bundled_instances();
  if (a.instances) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(*a.instances)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    if (files.empty()) throw ValidationError("no *.json instances in '" + *a.instances + "'");
    std::sort(files.begin(), files.end());
    for (const fs::path& p : files) {
      NamedInstance ni{p.filename().string(), std::nullopt, {}};
      try {
        ni.instance = tabular::instance_from_json(nlohmann::json::parse(read_text(p.string())));
      } catch (const std::exception& e) {
        ni.load_error = e.what();
      }
      instances.push_back(std::move(ni));
    }
  }
  const std::uint64_t seed = resolve_seed(a.seed, nlohmann::json::object());

  bool all_passed = true;
  nlohmann::json report_instances = nlohmann::json::array();
  out << std::scientific << std::setprecision(3);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const NamedInstance& ni = instances[i];
    nlohmann::json entry{{"name", ni.name}};
    if (!ni.instance) {
      all_passed = false;
      entry["error"] = ni.load_error;
      entry["passed"] = false;
      out << "FAIL " << ni.name << " invalid instance: " << ni.load_error << "\n";
      report_instances.push_back(std::move(entry));
      continue;
    }
    const auto checks = tabular::run_identity_suite(*ni.instance, mix_seed(seed, kVerifyStream + i));
    nlohmann::json jchecks = nlohmann::json::array();
    bool passed = true;
    for (const auto& c : checks) {
      passed = passed && c.passed;
      jchecks.push_back({{"name", c.name}, {"deviation", c.deviation}, {"tolerance", c.tolerance},
                         {"passed", c.passed}});
      out << (c.passed ? "PASS " : "FAIL ") << ni.name << ' ' << c.name << " deviation "
          << c.deviation << " tolerance " << c.tolerance << "\n";
    }
    all_passed = all_passed && passed;
    entry["checks"] = std::move(jchecks);
    entry["passed"] = passed;
    report_instances.push_back(std::move(entry));
  }
  if (a.out) {
    nlohmann::json config{{"seed", seed}, {"instances_dir", a.instances ? *a.instances : ""}};
    write_json(*a.out, {{"config", config}, {"passed", all_passed}, {"instances", report_instances}});
  }
  if (!all_passed) {
    err << "error: verification failed\n";
    return kVerifyFailed;
  }
  return kOk;
}

// --- plot --------------------------------------------------------------------------------

struct PlotArgs {
  std::optional<std::string> metrics;
  std::optional<std::string> trajectories;
  int window = 5;
  std::string out;
};

int plot_cmd(const PlotArgs& a, std::ostream& out) {
  if (a.window < 1) throw ValidationError("--window must be at least 1");
  nlohmann::json echo{{"window", a.window}};
  std::string svg;
  if (a.metrics) {
    echo["metrics"] = *a.metrics;
    svg = metrics_svg(read_text(*a.metrics), a.window, echo.dump());
  } else {
    echo["trajectories"] = *a.trajectories;
    svg = trajectories_svg(curve::read_demo_file(*a.trajectories), echo.dump());
  }
  write_text(a.out, svg);
  out << "wrote " << a.out << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent-action nMDP imitation toolkit for the cubic-curve task and tabular checks", "lanmdp"};
  app.require_subcommand(1);

  GenDemosArgs gd;
  auto* gen = app.add_subcommand("gen-demos", "Rejection-sample cubic demonstrations");
  gen->add_option("--n", gd.n, "Number of demos")->required();
  gen->add_option("--min-a", gd.min_a, "Minimum |a| of accepted cubics");
  gen->add_option("--seed", gd.seed, "Master seed");
  gen->add_option("--out", gd.out, "Output demo file (JSONL)")->required();
  gen->add_option("--config", gd.config, "Run config JSON")->check(CLI::ExistingFile);

  TrainArgs tr;
  auto* trn = app.add_subcommand("train", "Train a policy and transition on curve demos");
  trn->add_option("--demos", tr.demos, "Demo file")->required()->check(CLI::ExistingFile);
  trn->add_option("--eval-demos", tr.eval_demos, "Demo file whose start states seed evaluation")
      ->check(CLI::ExistingFile);
  trn->add_option("--context", tr.context, "Context length L");
  trn->add_option("--steps", tr.steps, "Policy iterations");
  trn->add_option("--mode", tr.mode, "Posterior mode")->check(CLI::IsMember({"importance", "mcmc"}));
  trn->add_option("--eval-interval", tr.eval_interval, "Iterations between metric rows");
  trn->add_option("--seed", tr.seed, "Master seed");
  trn->add_option("--out", tr.out, "Model bundle JSON")->required();
  trn->add_option("--metrics", tr.metrics, "Metrics CSV")->required();
  trn->add_option("--config", tr.config, "Run config JSON")->check(CLI::ExistingFile);

  EvalArgs ev;
  auto* evl = app.add_subcommand("eval", "Roll out a trained policy and score the paths");
  evl->add_option("--model", ev.model, "Model bundle JSON")->required()->check(CLI::ExistingFile);
  evl->add_option("--demos", ev.demos, "Demo file providing start states")->required()->check(CLI::ExistingFile);
  evl->add_option("--n", ev.n, "Number of rollouts");
  evl->add_option("--seed", ev.seed, "Master seed");
  evl->add_option("--out", ev.out, "Report JSON")->required();
  evl->add_option("--rollouts-out", ev.rollouts_out, "Rollouts as a demo file, for plotting");
  evl->add_option("--config", ev.config, "Run config JSON (default: the model's own)")->check(CLI::ExistingFile);

  PlanArgs pl;
  auto* pln = app.add_subcommand("plan", "Plan a path from a prefix to a goal state");
  pln->add_option("--model", pl.model, "Model bundle JSON")->required()->check(CLI::ExistingFile);
  pln->add_option("--prefix", pl.prefix, "Observed states 'x,y;x,y;...'")->required();
  pln->add_option("--goal", pl.goal, "Goal state 'x,y' at the end of the horizon")->required();
  pln->add_option("--seed", pl.seed, "Master seed");
  pln->add_option("--out", pl.out, "Plan CSV")->required();
  pln->add_option("--summary", pl.summary, "Summary JSON with the shortest-path reference");
  pln->add_option("--config", pl.config, "Run config JSON (default: the model's own)")->check(CLI::ExistingFile);

  VerifyArgs vf;
  auto* ver = app.add_subcommand("verify", "Run the exact tabular identity suite");
  ver->add_option("--instances", vf.instances, "Directory of instance JSON files")->check(CLI::ExistingDirectory);
  ver->add_option("--seed", vf.seed, "Master seed");
  ver->add_option("--out", vf.out, "Report JSON");

  PlotArgs pt;
  auto* plt = app.add_subcommand("plot", "Render metrics or trajectories as SVG");
  auto* m = plt->add_option("--metrics", pt.metrics, "Metrics CSV")->check(CLI::ExistingFile);
  auto* t = plt->add_option("--trajectories", pt.trajectories, "Demo or rollout file")->check(CLI::ExistingFile);
  m->excludes(t);
  plt->add_option("--window", pt.window, "Moving-average window");
  plt->add_option("--out", pt.out, "Output SVG")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
    if (plt->parsed() && !pt.metrics && !pt.trajectories) {
      throw CLI::ValidationError("plot needs --metrics or --trajectories");
    }
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (gen->parsed()) return gen_demos(gd, out);
    if (trn->parsed()) return train_cmd(tr, out, err);
    if (evl->parsed()) return eval_cmd(ev, out);
    if (pln->parsed()) return plan_cmd(pl, out);
    if (ver->parsed()) return verify_cmd(vf, out, err);
    if (plt->parsed()) return plot_cmd(pt, out);
  } catch (const NumericalError& e) {
    err << "error: numerical divergence: " << e.what() << "\n";
    return kDiverged;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace lanmdp::cli
