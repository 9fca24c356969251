#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cli.hpp"
#include "run_config.hpp"

#include "lanmdp/curve_task.hpp"
#include "lanmdp/oracle.hpp"

#include <sstream>

namespace py = pybind11;
using namespace lanmdp;

namespace {

curve::CurveTrajectory to_trajectory(const Eigen::Ref<const Mat>& pts) {
  if (pts.cols() != 2) throw ValidationError("points must be an (n, 2) array");
  curve::CurveTrajectory t;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) t.points.push_back(pts.row(i).transpose());
  return t;
}

Mat to_matrix(const std::vector<Vec>& pts) {
  Mat m(static_cast<Eigen::Index>(pts.size()), pts.empty() ? 0 : pts.front().size());
  for (std::size_t i = 0; i < pts.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return m;
}

std::vector<Vec> to_states(const Eigen::Ref<const Mat>& m) {
  std::vector<Vec> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(m.row(i).transpose());
  return out;
}

py::dict checks_dict(const tabular::CheckResult& c) {
  py::dict d;
  d["name"] = c.name;
  d["deviation"] = c.deviation;
  d["tolerance"] = c.tolerance;
  d["passed"] = c.passed;
  return d;
}

// Trained bundle plus the run configuration echoed into it.
struct EnergyModel {
  ModelBundle bundle;
  cli::RunConfig config;

  static EnergyModel load(const std::string& path) {
    EnergyModel m{load_bundle(path), {}};
    m.config = cli::run_config_from_json(m.bundle.config);
    return m;
  }

  Context context(const Eigen::Ref<const Mat>& states) const {
    const std::vector<Vec> hist = to_states(states);
    if (hist.empty()) throw ValidationError("context needs at least one state");
    return make_context(hist, hist.size() - 1, bundle.policy.context_len);
  }
};

}  // namespace

PYBIND11_MODULE(_lanmdp, m) {
  m.doc() = "Latent-action nMDP: curve task, tabular oracle and CLI";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<curve::CubicFit>(m, "CubicFit")
      .def_property_readonly("a", [](const curve::CubicFit& f) { return f.coeffs.a; })
      .def_property_readonly("b", [](const curve::CubicFit& f) { return f.coeffs.b; })
      .def_property_readonly("c", [](const curve::CubicFit& f) { return f.coeffs.c; })
      .def_property_readonly("d", [](const curve::CubicFit& f) { return f.coeffs.d; })
      .def_readonly("residual", &curve::CubicFit::residual)
      .def("__repr__", [](const curve::CubicFit& f) {
        std::ostringstream s;
        s << "CubicFit(a=" << f.coeffs.a << ", b=" << f.coeffs.b << ", c=" << f.coeffs.c << ", d=" << f.coeffs.d
          << ", residual=" << f.residual << ")";
        return s.str();
      });

  m.def("cubic_fit", [](const Eigen::Ref<const Mat>& pts) { return curve::cubic_fit(to_trajectory(pts)); },
        py::arg("points"), "Least-squares cubic through (x, y) rows.");

  m.def(
      "hermite_cubic",
      [](double yl, double yr, double sl, double sr) {
        const curve::CubicCoeffs c = curve::cubic_from_hermite(yl, yr, sl, sr);
        return py::make_tuple(c.a, c.b, c.c, c.d);
      },
      py::arg("y_left"), py::arg("y_right"), py::arg("slope_left"), py::arg("slope_right"));

  m.def(
      "generate_demos",
      [](std::size_t n, double min_a, std::uint64_t seed) {
        std::vector<Mat> out;
        for (const auto& t : curve::generate_demos(curve::CurveEnvConfig{}, n, min_a, seed)) out.push_back(to_matrix(t.points));
        return out;
      },
      py::arg("n"), py::arg("min_a") = 1.0, py::arg("seed") = 0,
      "Rejection-sampled cubic demos on the default curve environment, each a (21, 2) array.");

  m.def(
      "evaluate_rollouts",
      [](const std::vector<Mat>& trajs, double accept_a) {
        std::vector<curve::CurveTrajectory> ts;
        for (const Mat& t : trajs) ts.push_back(to_trajectory(t));
        const curve::RolloutEvaluation ev = curve::evaluate_rollouts(ts, accept_a);
        py::dict d;
        d["acceptance_rate"] = ev.acceptance_rate;
        d["mean_residual"] = ev.mean_residual ? py::cast(*ev.mean_residual) : py::none();
        d["accepted"] = std::vector<bool>(ev.accepted.begin(), ev.accepted.end());
        d["fits"] = ev.fits;
        return d;
      },
      py::arg("trajectories"), py::arg("accept_a") = 0.5);

  py::class_<tabular::TabularNmdp>(m, "TabularInstance")
      .def_static("random", &tabular::random_instance, py::arg("n_states"), py::arg("n_actions"), py::arg("horizon"),
                  py::arg("seed") = 0, py::arg("logit_scale") = 1.0)
      .def_static("from_json",
                  [](const std::string& text) { return tabular::instance_from_json(nlohmann::json::parse(text)); })
      .def("to_json", [](const tabular::TabularNmdp& t) { return tabular::instance_to_json(t).dump(); })
      .def_readonly("n_states", &tabular::TabularNmdp::n_states)
      .def_readonly("n_actions", &tabular::TabularNmdp::n_actions)
      .def_readonly("horizon", &tabular::TabularNmdp::horizon)
      .def("log_marginal",
           [](const tabular::TabularNmdp& t, const std::vector<int>& seq) { return tabular::exact_log_marginal(t, seq); })
      .def("posterior",
           [](const tabular::TabularNmdp& t, const std::vector<int>& seq) {
             return tabular::exact_posterior(t, seq).per_step;
           })
      .def("policy_gradient",
           [](const tabular::TabularNmdp& t, const std::vector<int>& seq) {
             return tabular::exact_policy_gradient(t, seq);
           })
      .def(
          "identity_suite",
          [](const tabular::TabularNmdp& t, std::uint64_t seed) {
            py::list out;
            for (const auto& c : tabular::run_identity_suite(t, seed)) out.append(checks_dict(c));
            return out;
          },
          py::arg("seed") = 0);

  py::class_<EnergyModel>(m, "EnergyModel")
      .def_static("load", &EnergyModel::load, py::arg("path"))
      .def_property_readonly("context_len", [](const EnergyModel& e) { return e.bundle.policy.context_len; })
      .def_property_readonly("config", [](const EnergyModel& e) { return e.bundle.config.dump(); })
      .def(
          "energy",
          [](const EnergyModel& e, const Eigen::Ref<const Mat>& states, const Vec& action) {
            return energy(e.bundle.policy, e.context(states), action);
          },
          py::arg("states"), py::arg("action"), "f(a; ctx) with ctx the last L rows of states, padded with the first.")
      .def(
          "sample_prior",
          [](const EnergyModel& e, const Eigen::Ref<const Mat>& states, std::size_t n, std::uint64_t seed) {
            Rng rng(seed);
            return to_matrix(sample_prior(e.bundle.policy, e.context(states), e.config.train.eval_sampler, n, rng));
          },
          py::arg("states"), py::arg("n"), py::arg("seed") = 0)
      .def(
          "transition_mean",
          [](const EnergyModel& e, const Vec& state, const Vec& action) {
            return transition_mean(e.bundle.ensemble.primary(), state, action);
          },
          py::arg("state"), py::arg("action"))
      .def(
          "plan",
          [](const EnergyModel& e, const Eigen::Ref<const Mat>& prefix, const Vec& goal, std::uint64_t seed) {
            Rng rng(seed);
            const curve::GoalPlan gp =
                curve::plan_to_goal(e.config.env, e.bundle.policy, e.bundle.ensemble.primary(), to_states(prefix), goal,
                                    e.config.plan_sampler, e.config.train.eval_sampler, rng);
            py::dict d;
            d["path"] = to_matrix(gp.path.points);
            d["actions"] = to_matrix(gp.plan.actions);
            d["residual_to_goal"] = gp.plan.residual_to_goal;
            d["fit"] = gp.fit;
            d["reference"] = to_matrix(gp.reference.points);
            return d;
          },
          py::arg("prefix"), py::arg("goal"), py::arg("seed") = 0);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one lanmdp command; returns (exit_code, stdout, stderr).");
}
