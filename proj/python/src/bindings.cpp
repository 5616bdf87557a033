#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "marginlab/dgp.hpp"
#include "marginlab/errors.hpp"
#include "marginlab/losses.hpp"
#include "marginlab/maxmargin.hpp"
#include "marginlab/model.hpp"
#include "marginlab/report.hpp"
#include "marginlab/runner.hpp"
#include "marginlab/theory.hpp"
#include "marginlab/trainer.hpp"

#define STRINGIFY(x) #x
#define MACRO_STRINGIFY(x) STRINGIFY(x)

namespace py = pybind11;
using namespace marginlab;

namespace {

DgpConfig make_dgp(double rho, double B, int d, int n, std::uint64_t seed) {
  DgpConfig c;
  c.rho = rho;
  c.B = B;
  c.d = d;
  c.n = n;
  c.seed = seed;
  return c;
}

py::dict dataset_dict(const Dataset& ds) {
  py::dict out;
  out["X"] = ds.X;
  out["y"] = ds.y;
  out["z"] = ds.z;
  out["shortcut_idx"] = ds.shortcut_idx;
  out["leftover_idx"] = ds.leftover_idx;
  out["B"] = ds.B;
  return out;
}

Dataset dataset_from(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& z, double B) {
  return make_dataset(X, y, z, B);
}

LossSpec loss_spec(const std::string& kind, double T_pos, double T_neg, double u, double lambda, double gamma_pos,
                   double gamma_neg, const std::string& damp_form) {
  LossSpec s;
  s.kind = loss_kind_from_string(kind);
  s.T_pos = T_pos;
  s.T_neg = T_neg;
  s.u = u;
  s.lambda = lambda;
  s.gamma_pos = gamma_pos;
  s.gamma_neg = gamma_neg;
  s.damp_form = damp_form_from_string(damp_form);
  s.validate();
  return s;
}

Side side_from(const std::string& s) {
  if (s == "none") return Side::None;
  if (s == "stable") return Side::StableSide;
  if (s == "shortcut") return Side::ShortcutSide;
  throw ConfigError("side must be none, stable or shortcut");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "marginlab core: dgp, losses, training, max-margin solver and verification checks";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DegenerateDataError>(m, "DegenerateDataError", PyExc_RuntimeError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);

  py::class_<LossSpec>(m, "LossSpec")
      .def(py::init(&loss_spec), py::arg("kind") = "log", py::arg("T_pos") = 1.0, py::arg("T_neg") = 1.0,
           py::arg("u") = 1.0, py::arg("lam") = 0.1, py::arg("gamma_pos") = 0.0, py::arg("gamma_neg") = 0.0,
           py::arg("damp_form") = "temperature")
      .def_property_readonly("kind", [](const LossSpec& s) { return to_string(s.kind); })
      .def_readonly("T_pos", &LossSpec::T_pos)
      .def_readonly("T_neg", &LossSpec::T_neg)
      .def_readonly("u", &LossSpec::u)
      .def_readonly("lam", &LossSpec::lambda);

  m.def(
      "sample_dataset",
      [](double rho, double B, int d, int n, std::uint64_t seed) {
        return dataset_dict(sample_dataset(make_dgp(rho, B, d, n, seed)));
      },
      py::arg("rho"), py::arg("B"), py::arg("d"), py::arg("n"), py::arg("seed") = 0);

  m.def(
      "leftover_fraction_stats",
      [](int n, double rho, int trials, std::uint64_t seed) {
        const auto s = leftover_fraction_stats(n, rho, trials, seed);
        return py::make_tuple(s.mean_fraction, s.tail_frequency);
      },
      py::arg("n"), py::arg("rho"), py::arg("trials"), py::arg("seed") = 0);

  m.def("eval_loss", &eval_loss, py::arg("spec"), py::arg("f"), py::arg("y"));
  m.def("grad_output", &grad_output, py::arg("spec"), py::arg("f"), py::arg("y"));
  m.def(
      "damp_peak",
      [](double T) {
        const auto p = damp_peak(T);
        return py::make_tuple(p.m_star, p.peak);
      },
      py::arg("T"));

  m.def(
      "linear_forward",
      [](const Eigen::VectorXd& w, const Eigen::MatrixXd& X) { return forward(ModelParams::linear(w), X); },
      py::arg("w"), py::arg("X"));
  m.def(
      "linear_backward",
      [](const Eigen::VectorXd& w, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LossSpec& spec) {
        const auto lg = backward(ModelParams::linear(w), X, y, spec);
        return py::make_tuple(lg.loss, lg.grad);
      },
      py::arg("w"), py::arg("X"), py::arg("y"), py::arg("spec"));

  m.def(
      "train_linear",
      [](const Eigen::MatrixXd& Xtr, const Eigen::VectorXd& ytr, const Eigen::VectorXd& ztr,
         const Eigen::MatrixXd& Xte, const Eigen::VectorXd& yte, const Eigen::VectorXd& zte, double B,
         const LossSpec& spec, double lr, double momentum, double weight_decay, std::int64_t epochs,
         std::int64_t eval_every) {
        TrainConfig cfg;
        cfg.lr = lr;
        cfg.momentum = momentum;
        cfg.weight_decay = weight_decay;
        cfg.epochs = epochs;
        cfg.eval_every = eval_every;
        const Dataset tr = dataset_from(Xtr, ytr, ztr, B), te = dataset_from(Xte, yte, zte, B);
        TrainRecord rec;
        {
          py::gil_scoped_release release;
          rec = train(ModelParams::linear_zeros(tr.d()), tr, te, spec, cfg);
        }
        json snaps = json::array();
        for (const auto& s : rec.snapshots)
          snaps.push_back({{"epoch", s.epoch}, {"train", to_json(s.train)}, {"test", to_json(s.test)},
                           {"w_y", *s.w_y}, {"B_wz", *s.B_wz}, {"we_norm", *s.we_norm}});
        return py::make_tuple(rec.final_params.theta(), snaps.dump());
      },
      py::arg("X_train"), py::arg("y_train"), py::arg("z_train"), py::arg("X_test"), py::arg("y_test"),
      py::arg("z_test"), py::arg("B"), py::arg("spec"), py::arg("lr") = 1e-3, py::arg("momentum") = 0.9,
      py::arg("weight_decay") = 0.0, py::arg("epochs") = 1000, py::arg("eval_every") = 100);

  m.def(
      "solve_max_margin",
      [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& z, double B,
         const std::string& side, double tol, std::int64_t max_iter) {
        SolverOptions opts;
        opts.tol = tol;
        opts.max_iter = max_iter;
        const auto qp = MarginQp::from_dataset(dataset_from(X, y, z, B), side_from(side));
        QpSolution sol;
        {
          py::gil_scoped_release release;
          sol = solve(qp, opts);
        }
        return to_json(sol).dump();
      },
      py::arg("X"), py::arg("y"), py::arg("z"), py::arg("B"), py::arg("side") = "none", py::arg("tol") = 1e-8,
      py::arg("max_iter") = 1'000'000);

  m.def(
      "dual_objective",
      [](const Eigen::VectorXd& lambda, double nu, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
         const Eigen::VectorXd& z, double B, const std::string& side) {
        return dual_objective(lambda, nu, MarginQp::from_dataset(dataset_from(X, y, z, B), side_from(side)));
      },
      py::arg("lam"), py::arg("nu"), py::arg("X"), py::arg("y"), py::arg("z"), py::arg("B"),
      py::arg("side") = "none");

  m.def("stable_bound_formula", &stable_bound_formula, py::arg("d"), py::arg("k"), py::arg("M"), py::arg("eps"));
  m.def(
      "shortcut_bound_formula",
      [](double d, double k, double B, double eps) {
        const auto b = shortcut_bound_formula(d, k, B, eps);
        return py::make_tuple(b.W_shortcut, b.gamma, b.beta);
      },
      py::arg("d"), py::arg("k"), py::arg("B"), py::arg("eps"));

  m.def(
      "solve_uniform_margin",
      [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& z, double B, double b) {
        return solve_uniform_margin(dataset_from(X, y, z, B), b);
      },
      py::arg("X"), py::arg("y"), py::arg("z"), py::arg("B"), py::arg("b") = 1.0);

  m.def(
      "theorem1_report",
      [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& z, double B, int M, double eps,
         double tol, std::uint64_t subset_seed) {
        SolverOptions opts;
        opts.tol = tol;
        const Dataset ds = dataset_from(X, y, z, B);
        BoundReport r;
        {
          py::gil_scoped_release release;
          r = theorem1_report(ds, M, eps, opts, subset_seed);
        }
        return to_json(r).dump();
      },
      py::arg("X"), py::arg("y"), py::arg("z"), py::arg("B"), py::arg("M"), py::arg("eps") = 1.0,
      py::arg("tol") = 1e-8, py::arg("subset_seed") = 0);

  m.def(
      "leftover_accuracy",
      [](const Eigen::VectorXd& w, double B) { return leftover_accuracy(ModelParams::linear(w), B); },
      py::arg("w"), py::arg("B"));

  m.def(
      "check_concentration",
      [](const std::string& lemma, int d, double eps, int T_V, int T_U, int trials, std::uint64_t seed) {
        ConcentrationParams p;
        p.d = d;
        p.eps = eps;
        p.T_V = T_V;
        p.T_U = T_U;
        return to_json(check_concentration(lemma_id_from_string(lemma), p, trials, seed)).dump();
      },
      py::arg("lemma"), py::arg("d"), py::arg("eps"), py::arg("T_V") = 1, py::arg("T_U") = 1,
      py::arg("trials") = 10000, py::arg("seed") = 0);

  m.def(
      "prop1_check",
      [](int n, int d, double rho, double eps_conf, double gamma_conf, std::uint64_t seed) {
        Prop1Scenario s;
        s.n = n;
        s.d = d;
        s.rho = rho;
        s.eps_conf = eps_conf;
        s.gamma_conf = gamma_conf;
        s.seed = seed;
        const auto r = prop1_check(s);
        return py::make_tuple(r.formula, r.direct);
      },
      py::arg("n"), py::arg("d"), py::arg("rho"), py::arg("eps_conf"), py::arg("gamma_conf"), py::arg("seed") = 0);

  m.def(
      "gs_violation",
      [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& z, double B) {
        const auto g = gs_violation(dataset_from(X, y, z, B));
        return py::make_tuple(g.fraction, g.max_abs_inner);
      },
      py::arg("X"), py::arg("y"), py::arg("z"), py::arg("B"));

  m.def(
      "integrate_flow",
      [](double Gamma, int n, double rho, double horizon, double h) {
        const auto traj = integrate_flow({}, Gamma, n, rho, horizon, h);
        Eigen::MatrixXd out(traj.size(), 3);
        for (std::size_t i = 0; i < traj.size(); ++i) out.row(i) << traj[i].t, traj[i].w_y, traj[i].w_z;
        return out;
      },
      py::arg("Gamma"), py::arg("n"), py::arg("rho"), py::arg("horizon"), py::arg("h"));

  m.def(
      "run",
      [](const std::string& command, const std::string& config_json, const std::string& out_dir) {
        RunOptions opts;
        opts.out_dir = out_dir;
        opts.quiet = true;
        const ExperimentConfig cfg = parse_config(json::parse(config_json));
        json summary;
        {
          py::gil_scoped_release release;
          summary = run_command(command, cfg, opts);
        }
        return summary.dump();
      },
      py::arg("command"), py::arg("config_json"), py::arg("out_dir"));

#ifdef VERSION_INFO
  m.attr("__version__") = MACRO_STRINGIFY(VERSION_INFO);
#else
  m.attr("__version__") = "dev";
#endif
}
