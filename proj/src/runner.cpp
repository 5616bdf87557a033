#include "marginlab/runner.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "marginlab/errors.hpp"
#include "marginlab/numfmt.hpp"
#include "marginlab/report.hpp"
#include "marginlab/rng.hpp"
#include "marginlab/theory.hpp"

#ifndef MARGINLAB_VERSION
#define MARGINLAB_VERSION "0.0.0"
#endif
#ifndef MARGINLAB_GIT
#define MARGINLAB_GIT "unknown"
#endif

namespace marginlab {

const char* version_string() { return MARGINLAB_VERSION " (" MARGINLAB_GIT ")"; }

const std::vector<std::string>& verify_checks() {
  static const std::vector<std::string> names = {"theorem1", "theorem2", "concentration", "leftover_accuracy",
                                                 "prop1",    "gs",       "flow",          "hoeffding",
                                                 "gradients", "damp_peak"};
  return names;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e) ||
      dynamic_cast<const ShapeError*>(&e))
    return 2;
  if (dynamic_cast<const ConvergenceError*>(&e) || dynamic_cast<const DivergenceError*>(&e)) return 3;
  return 1;
}

namespace {

using Clock = std::chrono::steady_clock;

DgpConfig default_fig1() {
  DgpConfig c;
  c.rho = 0.9;
  c.B = 10.0;
  c.d = 300;
  c.n = 1000;
  c.seed = 0;
  return c;
}

DgpConfig train_dgp_or(const ExperimentConfig& cfg, const DgpConfig& fallback) {
  return cfg.dgp ? cfg.dgp->train : fallback;
}

const DgpSection& require_dgp(const ExperimentConfig& cfg) {
  if (!cfg.dgp) throw ConfigError("missing required key 'dgp'");
  return *cfg.dgp;
}

json final_metrics(const Snapshot& s) {
  json j = {{"epoch", s.epoch}, {"train", to_json(s.train)}, {"test", to_json(s.test)}};
  if (s.w_y) {
    j["w_y"] = *s.w_y;
    j["B_wz"] = *s.B_wz;
    j["we_norm"] = *s.we_norm;
  }
  return j;
}

int resolve_M(const ExperimentConfig& cfg, const Dataset& ds) {
  if (cfg.maxmargin.M) return *cfg.maxmargin.M;
  if (ds.k() < 1) throw DomainError("leftover group is empty (k = 0)");
  return ds.n() / (2 * ds.k());
}

// ---- commands ----

json cmd_gen(const ExperimentConfig& cfg, OutputDir& out) {
  const auto& dgp = require_dgp(cfg);
  const Dataset tr = sample_dataset(dgp.train);
  std::ostringstream s;
  write_dataset_csv(tr, s);
  out.write("train.csv", s.str());
  json j = {{"train", {{"n", tr.n()}, {"d", tr.d()}, {"k", tr.k()}}}};
  if (dgp.test) {
    const Dataset te = sample_dataset(dgp.test_config());
    std::ostringstream t;
    write_dataset_csv(te, t);
    out.write("test.csv", t.str());
    j["test"] = {{"n", te.n()}, {"d", te.d()}, {"k", te.k()}};
  }
  return j;
}

ModelParams initial_params(const ExperimentConfig& cfg, int d) {
  if (cfg.model.kind == ModelKind::Linear) return ModelParams::linear_zeros(d);
  return ModelParams::mlp_init(d, cfg.model.hidden, cfg.model.init_seed ? *cfg.model.init_seed : cfg.train.seed);
}

json cmd_train(const ExperimentConfig& cfg, OutputDir& out) {
  const auto& dgp = require_dgp(cfg);
  const Dataset tr = sample_dataset(dgp.train);
  const Dataset te = sample_dataset(dgp.test_config());
  const TrainRecord rec = train(initial_params(cfg, tr.d()), tr, te, cfg.loss, cfg.train);
  std::ostringstream csv;
  write_metrics_csv(rec, csv);
  out.write("metrics.csv", csv.str());
  out.write_json("params.json", to_json(rec.final_params));
  return {{"k_train", tr.k()}, {"k_test", te.k()}, {"final", final_metrics(rec.snapshots.back())}};
}

json cmd_maxmargin(const ExperimentConfig& cfg, OutputDir& out) {
  const auto& dgp = require_dgp(cfg);
  const Dataset tr = sample_dataset(dgp.train);
  const auto sol = solve(MarginQp::from_dataset(tr, cfg.maxmargin.side), cfg.maxmargin.solver);
  out.write_json("solution.json", to_json(sol));
  const ModelParams p = ModelParams::linear(sol.w);
  LossSpec log_loss_spec;
  json j = {{"side", to_string(cfg.maxmargin.side)},
            {"primal_value", sol.primal_value},
            {"dual_value", sol.dual_value},
            {"kkt",
             {{"max_violation", sol.kkt.max_violation},
              {"max_comp_slack", sol.kkt.max_comp_slack},
              {"stationarity", sol.kkt.stationarity},
              {"gap", sol.kkt.gap}}},
            {"w_y", p.w_y()},
            {"B_wz", tr.B * p.w_z()},
            {"we_norm", p.w_e().norm()},
            {"shortcut_reliant", tr.B * p.w_z() > p.w_y()},
            {"leftover_accuracy_formula", leftover_accuracy(p, tr.B)},
            {"train", to_json(evaluate(p, tr, log_loss_spec))}};
  if (dgp.test) j["test"] = to_json(evaluate(p, sample_dataset(dgp.test_config()), log_loss_spec));
  return j;
}

// ---- verify checks ----

json verify_theorem1(const ExperimentConfig& cfg, Section& v) {
  v.finish();
  const Dataset ds = sample_dataset(train_dgp_or(cfg, default_fig1()));
  const int M = resolve_M(cfg, ds);
  const auto r = theorem1_report(ds, M, cfg.maxmargin.eps, cfg.maxmargin.solver, cfg.maxmargin.subset_seed);
  const bool pass = r.stable_brackets && r.shortcut_brackets.value_or(true);
  return {{"report", to_json(r)}, {"pass", pass}};
}

json verify_theorem2(const ExperimentConfig& cfg, Section& v) {
  const double b = v.num("b", 1.0);
  const int seeds = static_cast<int>(v.integer("seeds", 10));
  v.finish();
  DgpConfig base;
  base.rho = 0.9;
  base.B = 10.0;
  base.d = 50;
  base.n = 200;
  base = train_dgp_or(cfg, base);
  json rows = json::array();
  double worst = 0.0;
  for (int s = 0; s < seeds; ++s) {
    DgpConfig c = base;
    c.seed = base.seed + s;
    const Dataset ds = sample_dataset(c);
    const Eigen::VectorXd w = solve_uniform_margin(ds, b);
    const double err_y = std::abs(w(1) - b), err_z = std::abs(w(0)), err_e = w.tail(w.size() - 2).norm();
    const Eigen::VectorXd margins = (ds.X * w).cwiseProduct(ds.y);
    const double residual = (margins.array() - b).matrix().norm();
    worst = std::max({worst, err_y, err_z, err_e});
    rows.push_back({{"seed", c.seed}, {"w_y", w(1)}, {"w_z", w(0)}, {"we_norm", err_e}, {"residual", residual}});
  }
  return {{"b", b}, {"max_component_error", worst}, {"tolerance", 1e-8 * b}, {"seeds", rows},
          {"pass", worst <= 1e-8 * b}};
}

json verify_concentration(const ExperimentConfig&, Section& v) {
  const LemmaId lemma = lemma_id_from_string(v.str("lemma"));
  ConcentrationParams p;
  p.d = static_cast<int>(v.integer("d", 1000));
  p.eps = v.num("eps", 1.0);
  p.T_V = static_cast<int>(v.integer("T_V", 1));
  p.T_U = static_cast<int>(v.integer("T_U", 1));
  const int trials = static_cast<int>(v.integer("trials", 10000));
  const std::uint64_t seed = v.u64("seed", 0);
  v.finish();
  const auto r = check_concentration(lemma, p, trials, seed);
  return to_json(r);
}

json verify_leftover_accuracy(const ExperimentConfig& cfg, Section& v) {
  const int samples = static_cast<int>(v.integer("samples", 100000));
  const int random_weights = static_cast<int>(v.integer("random_weights", 10));
  const double tol = v.num("tol", 0.01);
  const std::uint64_t seed = v.u64("seed", 0);
  v.finish();
  const DgpConfig dc = train_dgp_or(cfg, default_fig1());
  const Dataset ds = sample_dataset(dc);
  const auto sol = solve(MarginQp::from_dataset(ds, Side::None), cfg.maxmargin.solver);

  std::vector<std::pair<std::string, ModelParams>> cases;
  cases.emplace_back("max_margin", ModelParams::linear(sol.w));
  Rng wr(derive_seed(seed, 0));
  for (int i = 0; i < random_weights; ++i) {
    Eigen::VectorXd w(dc.d);
    w(0) = wr.normal() / dc.B;
    w(1) = wr.normal();
    for (int j = 2; j < dc.d; ++j) w(j) = wr.normal() / std::sqrt(dc.d - 2.0);
    cases.emplace_back("random_" + std::to_string(i), ModelParams::linear(w));
  }

  json rows = json::array();
  bool pass = true;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto& p = cases[c].second;
    Rng rng(derive_seed(seed, c + 1));
    long correct = 0;
    const Eigen::VectorXd we = p.w_e();
    for (int i = 0; i < samples; ++i) {
      const int y = rng.rademacher();
      double f = dc.B * (-y) * p.w_z() + y * p.w_y();
      for (Eigen::Index j = 0; j < we.size(); ++j) f += we(j) * rng.normal();
      correct += (f >= 0.0 ? 1 : -1) == y;
    }
    const double mc = static_cast<double>(correct) / samples;
    const double formula = leftover_accuracy(p, dc.B);
    const bool ok = std::abs(mc - formula) <= tol;
    pass = pass && ok;
    rows.push_back({{"case", cases[c].first}, {"formula", formula}, {"monte_carlo", mc}, {"pass", ok}});
  }
  return {{"samples", samples}, {"tol", tol}, {"cases", rows}, {"pass", pass}};
}

json verify_prop1(const ExperimentConfig&, Section& v) {
  Prop1Scenario s;
  s.n = static_cast<int>(v.integer("n", 1000));
  s.d = static_cast<int>(v.integer("d", 400));
  s.rho = v.num("rho", 0.9);
  s.eps_conf = v.num("eps_conf", 0.01);
  s.gamma_conf = v.num("gamma_conf", 0.1);
  const int seeds = static_cast<int>(v.integer("seeds", 100));
  const std::uint64_t seed = v.u64("seed", 0);
  const double tol = v.num("tol", 0.15);
  const double min_frac = v.num("min_fraction", 0.9);
  v.finish();
  int within = 0;
  double worst = 0.0;
  json rows = json::array();
  for (int i = 0; i < seeds; ++i) {
    s.seed = seed + i;
    const auto r = prop1_check(s);
    within += r.rel_error <= tol;
    worst = std::max(worst, r.rel_error);
    rows.push_back({{"seed", s.seed}, {"formula", r.formula}, {"direct", r.direct}, {"rel_error", r.rel_error}});
  }
  const double frac = static_cast<double>(within) / seeds;
  return {{"formula", prop1_formula(s.d, s.n, s.rho, s.eps_conf, s.gamma_conf)},
          {"within_tol", within},
          {"fraction", frac},
          {"max_rel_error", worst},
          {"runs", rows},
          {"pass", frac >= min_frac}};
}

json verify_gs(const ExperimentConfig& cfg, Section& v) {
  const int seeds = static_cast<int>(v.integer("seeds", 20));
  const double lo = v.num("lo", 0.45), hi = v.num("hi", 0.55);
  v.finish();
  const DgpConfig base = train_dgp_or(cfg, default_fig1());
  double total = 0.0, max_inner = 0.0;
  json rows = json::array();
  for (int s = 0; s < seeds; ++s) {
    DgpConfig c = base;
    c.seed = base.seed + s;
    const auto g = gs_violation(sample_dataset(c));
    total += g.fraction;
    max_inner = std::max(max_inner, g.max_abs_inner);
    rows.push_back({{"seed", c.seed}, {"fraction", g.fraction}, {"max_abs_inner", g.max_abs_inner}, {"pairs", g.pairs}});
  }
  const double mean = total / seeds;
  return {{"threshold", base.B * base.B + 1.0},
          {"mean_fraction", mean},
          {"max_abs_inner", max_inner},
          {"runs", rows},
          {"pass", mean >= lo && mean <= hi}};
}

json verify_flow(const ExperimentConfig&, Section& v) {
  const int n = static_cast<int>(v.integer("n", 50));
  const double rho = v.num("rho", 0.8);
  const double Gamma = v.num("Gamma", 10.0);
  const double horizon = v.num("horizon", 10.0);
  const double h = v.num("h", 0.01);
  const double lr = v.num("lr", 1e-3);
  const double tol = v.num("tol", 1e-3);
  const double h_coarse = v.num("h_coarse", 0.5);
  const std::uint64_t seed = v.u64("seed", 0);
  v.finish();

  const auto ode = integrate_flow({}, Gamma, n, rho, horizon, h).back();

  const Dataset ds = flow_dataset(n, rho, Gamma, seed);
  TrainConfig tc;
  tc.lr = lr;
  tc.momentum = 0.0;
  tc.epochs = static_cast<std::int64_t>(std::llround(horizon / lr));
  tc.eval_every = tc.epochs;
  const auto rec = train(ModelParams::linear_zeros(ds.d()), ds, ds, LossSpec{}, tc);
  const double gd_wy = rec.final_params.w_y(), gd_wz = rec.final_params.w_z();
  const double diff = std::max(std::abs(gd_wy - ode.w_y), std::abs(gd_wz - ode.w_z));

  const auto ref = integrate_flow({}, Gamma, n, rho, horizon, h_coarse / 8.0).back();
  const auto c1 = integrate_flow({}, Gamma, n, rho, horizon, h_coarse).back();
  const auto c2 = integrate_flow({}, Gamma, n, rho, horizon, h_coarse / 2.0).back();
  const double e1 = std::hypot(c1.w_y - ref.w_y, c1.w_z - ref.w_z);
  const double e2 = std::hypot(c2.w_y - ref.w_y, c2.w_z - ref.w_z);
  const double ratio = e2 > 0.0 ? e1 / e2 : 0.0;

  return {{"ode", {{"w_y", ode.w_y}, {"w_z", ode.w_z}}},
          {"gd", {{"w_y", gd_wy}, {"w_z", gd_wz}, {"epochs", tc.epochs}}},
          {"max_abs_diff", diff},
          {"tol", tol},
          {"step_halving", {{"h", h_coarse}, {"err_h", e1}, {"err_h2", e2}, {"ratio", ratio}}},
          {"pass", diff <= tol && ratio >= 8.0 && ratio <= 32.0}};
}

json verify_hoeffding(const ExperimentConfig&, Section& v) {
  const int n = static_cast<int>(v.integer("n", 1000));
  const double rho = v.num("rho", 0.9 + std::sqrt(std::log(3.0 * n) / n));
  const int trials = static_cast<int>(v.integer("trials", 100000));
  const std::uint64_t seed = v.u64("seed", 0);
  v.finish();
  const auto s = leftover_fraction_stats(n, rho, trials, seed);
  const double target = 1.0 / (3.0 * n);
  const double paper = target * target;
  return {{"n", n},
          {"rho", rho},
          {"trials", trials},
          {"mean_fraction", s.mean_fraction},
          {"tail_frequency", s.tail_frequency},
          {"tail_std_error", s.tail_stderr},
          {"stated_bound", target},
          {"hoeffding_bound", paper},
          {"pass", s.tail_frequency <= target + 3.0 * s.tail_stderr}};
}

double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

json verify_gradients(const ExperimentConfig&, Section& v) {
  const int points = static_cast<int>(v.integer("points", 100));
  const std::uint64_t seed = v.u64("seed", 0);
  const double tol = v.num("tol", 1e-5);
  const double step = v.num("step", 1e-6);
  const double floor = v.num("floor", 1e-4);
  v.finish();

  std::vector<std::pair<std::string, LossSpec>> specs;
  auto add = [&](const std::string& name, LossKind k, auto&& tweak) {
    LossSpec s;
    s.kind = k;
    tweak(s);
    specs.emplace_back(name, s);
  };
  auto none = [](LossSpec&) {};
  add("log", LossKind::Log, none);
  add("sigma_damp", LossKind::SigmaDamp, [](LossSpec& s) { s.T_pos = s.T_neg = 2.0; });
  add("sigma_damp_calibrated", LossKind::SigmaDamp, [](LossSpec& s) {
    s.damp_form = DampForm::Calibrated;
    s.T_pos = 1.5;
    s.T_neg = 3.0;
  });
  add("sigma_stitch", LossKind::SigmaStitch, [](LossSpec& s) { s.u = 1.5; });
  add("sigma_stitch_per_class", LossKind::SigmaStitch, [](LossSpec& s) {
    s.T_pos = 2.0;
    s.T_neg = 0.5;
  });
  add("marg_log", LossKind::MargLog, [](LossSpec& s) {
    s.gamma_pos = 1.0;
    s.gamma_neg = -2.0;
  });
  add("sd", LossKind::SpectralDecoupling, none);

  Rng rng(seed);
  json rows = json::array();
  bool pass = true;
  for (const auto& [name, spec] : specs) {
    double worst = 0.0;
    for (int i = 0; i < points; ++i) {
      const double f = -5.0 + 10.0 * rng.uniform();
      const int y = rng.rademacher();
      const double fd = (eval_loss(spec, f + step, y) - eval_loss(spec, f - step, y)) / (2.0 * step);
      worst = std::max(worst, rel_err(grad_output(spec, f, y), fd, floor));
    }
    pass = pass && worst <= tol;
    rows.push_back({{"target", "loss:" + name}, {"max_rel_error", worst}, {"pass", worst <= tol}});
  }

  // both models on small random instances
  for (int kind = 0; kind < 2; ++kind) {
    double worst = 0.0;
    const int n = 8, d = 5, h = 3;
    for (int i = 0; i < points; ++i) {
      Eigen::MatrixXd X(n, d);
      Eigen::VectorXd y(n);
      for (int r = 0; r < n; ++r) {
        y(r) = rng.rademacher();
        for (int c = 0; c < d; ++c) X(r, c) = rng.normal();
      }
      ModelParams p = kind == 0 ? ModelParams::linear_zeros(d) : ModelParams::mlp_zeros(d, h);
      for (Eigen::Index j = 0; j < p.theta().size(); ++j) p.theta()(j) = 0.7 * rng.normal();
      const auto& spec = specs[i % specs.size()].second;
      const auto lg = backward(p, X, y, spec);
      for (Eigen::Index j = 0; j < p.theta().size(); ++j) {
        ModelParams a = p, b = p;
        a.theta()(j) += step;
        b.theta()(j) -= step;
        const double fa = backward(a, X, y, spec).loss, fb = backward(b, X, y, spec).loss;
        worst = std::max(worst, rel_err(lg.grad(j), (fa - fb) / (2.0 * step), floor));
      }
    }
    pass = pass && worst <= tol;
    rows.push_back({{"target", kind == 0 ? "model:linear" : "model:mlp"}, {"max_rel_error", worst}, {"pass", worst <= tol}});
  }
  return {{"points", points}, {"step", step}, {"tol", tol}, {"floor", floor}, {"targets", rows}, {"pass", pass}};
}

json verify_damp_peak(const ExperimentConfig&, Section& v) {
  const double T = v.num("T", 1.0);
  v.finish();
  const auto p = damp_peak(T);
  const double per_T = p.peak / T;
  return {{"T", T},
          {"u_star", p.u_star},
          {"m_star", p.m_star},
          {"peak", p.peak},
          {"peak_over_T", per_T},
          {"pass", std::abs(per_T - 0.278) < 0.0005}};
}

json cmd_verify(const ExperimentConfig& cfg, const std::string& check_arg, OutputDir& out) {
  Section v(cfg.verify, "verify");
  std::string check = check_arg;
  if (v.has("check")) {
    const std::string c = v.str("check");
    if (!check.empty() && c != check)
      throw ConfigError("verify.check is '" + c + "' but the command line asks for '" + check + "'");
    check = c;
  }
  if (check.empty()) throw ConfigError("verify needs a check name");
  json result;
  if (check == "theorem1") result = verify_theorem1(cfg, v);
  else if (check == "theorem2") result = verify_theorem2(cfg, v);
  else if (check == "concentration") result = verify_concentration(cfg, v);
  else if (check == "leftover_accuracy") result = verify_leftover_accuracy(cfg, v);
  else if (check == "prop1") result = verify_prop1(cfg, v);
  else if (check == "gs") result = verify_gs(cfg, v);
  else if (check == "flow") result = verify_flow(cfg, v);
  else if (check == "hoeffding") result = verify_hoeffding(cfg, v);
  else if (check == "gradients") result = verify_gradients(cfg, v);
  else if (check == "damp_peak") result = verify_damp_peak(cfg, v);
  else throw ConfigError("unknown verify check '" + check + "'");
  json doc = {{"check", check}};
  doc.update(result);
  out.write_json("verify_" + check + ".json", doc);
  return doc;
}

// ---- sweep ----

std::string cell_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

struct CellResult {
  bool ok = false;
  int code = 0;
  std::string error;
  json summary;
};

std::vector<std::pair<std::string, std::function<std::string(const json&)>>> sweep_columns(const std::string& cmd) {
  auto num = [](const json& j, const json::json_pointer& p) -> std::string {
    if (!j.contains(p) || j.at(p).is_null()) return "";
    const json& v = j.at(p);
    if (v.is_number()) return fmt_double(v.get<double>());
    return cell_text(v);
  };
  using P = json::json_pointer;
  std::vector<std::pair<std::string, std::function<std::string(const json&)>>> cols;
  auto col = [&](const std::string& name, const std::string& ptr) {
    cols.emplace_back(name, [num, p = P(ptr)](const json& j) { return num(j, p); });
  };
  if (cmd == "train") {
    col("train_loss", "/result/final/train/all/loss");
    col("train_acc", "/result/final/train/all/acc");
    col("test_loss", "/result/final/test/all/loss");
    col("test_acc", "/result/final/test/all/acc");
    col("test_shortcut_acc", "/result/final/test/shortcut/acc");
    col("test_leftover_acc", "/result/final/test/leftover/acc");
    col("test_worst_group_acc", "/result/final/test/worst_group_acc");
    col("w_y", "/result/final/w_y");
    col("B_wz", "/result/final/B_wz");
  } else if (cmd == "maxmargin") {
    col("primal_value", "/result/primal_value");
    col("gap", "/result/kkt/gap");
    col("w_y", "/result/w_y");
    col("B_wz", "/result/B_wz");
    col("leftover_accuracy_formula", "/result/leftover_accuracy_formula");
    col("test_acc", "/result/test/all/acc");
  } else {
    col("check", "/result/check");
    col("pass", "/result/pass");
  }
  return cols;
}

json run_single(const std::string& command, const ExperimentConfig& cfg, const std::string& check,
                const std::string& out_dir, const RunOptions& opts);

json cmd_sweep(const ExperimentConfig& cfg, OutputDir& out, const RunOptions& opts, std::uint64_t base_seed) {
  if (!cfg.sweep) throw ConfigError("missing required key 'sweep'");
  const auto& sw = *cfg.sweep;
  std::size_t cells = 1;
  for (const auto& [k, vals] : sw.grid) cells *= vals.size();

  // build and validate every cell before running anything
  std::vector<ExperimentConfig> configs;
  std::vector<std::vector<json>> values;
  for (std::size_t c = 0; c < cells; ++c) {
    json doc = cfg.raw;
    doc.erase("sweep");
    doc["command"] = sw.command;
    std::size_t rem = c;
    std::vector<json> vals(sw.grid.size());
    for (std::size_t g = sw.grid.size(); g-- > 0;) {
      const auto& choices = sw.grid[g].second;
      vals[g] = choices[rem % choices.size()];
      rem /= choices.size();
    }
    bool seed_in_grid = false, train_seed_in_grid = false;
    for (std::size_t g = 0; g < sw.grid.size(); ++g) {
      set_dotted(doc, sw.grid[g].first, vals[g]);
      seed_in_grid = seed_in_grid || sw.grid[g].first == "dgp.seed";
      train_seed_in_grid = train_seed_in_grid || sw.grid[g].first == "train.seed";
    }
    if (!seed_in_grid && doc.contains("dgp")) {
      const std::uint64_t s = doc["dgp"].value("seed", std::uint64_t{base_seed});
      doc["dgp"]["seed"] = s ^ c;
    }
    if (!train_seed_in_grid) {
      const std::uint64_t s = doc.contains("train") ? doc["train"].value("seed", std::uint64_t{0}) : 0;
      doc["train"]["seed"] = s ^ c;
    }
    configs.push_back(parse_config(doc));
    values.push_back(std::move(vals));
  }

  std::vector<CellResult> results(cells);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t c; (c = next.fetch_add(1)) < cells;) {
      char name[32];
      std::snprintf(name, sizeof(name), "cell_%04zu", c);
      RunOptions sub = opts;
      sub.quiet = true;
      sub.seed.reset();
      try {
        results[c].summary =
            run_single(sw.command, configs[c], "", (out.root() / name).string(), sub);
        results[c].ok = true;
      } catch (const std::exception& e) {
        results[c].error = e.what();
        results[c].code = exit_code_for(e);
      }
    }
  };
  const int workers = std::max(1, std::min<int>(opts.workers, static_cast<int>(cells)));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  const auto cols = sweep_columns(sw.command);
  std::ostringstream csv;
  csv << "cell";
  for (const auto& [k, _] : sw.grid) csv << ',' << csv_field(k);
  csv << ",status";
  for (const auto& [name, _] : cols) csv << ',' << name;
  csv << '\n';
  std::size_t ok = 0;
  int first_code = 0;
  std::string first_error;
  for (std::size_t c = 0; c < cells; ++c) {
    csv << c;
    for (const auto& v : values[c]) csv << ',' << csv_field(cell_text(v));
    const auto& r = results[c];
    csv << ',' << csv_field(r.ok ? "ok" : "error: " + r.error);
    for (const auto& [name, get] : cols) csv << ',' << csv_field(r.ok ? get(r.summary) : "");
    csv << '\n';
    if (r.ok) {
      ++ok;
    } else if (first_error.empty() || r.code == 2) {
      if (first_code != 2) {
        first_code = r.code;
        first_error = r.error;
      }
    }
  }
  out.write("sweep.csv", csv.str());
  if (first_code == 2) throw ConfigError("sweep cell failed validation: " + first_error);
  if (ok == 0) {
    if (first_code == 3) throw ConvergenceError("every sweep cell failed: " + first_error);
    throw std::runtime_error("every sweep cell failed: " + first_error);
  }
  return {{"cells", cells}, {"succeeded", ok}, {"failed", cells - ok}};
}

json run_single(const std::string& command, const ExperimentConfig& cfg, const std::string& check,
                const std::string& out_dir, const RunOptions& opts) {
  const auto t0 = Clock::now();
  OutputDir out(out_dir);
  json result;
  if (command == "gen") result = cmd_gen(cfg, out);
  else if (command == "train") result = cmd_train(cfg, out);
  else if (command == "maxmargin") result = cmd_maxmargin(cfg, out);
  else if (command == "verify") result = cmd_verify(cfg, check, out);
  else if (command == "sweep") result = cmd_sweep(cfg, out, opts, cfg.dgp ? cfg.dgp->train.seed : 0);
  else throw ConfigError("unknown command '" + command + "'");
  const double wall = std::chrono::duration<double>(Clock::now() - t0).count();

  json summary = {{"command", command},
                  {"version", version_string()},
                  {"config", config_to_json(cfg)},
                  {"wall_time_s", wall},
                  {"result", result},
                  {"manifest", out.manifest()}};
  std::ofstream f(out.root() / "summary.json");
  f << summary.dump(2) << "\n";
  return summary;
}

}  // namespace

json run_command(const std::string& command_in, ExperimentConfig cfg, const RunOptions& opts) {
  std::string command = command_in, check;
  // "verify:<check>" carries the check name from the command line
  if (auto pos = command.find(':'); pos != std::string::npos) {
    check = command.substr(pos + 1);
    command = command.substr(0, pos);
  }
  if (command == "run") {
    if (cfg.command.empty()) throw ConfigError("missing required key 'command'");
    command = cfg.command;
  } else if (!cfg.command.empty() && cfg.command != command) {
    throw ConfigError("config command '" + cfg.command + "' does not match '" + command + "'");
  }
  cfg.command = command;
  if (opts.out_dir) cfg.out_dir = *opts.out_dir;
  if (opts.seed) {
    if (cfg.dgp) cfg.dgp->train.seed = *opts.seed;
    cfg.train.seed = *opts.seed;
    cfg.raw["train"]["seed"] = *opts.seed;
    if (cfg.raw.contains("dgp")) cfg.raw["dgp"]["seed"] = *opts.seed;
  }
  if (opts.workers < 1) throw ConfigError("--workers must be at least 1");
  return run_single(command, cfg, check, cfg.out_dir, opts);
}

}  // namespace marginlab
