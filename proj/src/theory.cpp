#include "marginlab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "marginlab/errors.hpp"
#include "marginlab/maxmargin.hpp"
#include "marginlab/rng.hpp"

namespace marginlab {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

std::string to_string(LemmaId id) {
  switch (id) {
    case LemmaId::InnerProduct: return "inner_product";
    case LemmaId::NormConc: return "norm";
    case LemmaId::SumBounds: return "sum_bounds";
  }
  return "?";
}

LemmaId lemma_id_from_string(const std::string& s) {
  if (s == "inner_product") return LemmaId::InnerProduct;
  if (s == "norm") return LemmaId::NormConc;
  if (s == "sum_bounds") return LemmaId::SumBounds;
  throw ConfigError("verify.lemma: unknown value '" + s + "'");
}

double concentration_tail(double eps) {
  const auto k = theorem1_constants();
  return std::exp(-eps * eps * k.c / std::pow(k.G, 4));
}

namespace {

struct Counter {
  std::string name;
  double stated_raw;
  long hits = 0;
};

SubBound finish(const Counter& c, int trials) {
  SubBound s;
  s.name = c.name;
  s.empirical = static_cast<double>(c.hits) / trials;
  s.std_error = std::sqrt(s.empirical * (1.0 - s.empirical) / trials);
  s.stated_raw = c.stated_raw;
  s.stated = std::min(1.0, c.stated_raw);
  s.pass = s.empirical <= s.stated + 3.0 * s.std_error;
  return s;
}

void fill_normal(Rng& rng, Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
}

}  // namespace

ConcentrationResult check_concentration(LemmaId lemma, const ConcentrationParams& p, int trials,
                                        std::uint64_t seed) {
  if (p.d < 1) throw DomainError("concentration: d must be >= 1");
  if (trials < 1) throw DomainError("concentration: trials must be >= 1");
  if (!(p.eps > 0.0)) throw DomainError("concentration: eps must be positive");
  const double G = theorem1_constants().G;
  const double sd = std::sqrt(static_cast<double>(p.d));
  const double tail = concentration_tail(p.eps);

  std::vector<Counter> counters;
  switch (lemma) {
    case LemmaId::InnerProduct:
      if (p.eps > G * G * sd) throw DomainError("concentration: inner-product lemma needs eps <= G^2 sqrt(d)");
      counters.push_back({"inner_product", 2.0 * tail});
      break;
    case LemmaId::NormConc:
      counters.push_back({"norm", 2.0 * tail});
      break;
    case LemmaId::SumBounds:
      if (!(p.eps < G * G * sd)) throw DomainError("concentration: sum bounds need eps < G^2 sqrt(d)");
      if (!(p.eps < sd)) throw DomainError("concentration: sum-norm bound needs eps < sqrt(d)");
      if (p.T_V < 1 || p.T_U < 1) throw DomainError("concentration: T_V and T_U must be >= 1");
      counters.push_back({"sum_norm", 2.0 * tail});
      counters.push_back({"self_inner", 4.0 * p.T_V * tail});
      counters.push_back({"cross_inner", 2.0 * p.T_U * tail});
      break;
  }

  const double thr = p.eps * sd;
  Eigen::VectorXd u(p.d), v(p.d), S(p.d);
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    switch (lemma) {
      case LemmaId::InnerProduct:
        fill_normal(rng, u);
        fill_normal(rng, v);
        counters[0].hits += std::abs(u.dot(v)) > thr;
        break;
      case LemmaId::NormConc:
        fill_normal(rng, u);
        counters[0].hits += std::abs(u.norm() - sd) > p.eps;
        break;
      case LemmaId::SumBounds: {
        std::vector<Eigen::VectorXd> V(p.T_V, Eigen::VectorXd(p.d));
        S.setZero();
        for (auto& vec : V) {
          fill_normal(rng, vec);
          S += vec;
        }
        counters[0].hits += S.norm() / std::sqrt(static_cast<double>(p.T_V)) > sd + p.eps;
        const double self_thr = p.d - 3.0 * p.eps * std::sqrt(static_cast<double>(p.T_V) * p.d);
        bool self_bad = false;
        for (const auto& vec : V) self_bad = self_bad || vec.dot(S) < self_thr;
        counters[1].hits += self_bad;
        const double cross_thr = p.eps * std::sqrt(static_cast<double>(p.T_V) * p.d);
        bool cross_bad = false;
        for (int j = 0; j < p.T_U; ++j) {
          fill_normal(rng, u);
          cross_bad = cross_bad || std::abs(u.dot(S)) > cross_thr;
        }
        counters[2].hits += cross_bad;
        break;
      }
    }
  }

  ConcentrationResult r;
  r.lemma = lemma;
  r.params = p;
  r.trials = trials;
  r.pass = true;
  for (const auto& c : counters) {
    r.subs.push_back(finish(c, trials));
    r.pass = r.pass && r.subs.back().pass;
  }
  return r;
}

double leftover_accuracy(const ModelParams& params, double B) {
  const double gap = B * params.w_z() - params.w_y();
  const double s = params.w_e().norm();
  if (s == 0.0) return gap < 0.0 ? 1.0 : (gap > 0.0 ? 0.0 : 0.5);
  return 1.0 - normal_cdf(gap / s);
}

void Prop1Scenario::validate() const {
  if (n < 1) throw ConfigError("prop1.n must be >= 1");
  if (d < 3) throw ConfigError("prop1.d must be >= 3");
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("prop1.rho must lie in (0, 1)");
  if (!(eps_conf > 0.0 && eps_conf <= gamma_conf && gamma_conf < 1.0))
    throw ConfigError("prop1: need 0 < eps_conf <= gamma_conf < 1");
  const double aligned = rho * n;
  if (std::abs(aligned - std::round(aligned)) > 1e-9) throw ConfigError("prop1: rho * n must be an integer");
  if (std::lround(aligned) >= n) throw ConfigError("prop1: leftover group would be empty");
}

double prop1_formula(double d, double n, double rho, double eps_conf, double gamma_conf) {
  return std::sqrt(d) / (std::sqrt((1.0 - rho) * n) * ((eps_conf / gamma_conf) * rho / (1.0 - rho) + 1.0));
}

Prop1Result prop1_check(const Prop1Scenario& s) {
  s.validate();
  const long aligned = std::lround(s.rho * s.n);
  Rng rng(s.seed);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(s.d - 2);
  Eigen::VectorXd delta(s.d - 2);
  double denom = 0.0;
  for (int i = 0; i < s.n; ++i) {
    const int y = rng.rademacher();
    fill_normal(rng, delta);
    if (i < aligned) {
      denom += s.eps_conf;
    } else {
      denom += s.gamma_conf;
      sum += (s.gamma_conf * y) * delta;
    }
  }
  Prop1Result r;
  r.direct = sum.norm() / std::abs(denom);
  r.formula = prop1_formula(s.d, s.n, s.rho, s.eps_conf, s.gamma_conf);
  r.rel_error = std::abs(r.direct - r.formula) / r.formula;
  return r;
}

GsViolation gs_violation(const Dataset& ds) {
  std::vector<int> groups[2][2];
  for (int i = 0; i < ds.n(); ++i) groups[ds.y(i) > 0][ds.z(i) > 0].push_back(i);
  const double thr = ds.B * ds.B + 1.0;
  GsViolation g;
  long above = 0;
  for (auto& row : groups)
    for (auto& idx : row) {
      if (idx.size() < 2) continue;
      Eigen::MatrixXd Xg(idx.size(), ds.d());
      for (std::size_t r = 0; r < idx.size(); ++r) Xg.row(r) = ds.X.row(idx[r]);
      const Eigen::MatrixXd gram = Xg * Xg.transpose();
      for (Eigen::Index a = 0; a < gram.rows(); ++a)
        for (Eigen::Index b = a + 1; b < gram.cols(); ++b) {
          ++g.pairs;
          above += gram(a, b) > thr;
          g.max_abs_inner = std::max(g.max_abs_inner, std::abs(gram(a, b)));
        }
    }
  if (g.pairs == 0) throw DomainError("gs_violation: no two samples share (y, z)");
  g.fraction = static_cast<double>(above) / g.pairs;
  return g;
}

FlowDeriv flow_rhs(double w_y, double w_z, double Gamma, int n, double rho) {
  const double a = 1.0 + Gamma / (2.0 * n * rho);
  const double b = 1.0 + Gamma / (2.0 * n * (1.0 - rho));
  const double p = rho / (1.0 + std::exp(a * (w_y + w_z)));
  const double q = (1.0 - rho) / (1.0 + std::exp(b * (w_y - w_z)));
  return {p + q, p - q};
}

std::vector<FlowState> integrate_flow(const FlowState& init, double Gamma, int n, double rho, double horizon,
                                      double h) {
  if (!(h > 0.0)) throw DomainError("integrate_flow: step must be positive");
  if (!(horizon > 0.0)) throw DomainError("integrate_flow: horizon must be positive");
  if (n < 1 || !(rho > 0.0 && rho < 1.0) || !(Gamma >= 0.0))
    throw DomainError("integrate_flow: need n >= 1, rho in (0, 1), Gamma >= 0");
  const long steps = static_cast<long>(std::ceil(horizon / h - 1e-9));
  std::vector<FlowState> traj;
  traj.reserve(steps + 1);
  traj.push_back(init);
  FlowState s = init;
  for (long k = 0; k < steps; ++k) {
    const double dt = std::min(h, horizon - s.t);
    const auto k1 = flow_rhs(s.w_y, s.w_z, Gamma, n, rho);
    const auto k2 = flow_rhs(s.w_y + 0.5 * dt * k1.dw_y, s.w_z + 0.5 * dt * k1.dw_z, Gamma, n, rho);
    const auto k3 = flow_rhs(s.w_y + 0.5 * dt * k2.dw_y, s.w_z + 0.5 * dt * k2.dw_z, Gamma, n, rho);
    const auto k4 = flow_rhs(s.w_y + dt * k3.dw_y, s.w_z + dt * k3.dw_z, Gamma, n, rho);
    s.w_y += dt / 6.0 * (k1.dw_y + 2.0 * k2.dw_y + 2.0 * k3.dw_y + k4.dw_y);
    s.w_z += dt / 6.0 * (k1.dw_z + 2.0 * k2.dw_z + 2.0 * k3.dw_z + k4.dw_z);
    s.t = (k + 1 == steps) ? horizon : s.t + dt;
    if (!std::isfinite(s.w_y) || !std::isfinite(s.w_z))
      throw DivergenceError("integrate_flow: non-finite state", k + 1);
    traj.push_back(s);
  }
  return traj;
}

Dataset flow_dataset(int n, double rho, double Gamma, std::uint64_t seed) {
  if (n < 1 || !(rho > 0.0 && rho < 1.0)) throw DomainError("flow_dataset: need n >= 1 and rho in (0, 1)");
  if (!(Gamma >= 0.0)) throw DomainError("flow_dataset: Gamma must be nonnegative");
  const double aligned_f = rho * n;
  if (std::abs(aligned_f - std::round(aligned_f)) > 1e-9) throw DomainError("flow_dataset: rho * n must be an integer");
  const long aligned = std::lround(aligned_f);
  Rng rng(seed);
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, n + 2);
  Eigen::VectorXd y(n), z(n);
  const double g = std::sqrt(Gamma);
  for (int i = 0; i < n; ++i) {
    y(i) = rng.rademacher();
    z(i) = i < aligned ? y(i) : -y(i);
    X(i, 0) = z(i);
    X(i, 1) = y(i);
    X(i, 2 + i) = g;
  }
  return make_dataset(std::move(X), std::move(y), std::move(z), 1.0);
}

}  // namespace marginlab
