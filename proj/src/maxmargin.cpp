#include "marginlab/maxmargin.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "marginlab/errors.hpp"
#include "marginlab/rng.hpp"

namespace marginlab {

std::string to_string(Side side) {
  switch (side) {
    case Side::None: return "none";
    case Side::StableSide: return "stable";
    case Side::ShortcutSide: return "shortcut";
  }
  return "?";
}

MarginQp MarginQp::from_dataset(const Dataset& ds, Side side) {
  MarginQp qp;
  qp.A = ds.X.array().colwise() * ds.y.array();
  qp.side = side;
  qp.zeta = Eigen::VectorXd::Zero(ds.d());
  qp.zeta(0) = -ds.B;
  qp.zeta(1) = 1.0;
  return qp;
}

double MarginQp::zeta_sign() const {
  switch (side) {
    case Side::StableSide: return 1.0;
    case Side::ShortcutSide: return -1.0;
    default: return 0.0;
  }
}

namespace {

void check_qp(const MarginQp& qp) {
  if (qp.A.rows() < 1 || qp.A.cols() < 1) throw ShapeError("qp: empty constraint matrix");
  if (qp.side != Side::None && qp.zeta.size() != qp.A.cols()) throw ShapeError("qp: zeta has the wrong length");
}

// Operator G = [A; s zeta^T] and its transpose, without forming G.
struct Ops {
  const MarginQp& qp;
  double s;
  bool has_nu;

  // G^T x with x = [lambda; nu]
  Eigen::VectorXd Gt(const Eigen::VectorXd& lambda, double nu) const {
    Eigen::VectorXd g = qp.A.transpose() * lambda;
    if (has_nu) g += (s * nu) * qp.zeta;
    return g;
  }
};

double dual_value(const Eigen::VectorXd& lambda, const Eigen::VectorXd& w) {
  // with w = G^T x / 2: 1^T lambda - ||w||^2
  return lambda.sum() - w.squaredNorm();
}

QpSolution package(const MarginQp& qp, Eigen::VectorXd w, Eigen::VectorXd lambda, double nu) {
  QpSolution sol;
  sol.kkt = kkt_residuals(qp, w, lambda, nu);
  sol.primal_value = w.squaredNorm();
  sol.dual_value = dual_value(lambda, w);
  sol.w = std::move(w);
  sol.lambda = std::move(lambda);
  sol.nu = nu;
  return sol;
}

bool certified(const QpSolution& sol, double tol) {
  const double scale = 1.0 + sol.primal_value;
  return sol.kkt.gap <= tol * scale && sol.kkt.max_violation <= tol && sol.kkt.max_comp_slack <= tol &&
         sol.kkt.stationarity <= tol * scale;
}

// Solves the equality-constrained problem on the support of x exactly.
std::optional<QpSolution> polish(const MarginQp& qp, const Ops& ops, const Eigen::VectorXd& lambda, double nu,
                                 double threshold) {
  std::vector<int> act;
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (lambda(i) > threshold) act.push_back(static_cast<int>(i));
  const bool use_nu = ops.has_nu && nu > threshold;
  const Eigen::Index m = static_cast<Eigen::Index>(act.size()) + (use_nu ? 1 : 0);
  if (m == 0 || m > qp.A.cols()) return std::nullopt;

  Eigen::MatrixXd Gs(m, qp.A.cols());
  for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(act.size()); ++r) Gs.row(r) = qp.A.row(act[r]);
  if (use_nu) Gs.row(m - 1) = ops.s * qp.zeta.transpose();
  Eigen::VectorXd c = Eigen::VectorXd::Ones(m);
  if (use_nu) c(m - 1) = 0.0;

  const Eigen::MatrixXd K = Gs * Gs.transpose();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(K);
  if (ldlt.info() != Eigen::Success) return std::nullopt;
  const Eigen::VectorXd xs = 2.0 * ldlt.solve(c);
  if (!xs.allFinite() || xs.minCoeff() < 0.0) return std::nullopt;

  Eigen::VectorXd lam = Eigen::VectorXd::Zero(lambda.size());
  for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(act.size()); ++r) lam(act[r]) = xs(r);
  const double nu_new = use_nu ? xs(m - 1) : 0.0;
  Eigen::VectorXd w = 0.5 * ops.Gt(lam, nu_new);
  return package(qp, std::move(w), std::move(lam), nu_new);
}

}  // namespace

Kkt kkt_residuals(const MarginQp& qp, const Eigen::VectorXd& w, const Eigen::VectorXd& lambda, double nu) {
  check_qp(qp);
  if (w.size() != qp.A.cols() || lambda.size() != qp.A.rows()) throw ShapeError("kkt: dimension mismatch");
  const double s = qp.zeta_sign();
  const bool has_nu = qp.side != Side::None;
  const Eigen::VectorXd slack = qp.A * w - Eigen::VectorXd::Ones(qp.A.rows());
  Kkt k;
  k.max_violation = std::max(0.0, -slack.minCoeff());
  k.max_comp_slack = (lambda.array() * slack.array()).abs().maxCoeff();
  double side_val = 0.0;
  if (has_nu) {
    side_val = s * qp.zeta.dot(w);
    k.max_violation = std::max(k.max_violation, -side_val);
    k.max_comp_slack = std::max(k.max_comp_slack, std::abs(nu * side_val));
  }
  Eigen::VectorXd g = qp.A.transpose() * lambda;
  if (has_nu) g += (s * nu) * qp.zeta;
  k.stationarity = (w - 0.5 * g).norm();
  k.gap = w.squaredNorm() - dual_objective(lambda, has_nu ? nu : 0.0, qp);
  return k;
}

double dual_objective(const Eigen::VectorXd& lambda, double nu, const MarginQp& qp) {
  check_qp(qp);
  if (lambda.size() != qp.A.rows()) throw ShapeError("dual_objective: lambda has the wrong length");
  if (lambda.size() > 0 && lambda.minCoeff() < 0.0) throw DomainError("dual_objective: lambda must be nonnegative");
  if (nu < 0.0) throw DomainError("dual_objective: nu must be nonnegative");
  Eigen::VectorXd g = qp.A.transpose() * lambda;
  if (qp.side != Side::None) g += (qp.zeta_sign() * nu) * qp.zeta;
  return lambda.sum() - 0.25 * g.squaredNorm();
}

QpSolution solve(const MarginQp& qp, const SolverOptions& opts) {
  check_qp(qp);
  if (!(opts.tol > 0.0)) throw ConfigError("maxmargin.tol must be positive");
  if (opts.max_iter < 1) throw ConfigError("maxmargin.max_iter must be positive");
  const Ops ops{qp, qp.zeta_sign(), qp.side != Side::None};
  const Eigen::Index n = qp.A.rows();

  // power iteration for lambda_max(G G^T) = lambda_max(G^T G)
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(qp.A.cols(), 1.0, 2.0);
  double lmax = 0.0;
  for (int it = 0; it < opts.power_iters; ++it) {
    Eigen::VectorXd Gv = qp.A * v;
    double zv = ops.has_nu ? ops.s * qp.zeta.dot(v) : 0.0;
    Eigen::VectorXd next = ops.Gt(Gv, zv);
    lmax = next.norm() / v.norm();
    v = next / next.norm();
  }
  // gradient of the dual is c - G G^T x / 2, Lipschitz with constant lmax / 2
  double L = std::max(0.5 * lmax * 1.05, 1e-300);

  Eigen::VectorXd lam = Eigen::VectorXd::Zero(n), lam_prev = lam, ylam = lam;
  double nu = 0.0, nu_prev = 0.0, ynu = 0.0;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(qp.A.cols());
  double f_cur = 0.0;
  double t = 1.0;

  for (std::int64_t it = 1; it <= opts.max_iter; ++it) {
    const Eigen::VectorXd wy = 0.5 * ops.Gt(ylam, ynu);
    const Eigen::VectorXd grad_l = Eigen::VectorXd::Ones(n) - qp.A * wy;
    const double grad_n = ops.has_nu ? -ops.s * qp.zeta.dot(wy) : 0.0;
    const double fy = dual_value(ylam, wy);

    Eigen::VectorXd lam_new;
    double nu_new;
    Eigen::VectorXd w_new;
    double f_new;
    while (true) {
      lam_new = (ylam + grad_l / L).cwiseMax(0.0);
      nu_new = ops.has_nu ? std::max(0.0, ynu + grad_n / L) : 0.0;
      w_new = 0.5 * ops.Gt(lam_new, nu_new);
      f_new = dual_value(lam_new, w_new);
      const Eigen::VectorXd dl = lam_new - ylam;
      const double dn = nu_new - ynu;
      const double lin = grad_l.dot(dl) + grad_n * dn;
      const double quad = dl.squaredNorm() + dn * dn;
      if (f_new >= fy + lin - 0.5 * L * quad - 1e-12 * (1.0 + std::abs(fy))) break;
      L *= 2.0;
    }

    if (f_new < f_cur && t > 1.0) {
      // function restart: drop momentum
      t = 1.0;
      ylam = lam;
      ynu = nu;
      continue;
    }
    lam_prev = lam;
    nu_prev = nu;
    lam = std::move(lam_new);
    nu = nu_new;
    w = std::move(w_new);
    f_cur = f_new;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_next;
    ylam = lam + beta * (lam - lam_prev);
    ynu = nu + beta * (nu - nu_prev);
    if (ops.has_nu) ynu = std::max(0.0, ynu);
    ylam = ylam.cwiseMax(0.0);
    t = t_next;

    if (it % opts.polish_every == 0 || it == opts.max_iter) {
      QpSolution cur = package(qp, w, lam, nu);
      cur.iterations = it;
      if (certified(cur, opts.tol)) return cur;
      const double top = std::max(lam.maxCoeff(), nu);
      for (double rel : {0.0, 1e-12, 1e-9, 1e-6}) {
        auto pol = polish(qp, ops, lam, nu, rel * top);
        if (pol && certified(*pol, opts.tol)) {
          pol->iterations = it;
          pol->polished = true;
          return *pol;
        }
      }
      if (it == opts.max_iter) {
        throw ConvergenceError("maxmargin solver hit the iteration cap (" + std::to_string(opts.max_iter) +
                               "): gap " + std::to_string(cur.kkt.gap) + ", violation " +
                               std::to_string(cur.kkt.max_violation) + ", complementarity " +
                               std::to_string(cur.kkt.max_comp_slack));
      }
    }
  }
  throw ConvergenceError("maxmargin solver did not converge");
}

Lemma7Candidate lemma7_candidate(const Dataset& ds, int M, std::uint64_t seed) {
  const int k = ds.k();
  if (k < 1) throw DomainError("lemma7: leftover group is empty (k = 0)");
  const int Mmax = ds.n() / (2 * k);
  if (M < 1 || M > Mmax)
    throw DomainError("lemma7: M = " + std::to_string(M) + " outside [1, " + std::to_string(Mmax) + "]");

  Lemma7Candidate c;
  c.U = ds.leftover_idx;
  // partial Fisher-Yates over the shortcut indices
  std::vector<int> pool = ds.shortcut_idx;
  Rng rng(seed);
  const int extra = (2 * M - 1) * k;
  for (int i = 0; i < extra; ++i) {
    const auto j = i + static_cast<int>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
    c.U.push_back(pool[i]);
  }
  std::sort(c.U.begin(), c.U.end());
  const double U = static_cast<double>(c.U.size());

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(ds.d() - 2);
  for (int i : c.U) sum += ds.y(i) * ds.X.row(i).tail(ds.d() - 2).transpose();
  const double mid = 1.0 + 2.0 * (M - 1) / (2.0 * M);
  c.Gamma = mid * mid + (sum / U).squaredNorm();
  c.alpha = 2.0 / c.Gamma;
  c.lambda = Eigen::VectorXd::Zero(ds.n());
  for (int i : c.U) c.lambda(i) = c.alpha / U;
  c.nu = c.alpha * 2.0 * (M - 1) / (2.0 * M);
  c.bound = 1.0 / c.Gamma;
  c.sign_feasible = c.lambda.minCoeff() >= 0.0 && c.nu >= 0.0;
  return c;
}

void check_lemma8_preconditions(double d, double k, double eps) {
  if (!(k >= 1.0)) throw DomainError("lemma8: requires k >= 1");
  if (!(eps >= 0.0)) throw DomainError("lemma8: requires eps >= 0");
  if (!(eps < std::sqrt(d / k) / 3.0)) throw DomainError("lemma8: requires eps < sqrt(d/k)/3");
  if (!(d > 4.0 * eps * std::sqrt(k * d))) throw DomainError("lemma8: requires d > 4 eps sqrt(k d)");
}

double stable_bound_formula(double d, double k, double M, double eps) {
  if (!(d > 0.0)) throw DomainError("W_stable: requires d > 0");
  if (!(k >= 1.0)) throw DomainError("W_stable: requires k >= 1");
  if (!(M >= 1.0)) throw DomainError("W_stable: requires M >= 1");
  if (!(eps >= 0.0 && eps < std::sqrt(d))) throw DomainError("W_stable: requires 0 <= eps < sqrt(d)");
  const double r = std::sqrt(d) + eps;
  return 1.0 / (4.0 + r * r / (2.0 * M * k));
}

ShortcutBound shortcut_bound_formula(double d, double k, double B, double eps) {
  if (!(B > 0.0)) throw DomainError("W_shortcut: requires B > 0");
  check_lemma8_preconditions(d, k, eps);
  ShortcutBound b;
  b.gamma = 2.0 / (d - 4.0 * eps * std::sqrt(k * d));
  b.beta = 1.0 + b.gamma * eps * std::sqrt(d * k);
  const double r = std::sqrt(d) + eps;
  b.W_shortcut = b.gamma * b.gamma * k * r * r + b.beta * b.beta / (B * B);
  return b;
}

Lemma8Candidate lemma8_candidate(const Dataset& ds, double eps) {
  const double d = ds.d(), k = ds.k();
  check_lemma8_preconditions(d, k, eps);
  const auto f = shortcut_bound_formula(d, k, ds.B, eps);
  Lemma8Candidate c;
  c.gamma = f.gamma;
  c.beta = f.beta;
  c.w = Eigen::VectorXd::Zero(ds.d());
  c.w(0) = f.beta / ds.B;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(ds.d() - 2);
  for (int j : ds.leftover_idx) sum += ds.y(j) * ds.X.row(j).tail(ds.d() - 2).transpose();
  c.w.tail(ds.d() - 2) = f.gamma * sum;
  c.norm2 = c.w.squaredNorm();
  const Eigen::VectorXd margins = (ds.X * c.w).cwiseProduct(ds.y);
  c.min_margin = margins.minCoeff();
  // w_y = 0 <= B w_z = beta holds by construction
  c.feasible = c.min_margin >= 1.0 - 1e-9;
  return c;
}

Eigen::VectorXd solve_uniform_margin(const Dataset& ds, double b) {
  if (!(b > 0.0)) throw DomainError("uniform margin: b must be positive");
  if (ds.d() >= ds.n()) throw DegenerateDataError("uniform margin: requires d < n");
  const Eigen::MatrixXd A = ds.X.array().colwise() * ds.y.array();
  const Eigen::MatrixXd AtA = A.transpose() * A;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(AtA, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 1e-8 * hi)) throw DegenerateDataError("uniform margin: X is not of full column rank");
  const Eigen::VectorXd rhs = b * (A.transpose() * Eigen::VectorXd::Ones(ds.n()));
  return AtA.llt().solve(rhs);
}

TheoremConstants theorem1_constants() {
  TheoremConstants t;
  t.G = std::sqrt(8.0 / 3.0);
  t.c = 1.0 / std::pow(2.0 * std::exp(1.0), 2);
  const double s10 = std::sqrt(10.0);
  t.C = (-3.0 + s10) / (3.0 + 2.0 * s10 + std::sqrt(5.0 * (8.0 + 3.0 * s10)));
  t.C1 = 2.0 * std::pow(t.G, 4) / (t.c * t.C * t.C);
  t.C2 = (1.0 - 2.0 * t.C) / (std::sqrt(2.0) * (1.0 + t.C));
  t.M = 5;
  return t;
}

BoundReport theorem1_report(const Dataset& ds, int M, double eps, const SolverOptions& opts,
                            std::uint64_t subset_seed) {
  BoundReport r;
  r.eps = eps;
  r.M = M;
  r.k = ds.k();
  r.n = ds.n();
  r.d = ds.d();
  r.B = ds.B;
  r.subset_seed = subset_seed;
  r.constants = theorem1_constants();
  r.regime_threshold = r.constants.C1 * r.k * std::log(3.0 * r.n);
  r.regime_reached = r.d >= r.regime_threshold;
  if (!r.regime_reached) r.notes.push_back("d < C1 k log(3n): the asymptotic regime of the theorem is not reached");
  r.notes.push_back("gamma uses 2/(d - 4 eps sqrt(kd)); the lemma statement writes 3 eps");

  const auto l7 = lemma7_candidate(ds, M, subset_seed);
  r.lemma7_bound = l7.bound;
  r.lemma7_Gamma = l7.Gamma;
  r.lemma7_feasible = l7.sign_feasible;
  r.W_stable = stable_bound_formula(r.d, r.k, M, eps);
  r.formula_stable_below_data = *r.W_stable <= l7.bound;

  const auto stable = solve(MarginQp::from_dataset(ds, Side::StableSide), opts);
  r.solved_stable_norm2 = stable.primal_value;
  r.stable_brackets = stable.primal_value >= l7.bound;

  const auto none = solve(MarginQp::from_dataset(ds, Side::None), opts);
  r.unconstrained_norm2 = none.primal_value;
  r.unconstrained_w_y = none.w(1);
  r.unconstrained_B_wz = ds.B * none.w(0);
  r.unconstrained_we_norm = none.w.tail(ds.d() - 2).norm();
  r.shortcut_reliant = r.unconstrained_B_wz > r.unconstrained_w_y;

  const auto shortcut = solve(MarginQp::from_dataset(ds, Side::ShortcutSide), opts);
  r.solved_shortcut_norm2 = shortcut.primal_value;
  r.shortcut_side_gap = ds.B * shortcut.w(0) - shortcut.w(1);

  try {
    const auto sb = shortcut_bound_formula(r.d, r.k, ds.B, eps);
    r.W_shortcut = sb.W_shortcut;
    r.gamma = sb.gamma;
    r.beta = sb.beta;
    r.separation_holds = sb.W_shortcut < *r.W_stable;
    const auto l8 = lemma8_candidate(ds, eps);
    r.lemma8_norm2 = l8.norm2;
    r.lemma8_feasible = l8.feasible;
    if (l8.feasible) r.shortcut_brackets = shortcut.primal_value <= l8.norm2;
  } catch (const DomainError& e) {
    r.lemma8_precondition_failure = e.what();
  }
  return r;
}

}  // namespace marginlab
