#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "marginlab/dgp.hpp"

namespace marginlab {

// None:         min ||w||^2  s.t. A w >= 1
// StableSide:   ... and zeta^T w >= 0   (w_y >= B w_z)
// ShortcutSide: ... and zeta^T w <= 0   (w_y <= B w_z)
enum class Side { None, StableSide, ShortcutSide };

std::string to_string(Side side);

struct MarginQp {
  Eigen::MatrixXd A;      // rows y_i x_i
  Side side = Side::None;
  Eigen::VectorXd zeta;   // [-B, 1, 0, ...]

  static MarginQp from_dataset(const Dataset& ds, Side side);
  // +1 for StableSide, -1 for ShortcutSide, 0 for None
  double zeta_sign() const;
};

struct Kkt {
  double max_violation = 0.0;
  double max_comp_slack = 0.0;
  double stationarity = 0.0;
  double gap = 0.0;
};

struct QpSolution {
  Eigen::VectorXd w;
  Eigen::VectorXd lambda;
  double nu = 0.0;
  double primal_value = 0.0;
  double dual_value = 0.0;
  Kkt kkt;
  std::int64_t iterations = 0;
  bool polished = false;  // final point came from the active-set solve
};

struct SolverOptions {
  double tol = 1e-8;
  std::int64_t max_iter = 1'000'000;
  int power_iters = 100;
  int polish_every = 100;
};

// Projected accelerated ascent on the dual, with periodic active-set polishing.
// Throws ConvergenceError if the certificate is not reached within max_iter.
QpSolution solve(const MarginQp& qp, const SolverOptions& opts = {});

// 1^T lambda - 1/4 || s zeta nu + A^T lambda ||^2
double dual_objective(const Eigen::VectorXd& lambda, double nu, const MarginQp& qp);

// Certificate of an arbitrary primal/dual pair.
Kkt kkt_residuals(const MarginQp& qp, const Eigen::VectorXd& w, const Eigen::VectorXd& lambda, double nu);

struct Lemma7Candidate {
  Eigen::VectorXd lambda;
  double nu = 0.0;
  double alpha = 0.0;
  double Gamma = 0.0;
  double bound = 0.0;  // 1 / Gamma
  std::vector<int> U;
  bool sign_feasible = false;
};

// U = leftover plus (2M-1)k shortcut samples drawn with the given seed.
Lemma7Candidate lemma7_candidate(const Dataset& ds, int M, std::uint64_t seed);

struct Lemma8Candidate {
  Eigen::VectorXd w;
  double gamma = 0.0;
  double beta = 0.0;
  double norm2 = 0.0;
  double min_margin = 0.0;
  bool feasible = false;
};

Lemma8Candidate lemma8_candidate(const Dataset& ds, double eps);

double stable_bound_formula(double d, double k, double M, double eps);

struct ShortcutBound {
  double W_shortcut;
  double gamma;
  double beta;
};

ShortcutBound shortcut_bound_formula(double d, double k, double B, double eps);

// Throws DomainError naming the first violated Lemma-8 precondition, if any.
void check_lemma8_preconditions(double d, double k, double eps);

// Solves y_i w^T x_i = b for all i through the normal equations.
Eigen::VectorXd solve_uniform_margin(const Dataset& ds, double b);

struct TheoremConstants {
  double G;
  double c;
  double C;
  double C1;
  double C2;
  int M;
};

TheoremConstants theorem1_constants();

struct BoundReport {
  double eps = 0.0;
  int M = 0;
  int k = 0;
  int n = 0;
  int d = 0;
  double B = 0.0;
  std::uint64_t subset_seed = 0;

  std::optional<double> W_stable;
  std::optional<double> W_shortcut;
  std::optional<double> gamma;
  std::optional<double> beta;
  std::optional<std::string> lemma8_precondition_failure;

  double lemma7_bound = 0.0;
  double lemma7_Gamma = 0.0;
  bool lemma7_feasible = false;
  std::optional<double> lemma8_norm2;
  bool lemma8_feasible = false;

  double solved_stable_norm2 = 0.0;
  std::optional<double> solved_shortcut_norm2;
  std::optional<double> shortcut_side_gap;  // B w_z - w_y at the ShortcutSide optimum
  bool stable_brackets = false;             // solved stable >= lemma-7 bound
  std::optional<bool> shortcut_brackets;    // solved shortcut <= lemma-8 norm, when feasible
  std::optional<bool> formula_stable_below_data;  // W_stable <= 1/Gamma
  std::optional<bool> separation_holds;            // W_shortcut < W_stable

  double unconstrained_norm2 = 0.0;
  double unconstrained_w_y = 0.0;
  double unconstrained_B_wz = 0.0;
  double unconstrained_we_norm = 0.0;
  bool shortcut_reliant = false;  // B w_z > w_y

  TheoremConstants constants{};
  double regime_threshold = 0.0;  // C1 k log(3n)
  bool regime_reached = false;
  std::vector<std::string> notes;
};

BoundReport theorem1_report(const Dataset& ds, int M, double eps, const SolverOptions& opts,
                            std::uint64_t subset_seed);

}  // namespace marginlab
