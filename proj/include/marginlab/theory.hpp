#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "marginlab/dgp.hpp"
#include "marginlab/model.hpp"

namespace marginlab {

// Standard normal CDF via std::erfc.
double normal_cdf(double x);

enum class LemmaId { InnerProduct, NormConc, SumBounds };

std::string to_string(LemmaId id);
LemmaId lemma_id_from_string(const std::string& s);

struct ConcentrationParams {
  int d = 1000;
  double eps = 1.0;  // slack; also the deviation t for NormConc
  int T_V = 1;
  int T_U = 1;
};

struct SubBound {
  std::string name;
  double empirical = 0.0;
  double std_error = 0.0;
  double stated_raw = 0.0;  // the lemma's bound before clamping
  double stated = 0.0;      // min(stated_raw, 1)
  bool pass = false;        // empirical <= stated + 3 s.e.
};

struct ConcentrationResult {
  LemmaId lemma = LemmaId::InnerProduct;
  ConcentrationParams params;
  int trials = 0;
  std::vector<SubBound> subs;
  bool pass = false;
};

// exp(-eps^2 c / G^4), the common factor of every stated bound
double concentration_tail(double eps);

ConcentrationResult check_concentration(LemmaId lemma, const ConcentrationParams& params, int trials,
                                        std::uint64_t seed);

// 1 - Phi((B w_z - w_y) / ||w_e||)
double leftover_accuracy(const ModelParams& params, double B);

struct Prop1Scenario {
  int n = 1000;
  int d = 400;
  double rho = 0.9;
  double eps_conf = 0.01;
  double gamma_conf = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Prop1Result {
  double formula = 0.0;
  double direct = 0.0;
  double rel_error = 0.0;
};

double prop1_formula(double d, double n, double rho, double eps_conf, double gamma_conf);
Prop1Result prop1_check(const Prop1Scenario& s);

struct GsViolation {
  double fraction = 0.0;  // same-(y,z) pairs with x_i^T x_j > B^2 + 1
  double max_abs_inner = 0.0;
  long pairs = 0;
};

GsViolation gs_violation(const Dataset& ds);

struct FlowState {
  double t = 0.0;
  double w_y = 0.0;
  double w_z = 0.0;
};

struct FlowDeriv {
  double dw_y;
  double dw_z;
};

FlowDeriv flow_rhs(double w_y, double w_z, double Gamma, int n, double rho);

// Classical RK4; the trajectory includes the initial state and every step.
std::vector<FlowState> integrate_flow(const FlowState& init, double Gamma, int n, double rho, double horizon,
                                      double h);

// x_i = [z_i, y_i, sqrt(Gamma) e_i] with exactly rho*n aligned samples; B = 1, d = n + 2.
Dataset flow_dataset(int n, double rho, double Gamma, std::uint64_t seed);

}  // namespace marginlab
