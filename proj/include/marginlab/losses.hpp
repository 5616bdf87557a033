#pragma once

#include <string>

namespace marginlab {

enum class LossKind { Log, SigmaDamp, SigmaStitch, MargLog, SpectralDecoupling };

// Temperature: l(m (1 - sigmoid(m / T_y))).
// Calibrated:  l(T_y * 1.278 * m * (1 - sigmoid(1.278 m))), peak input at m = 1.
enum class DampForm { Temperature, Calibrated };

struct LossSpec {
  LossKind kind = LossKind::Log;
  double T_pos = 1.0;
  double T_neg = 1.0;
  double u = 1.0;
  double lambda = 0.1;
  double gamma_pos = 0.0;
  double gamma_neg = 0.0;
  DampForm damp_form = DampForm::Temperature;

  bool per_class() const { return T_pos != T_neg || gamma_pos != gamma_neg; }
  double T(int y) const { return y > 0 ? T_pos : T_neg; }
  double gamma(int y) const { return y > 0 ? gamma_pos : gamma_neg; }
  void validate() const;
};

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& s);
std::string to_string(DampForm form);
DampForm damp_form_from_string(const std::string& s);

double sigmoid(double a);

// log(1 + exp(-a)), stable for large |a|
double log_loss(double a);
// d/da log(1 + exp(-a)) = -sigmoid(-a)
double log_loss_deriv(double a);

// y must be +-1; f must be finite.
double eval_loss(const LossSpec& spec, double f, int y);
double grad_output(const LossSpec& spec, double f, int y);

struct DampPeak {
  double u_star;  // root of u * sigmoid(u) = 1
  double m_star;  // T * u_star
  double peak;    // m_star * (1 - sigmoid(u_star))
};

DampPeak damp_peak(double T);

}  // namespace marginlab
