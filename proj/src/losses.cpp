#include "marginlab/losses.hpp"

#include <algorithm>
#include <cmath>

#include "marginlab/errors.hpp"

namespace marginlab {

namespace {

constexpr double kCalib = 1.278;

void check_inputs(double f, int y) {
  if (!std::isfinite(f)) throw DomainError("loss: model output is not finite");
  if (y != 1 && y != -1) throw DomainError("loss: label must be +1 or -1");
}

struct Transformed {
  double a;      // argument passed to the log-loss
  double da_dm;  // derivative w.r.t. the margin m = y f
};

Transformed damp(const LossSpec& s, double m, int y) {
  const double T = s.T(y);
  if (s.damp_form == DampForm::Temperature) {
    const double sg = sigmoid(m / T);
    return {m * (1.0 - sg), (1.0 - sg) - (m / T) * sg * (1.0 - sg)};
  }
  const double cm = kCalib * m;
  const double sg = sigmoid(cm);
  return {T * cm * (1.0 - sg), T * kCalib * ((1.0 - sg) - cm * sg * (1.0 - sg))};
}

Transformed stitch(const LossSpec& s, double m, int y) {
  // per-class mode fixes the threshold at 1 and scales by T_y
  const double u = s.per_class() ? 1.0 : s.u;
  const double T = s.T(y);
  if (m <= u) return {T * m, T};
  return {T * (2.0 * u - m), -T};
}

}  // namespace

void LossSpec::validate() const {
  if (!(T_pos > 0.0) || !(T_neg > 0.0) || !std::isfinite(T_pos) || !std::isfinite(T_neg))
    throw ConfigError("loss: temperatures T_pos, T_neg must be positive");
  if (!(u > 0.0) || !std::isfinite(u)) throw ConfigError("loss.u must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("loss.lambda must be nonnegative");
  if (!std::isfinite(gamma_pos) || !std::isfinite(gamma_neg))
    throw ConfigError("loss: gamma_pos, gamma_neg must be finite");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Log: return "log";
    case LossKind::SigmaDamp: return "sigma_damp";
    case LossKind::SigmaStitch: return "sigma_stitch";
    case LossKind::MargLog: return "marg_log";
    case LossKind::SpectralDecoupling: return "sd";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "log") return LossKind::Log;
  if (s == "sigma_damp") return LossKind::SigmaDamp;
  if (s == "sigma_stitch") return LossKind::SigmaStitch;
  if (s == "marg_log") return LossKind::MargLog;
  if (s == "sd") return LossKind::SpectralDecoupling;
  throw ConfigError("loss.kind: unknown value '" + s + "'");
}

std::string to_string(DampForm form) {
  return form == DampForm::Temperature ? "temperature" : "calibrated";
}

DampForm damp_form_from_string(const std::string& s) {
  if (s == "temperature") return DampForm::Temperature;
  if (s == "calibrated") return DampForm::Calibrated;
  throw ConfigError("loss.damp_form: unknown value '" + s + "'");
}

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

double log_loss(double a) { return std::log1p(std::exp(-std::abs(a))) + std::max(-a, 0.0); }

double log_loss_deriv(double a) { return -sigmoid(-a); }

double eval_loss(const LossSpec& spec, double f, int y) {
  check_inputs(f, y);
  const double m = y * f;
  switch (spec.kind) {
    case LossKind::Log:
      return log_loss(m);
    case LossKind::SigmaDamp:
      return log_loss(damp(spec, m, y).a);
    case LossKind::SigmaStitch:
      return log_loss(stitch(spec, m, y).a);
    case LossKind::MargLog: {
      const double r = f - spec.gamma(y);
      return log_loss(m) + spec.lambda * std::log1p(r * r);
    }
    case LossKind::SpectralDecoupling:
      return log_loss(m) + spec.lambda * f * f;
  }
  return 0.0;
}

double grad_output(const LossSpec& spec, double f, int y) {
  check_inputs(f, y);
  const double m = y * f;
  switch (spec.kind) {
    case LossKind::Log:
      return y * log_loss_deriv(m);
    case LossKind::SigmaDamp: {
      const auto t = damp(spec, m, y);
      return y * log_loss_deriv(t.a) * t.da_dm;
    }
    case LossKind::SigmaStitch: {
      const auto t = stitch(spec, m, y);
      return y * log_loss_deriv(t.a) * t.da_dm;
    }
    case LossKind::MargLog: {
      const double r = f - spec.gamma(y);
      return y * log_loss_deriv(m) + spec.lambda * 2.0 * r / (1.0 + r * r);
    }
    case LossKind::SpectralDecoupling:
      return y * log_loss_deriv(m) + 2.0 * spec.lambda * f;
  }
  return 0.0;
}

DampPeak damp_peak(double T) {
  if (!(T > 0.0)) throw DomainError("damp_peak: T must be positive");
  // u sigmoid(u) - 1 is increasing on (1, 2) and changes sign there
  double lo = 1.0, hi = 2.0;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    (mid * sigmoid(mid) < 1.0 ? lo : hi) = mid;
  }
  const double us = 0.5 * (lo + hi);
  DampPeak p;
  p.u_star = us;
  p.m_star = T * us;
  p.peak = p.m_star * (1.0 - sigmoid(us));
  return p;
}

}  // namespace marginlab
