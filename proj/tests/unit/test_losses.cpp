#include <random>

#include "doctest.h"
#include "marginlab/errors.hpp"
#include "marginlab/losses.hpp"
#include "oracles.hpp"

using namespace marginlab;

namespace {

LossSpec make(LossKind k) {
  LossSpec s;
  s.kind = k;
  return s;
}

// Reference losses written directly from the definitions with the naive log-loss.
double ref_loss(const LossSpec& s, double f, int y) {
  const double m = y * f;
  switch (s.kind) {
    case LossKind::Log:
      return oracle::naive_log_loss(m);
    case LossKind::SigmaDamp:
      if (s.damp_form == DampForm::Temperature) return oracle::naive_log_loss(m * (1 - oracle::sigma(m / s.T(y))));
      return oracle::naive_log_loss(s.T(y) * 1.278 * m * (1 - oracle::sigma(1.278 * m)));
    case LossKind::SigmaStitch: {
      const double u = s.per_class() ? 1.0 : s.u;
      const double st = m <= u ? m : 2 * u - m;
      return oracle::naive_log_loss(s.T(y) * st);
    }
    case LossKind::MargLog:
      return oracle::naive_log_loss(m) + s.lambda * std::log(1 + (f - s.gamma(y)) * (f - s.gamma(y)));
    case LossKind::SpectralDecoupling:
      return oracle::naive_log_loss(m) + s.lambda * f * f;
  }
  return 0;
}

std::vector<LossSpec> all_specs() {
  std::vector<LossSpec> v;
  for (auto k : {LossKind::Log, LossKind::SigmaDamp, LossKind::SigmaStitch, LossKind::MargLog,
                 LossKind::SpectralDecoupling})
    v.push_back(make(k));
  LossSpec cal = make(LossKind::SigmaDamp);
  cal.damp_form = DampForm::Calibrated;
  v.push_back(cal);
  LossSpec t2 = make(LossKind::SigmaDamp);
  t2.T_pos = t2.T_neg = 2.5;
  v.push_back(t2);
  LossSpec pc = make(LossKind::SigmaDamp);
  pc.damp_form = DampForm::Calibrated;
  pc.T_pos = 0.7;
  pc.T_neg = 1.9;
  v.push_back(pc);
  LossSpec st = make(LossKind::SigmaStitch);
  st.u = 2.5;
  v.push_back(st);
  LossSpec stpc = make(LossKind::SigmaStitch);
  stpc.T_pos = 0.5;
  stpc.T_neg = 2.0;
  v.push_back(stpc);
  LossSpec mlpc = make(LossKind::MargLog);
  mlpc.gamma_pos = 1.5;
  mlpc.gamma_neg = -0.5;
  mlpc.lambda = 0.3;
  v.push_back(mlpc);
  return v;
}

}  // namespace

TEST_CASE("named values") {
  CHECK(eval_loss(make(LossKind::Log), 0.0, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(eval_loss(make(LossKind::Log), 0.0, -1) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(eval_loss(make(LossKind::SigmaStitch), 2.0, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  LossSpec ml = make(LossKind::MargLog);
  ml.gamma_pos = 0.8;
  CHECK(eval_loss(ml, 0.8, 1) == doctest::Approx(oracle::naive_log_loss(0.8)).epsilon(1e-14));
  CHECK(grad_output(make(LossKind::Log), 0.0, 1) == doctest::Approx(-0.5).epsilon(1e-15));
}

TEST_CASE("matches reference formulas") {
  std::mt19937_64 g(7);
  std::uniform_real_distribution<double> U(-8, 8);
  for (const auto& s : all_specs()) {
    for (int i = 0; i < 200; ++i) {
      const double f = U(g);
      const int y = (g() & 1) ? 1 : -1;
      CHECK(eval_loss(s, f, y) == doctest::Approx(ref_loss(s, f, y)).epsilon(1e-12));
    }
  }
}

TEST_CASE("stable log-loss avoids overflow") {
  CHECK(log_loss(-800.0) == doctest::Approx(800.0).epsilon(1e-15));
  CHECK(log_loss(800.0) >= 0.0);
  CHECK(log_loss(800.0) < 1e-300);
  CHECK(std::isfinite(log_loss_deriv(-800.0)));
  CHECK(log_loss_deriv(-800.0) == doctest::Approx(-1.0));
  for (double a : {-30.0, -1.0, 0.0, 2.0, 30.0}) CHECK(log_loss(a) == doctest::Approx(oracle::naive_log_loss(a)).epsilon(1e-13));
}

TEST_CASE("grad_output against central differences") {
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> U(-6, 6);
  for (const auto& s : all_specs()) {
    int checked = 0;
    while (checked < 100) {
      const double f = U(g);
      const int y = (g() & 1) ? 1 : -1;
      // skip the stitch kink where the derivative is one-sided
      const double u = s.per_class() ? 1.0 : s.u;
      if (s.kind == LossKind::SigmaStitch && std::abs(y * f - u) < 1e-4) continue;
      const double fd = oracle::central_diff([&](double x) { return eval_loss(s, x, y); }, f, 1e-6);
      const double gr = grad_output(s, f, y);
      const double rel = std::abs(gr - fd) / std::max({std::abs(gr), std::abs(fd), 1e-4});
      CHECK(rel <= 1e-5);
      ++checked;
    }
  }
}

TEST_CASE("SD stationary point") {
  LossSpec s = make(LossKind::SpectralDecoupling);
  s.lambda = 0.1;
  const double fstar = oracle::bisect([](double f) { return oracle::sigma(-f) - 0.2 * f; }, 0.0, 5.0);
  CHECK(fstar > 0.0);
  CHECK(fstar < 5.0);
  CHECK(std::abs(grad_output(s, fstar, 1)) <= 1e-12);
  CHECK(grad_output(s, fstar - 0.1, 1) < 0.0);
  CHECK(grad_output(s, fstar + 0.1, 1) > 0.0);
}

TEST_CASE("damp peak") {
  const double ustar = oracle::bisect([](double u) { return u * oracle::sigma(u) - 1.0; }, 1.0, 2.0);
  const auto p1 = damp_peak(1.0);
  CHECK(p1.u_star == doctest::Approx(ustar).epsilon(1e-10));
  CHECK(std::abs(p1.u_star - 1.2785) < 5e-5);
  CHECK(std::round(p1.peak * 1000) / 1000 == 0.278);
  for (double T : {0.3, 1.0, 4.0}) {
    const auto a = damp_peak(T), b = damp_peak(2 * T);
    CHECK(b.peak == doctest::Approx(2 * a.peak).epsilon(1e-12));
    CHECK(a.m_star == doctest::Approx(T * ustar).epsilon(1e-10));
    // grid search on the damped margin never beats the peak
    double best = 0;
    for (int i = 1; i < 20000; ++i) {
      const double m = i * (10.0 * T / 20000);
      best = std::max(best, m * (1 - oracle::sigma(m / T)));
    }
    CHECK(best <= a.peak + 1e-12);
    CHECK(best >= a.peak - 1e-6 * T);
  }
}

TEST_CASE("monotone up to the threshold and non-decreasing beyond") {
  auto check = [](const LossSpec& s, double thr) {
    for (int i = 0; i < 400; ++i) {
      const double a = -6 + i * 0.03, b = a + 0.03;
      const double la = eval_loss(s, a, 1), lb = eval_loss(s, b, 1);
      if (b <= thr - 1e-9) CHECK(lb < la);
      if (a >= thr + 1e-9) CHECK(lb >= la - 1e-15);
    }
  };
  check(make(LossKind::SigmaDamp), damp_peak(1.0).m_star);
  check(make(LossKind::SigmaStitch), 1.0);
  const double sd = oracle::bisect([](double f) { return oracle::sigma(-f) - 0.2 * f; }, 0.0, 5.0);
  check(make(LossKind::SpectralDecoupling), sd);
  const double ml = oracle::bisect([](double f) { return -oracle::sigma(-f) + 0.2 * f / (1 + f * f); }, 0.0, 50.0);
  check(make(LossKind::MargLog), ml);
  for (int i = 0; i < 400; ++i) CHECK(eval_loss(make(LossKind::Log), -6 + (i + 1) * 0.03, 1) < eval_loss(make(LossKind::Log), -6 + i * 0.03, 1));
}

TEST_CASE("label symmetry with single-class parameters") {
  for (auto k : {LossKind::Log, LossKind::SigmaDamp, LossKind::SigmaStitch, LossKind::MargLog,
                 LossKind::SpectralDecoupling}) {
    const auto s = make(k);
    for (double f : {-3.0, -0.4, 0.0, 0.9, 2.2})
      CHECK(eval_loss(s, f, 1) == doctest::Approx(eval_loss(s, -f, -1)).epsilon(1e-14));
  }
}

TEST_CASE("nonnegative and finite") {
  for (const auto& s : all_specs())
    for (double f : {-1e6, -50.0, -1.0, 0.0, 1.0, 50.0, 1e6})
      for (int y : {-1, 1}) {
        const double l = eval_loss(s, f, y);
        CHECK(std::isfinite(l));
        CHECK(l >= 0.0);
        CHECK(std::isfinite(grad_output(s, f, y)));
      }
}

TEST_CASE("errors") {
  const auto s = make(LossKind::Log);
  CHECK_THROWS_AS(eval_loss(s, std::nan(""), 1), DomainError);
  CHECK_THROWS_AS(eval_loss(s, INFINITY, 1), DomainError);
  CHECK_THROWS_AS(grad_output(s, -INFINITY, 1), DomainError);
  CHECK_THROWS(eval_loss(s, 1.0, 0));
  LossSpec bad = make(LossKind::SigmaDamp);
  bad.T_pos = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  LossSpec neg = make(LossKind::SpectralDecoupling);
  neg.lambda = -1;
  CHECK_THROWS_AS(neg.validate(), ConfigError);
  CHECK(loss_kind_from_string("sigma_stitch") == LossKind::SigmaStitch);
  CHECK(to_string(LossKind::SpectralDecoupling) == "sd");
  CHECK_THROWS_AS(loss_kind_from_string("hinge"), ConfigError);
  CHECK(damp_form_from_string("calibrated") == DampForm::Calibrated);
}
