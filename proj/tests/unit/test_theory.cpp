#include "doctest.h"
#include "marginlab/dgp.hpp"
#include "marginlab/errors.hpp"
#include "marginlab/maxmargin.hpp"
#include "marginlab/rng.hpp"
#include "marginlab/theory.hpp"
#include "marginlab/trainer.hpp"
#include "oracles.hpp"

using namespace marginlab;

namespace {

Dataset data(double rho, double B, int d, int n, std::uint64_t seed) {
  DgpConfig c;
  c.rho = rho;
  c.B = B;
  c.d = d;
  c.n = n;
  c.seed = seed;
  return sample_dataset(c);
}

bool within(double emp, double p, int trials, double z = 4.0) {
  return std::abs(emp - p) <= z * std::sqrt(std::max(p * (1 - p), 1e-12) / trials) + 1e-12;
}

const SubBound& sub(const ConcentrationResult& r, const std::string& name) {
  for (const auto& s : r.subs)
    if (s.name == name) return s;
  throw std::runtime_error("missing sub-bound " + name);
}

}  // namespace

TEST_CASE("normal cdf") {
  CHECK(std::abs(normal_cdf(1.0) - 0.8413447461) <= 1e-10);
  for (double x = -8; x <= 8; x += 0.37) CHECK(std::abs(normal_cdf(x) - oracle::Phi(x)) <= 1e-10);
}

TEST_CASE("concentration tail factor") {
  const auto k = theorem1_constants();
  CHECK(concentration_tail(2.0) == doctest::Approx(std::exp(-4.0 * k.c / std::pow(k.G, 4))).epsilon(1e-14));
}

TEST_CASE("inner products against the chi-mixture oracle") {
  const int trials = 4000;
  for (double eps : {1.0, 2.0}) {
    const auto r = check_concentration(LemmaId::InnerProduct, {1000, eps, 1, 1}, trials, 3);
    const double p = oracle::inner_product_prob(1000, eps);
    CHECK(within(sub(r, "inner_product").empirical, p, trials));
    CHECK(r.pass);
  }
  CHECK(oracle::inner_product_prob(1e4, 2.0) == doctest::Approx(2 * oracle::Phi(-2)).epsilon(2e-3));
  const auto big = check_concentration(LemmaId::InnerProduct, {10000, 2.0, 1, 1}, 2000, 1);
  CHECK(sub(big, "inner_product").empirical <= 0.05 + 3 * sub(big, "inner_product").std_error);
}

TEST_CASE("norm concentration against the chi-square oracle") {
  const int trials = 4000;
  for (double t : {0.5, 1.0}) {
    const auto r = check_concentration(LemmaId::NormConc, {500, t, 1, 1}, trials, 4);
    CHECK(within(sub(r, "norm").empirical, oracle::norm_deviation_prob(500, t), trials));
  }
  const auto r = check_concentration(LemmaId::NormConc, {10000, 2.0, 1, 1}, 1000, 5);
  CHECK(sub(r, "norm").empirical <= 0.01);
  CHECK(oracle::norm_deviation_prob(1e4, 2.0) < 0.01);
}

TEST_CASE("sum bounds against exact oracles") {
  const int trials = 4000;
  const auto r = check_concentration(LemmaId::SumBounds, {400, 1.0, 1, 3}, trials, 6);
  CHECK(within(sub(r, "sum_norm").empirical, oracle::chisq_sf(400, std::pow(20.0 + 1.0, 2)), trials));
  CHECK(within(sub(r, "self_inner").empirical, oracle::self_inner_prob_tv1(400, 1.0), trials));
  CHECK(within(sub(r, "cross_inner").empirical, oracle::cross_inner_prob(400, 1.0, 3), trials));
  CHECK(r.pass);
  for (const auto& s : r.subs) {
    CHECK(s.stated <= 1.0);
    CHECK(s.stated == std::min(1.0, s.stated_raw));
  }
  const double tail = concentration_tail(1.0);
  CHECK(sub(r, "self_inner").stated_raw == doctest::Approx(4.0 * tail));
  CHECK(sub(r, "cross_inner").stated_raw == doctest::Approx(2.0 * 3 * tail));
}

TEST_CASE("violation frequency is non-increasing in eps") {
  double prev = 1.0, prev_se = 0.0;
  for (double eps : {0.5, 1.0, 1.5, 2.0}) {
    const auto r = check_concentration(LemmaId::InnerProduct, {300, eps, 1, 1}, 3000, 7);
    const auto& s = sub(r, "inner_product");
    CHECK(s.empirical <= prev + 3 * std::hypot(s.std_error, prev_se));
    prev = s.empirical;
    prev_se = s.std_error;
  }
}

TEST_CASE("concentration errors") {
  CHECK_THROWS_AS(check_concentration(LemmaId::SumBounds, {100, 20.0, 1, 1}, 10, 0), DomainError);
  CHECK_THROWS_AS(check_concentration(LemmaId::NormConc, {100, 1.0, 1, 1}, 0, 0), DomainError);
  CHECK(lemma_id_from_string("sum_bounds") == LemmaId::SumBounds);
  CHECK_THROWS_AS(lemma_id_from_string("lemma9"), ConfigError);
}

TEST_CASE("leftover accuracy closed form") {
  Eigen::VectorXd w(5);
  w << 0.125, 1.25, 0.3, 0.4, 0.0;
  CHECK(leftover_accuracy(ModelParams::linear(w), 10.0) == 0.5);
  w << 0.05, 1.0, 0.3, 0.4, 0.0;
  CHECK(leftover_accuracy(ModelParams::linear(w), 10.0) == doctest::Approx(oracle::Phi(0.5 / 0.5)).epsilon(1e-10));
  w << 0.05, 1.0, 0, 0, 0;
  CHECK(leftover_accuracy(ModelParams::linear(w), 10.0) == 1.0);
  w << 0.2, 1.0, 0, 0, 0;
  CHECK(leftover_accuracy(ModelParams::linear(w), 10.0) == 0.0);
  w << 0.125, 1.25, 0, 0, 0;
  CHECK(leftover_accuracy(ModelParams::linear(w), 10.0) == 0.5);
  // rescaling invariance and monotonicity
  Eigen::VectorXd v(5);
  v << 0.03, 0.7, 0.2, -0.1, 0.3;
  const double a = leftover_accuracy(ModelParams::linear(v), 10.0);
  CHECK(leftover_accuracy(ModelParams::linear(4.0 * v), 10.0) == doctest::Approx(a).epsilon(1e-14));
  v(0) += 0.01;
  CHECK(leftover_accuracy(ModelParams::linear(v), 10.0) < a);
}

TEST_CASE("leftover accuracy against Monte Carlo on a solved classifier") {
  const auto ds = data(0.9, 10, 100, 300, 1);
  const auto s = solve(MarginQp::from_dataset(ds, Side::None));
  const auto p = ModelParams::linear(s.w);
  const double analytic = leftover_accuracy(p, 10.0);
  Rng rng(99);
  int correct = 0;
  const int trials = 100000;
  for (int t = 0; t < trials; ++t) {
    const double y = rng.rademacher();
    double f = 10.0 * (-y) * s.w(0) + y * s.w(1);
    for (int j = 2; j < ds.d(); ++j) f += s.w(j) * rng.normal();
    correct += (f >= 0 ? 1.0 : -1.0) == y;
  }
  CHECK(std::abs(static_cast<double>(correct) / trials - analytic) <= 0.01);
}

TEST_CASE("proposition formula") {
  CHECK(prop1_formula(100, 1000, 0.9, 0.1, 0.1) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(prop1_formula(100, 1000, 0.9, 1e-12, 0.1) ==
        doctest::Approx(std::sqrt(100.0) / std::sqrt(0.1 * 1000)).epsilon(1e-9));
  int good = 0;
  for (std::uint64_t s = 0; s < 40; ++s) {
    Prop1Scenario sc;
    sc.n = 1000;
    sc.d = 400;
    sc.rho = 0.9;
    sc.eps_conf = 0.01;
    sc.gamma_conf = 0.1;
    sc.seed = s;
    good += prop1_check(sc).rel_error <= 0.15;
  }
  CHECK(good >= 36);
  Prop1Scenario bad;
  bad.n = 999;
  bad.rho = 0.9;
  CHECK_THROWS_AS(prop1_check(bad), ConfigError);
}

TEST_CASE("gradient-starvation pair statistics") {
  const auto ds = data(0.9, 10, 300, 400, 2);
  const auto g = gs_violation(ds);
  // pair count by group sizes
  long cells[2][2] = {{0, 0}, {0, 0}};
  for (int i = 0; i < ds.n(); ++i) ++cells[ds.y(i) > 0][ds.z(i) > 0];
  long pairs = 0;
  for (auto& r : cells)
    for (long c : r) pairs += c * (c - 1) / 2;
  CHECK(g.pairs == pairs);
  CHECK(g.fraction > 0.45);
  CHECK(g.fraction < 0.55);
  CHECK(g.max_abs_inner >= 101 - 1e-9);
  const auto z = gs_violation(data(0.9, 1e-9, 50, 200, 3));
  CHECK(std::abs(z.fraction - 0.5) < 0.05);
  Eigen::MatrixXd X(2, 3);
  X << 1, 1, 0, -1, 1, 0;
  CHECK_THROWS_AS(gs_violation(make_dataset(X, Eigen::Vector2d(1, 1), Eigen::Vector2d(1, -1), 1.0)), DomainError);
}

TEST_CASE("flow equations") {
  const auto d0 = flow_rhs(0, 0, 10, 50, 0.8);
  CHECK(d0.dw_y == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(d0.dw_z == doctest::Approx(0.3).epsilon(1e-15));
  const auto half = integrate_flow({}, 5.0, 40, 0.5, 5.0, 0.05);
  for (const auto& s : half) CHECK(std::abs(s.w_z) <= 1e-14);
  CHECK(half.size() == 101);
}

TEST_CASE("flow matches discrete gradient descent on orthogonal data") {
  const int n = 50;
  const double rho = 0.8, Gamma = 10.0, lr = 1e-3, T = 10.0;
  const auto ds = flow_dataset(n, rho, Gamma, 1);
  CHECK(ds.d() == n + 2);
  CHECK(ds.k() == 10);
  const Eigen::MatrixXd N = ds.noise();
  const Eigen::MatrixXd Gram = N * N.transpose();
  CHECK((Gram - Gamma * Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() <= 1e-12);
  const Eigen::VectorXd w = oracle::gd_log_loss(ds.X, ds.y, lr, static_cast<long>(T / lr));
  const auto traj = integrate_flow({}, Gamma, n, rho, T, 0.01);
  CHECK(std::abs(traj.back().w_y - w(1)) <= 1e-3);
  CHECK(std::abs(traj.back().w_z - w(0)) <= 1e-3);
}

TEST_CASE("RK4 error ratio under step halving") {
  const auto ref = integrate_flow({}, 10, 50, 0.8, 10, 0.5 / 8).back();
  const auto a = integrate_flow({}, 10, 50, 0.8, 10, 0.5).back();
  const auto b = integrate_flow({}, 10, 50, 0.8, 10, 0.25).back();
  const double ea = std::hypot(a.w_y - ref.w_y, a.w_z - ref.w_z);
  const double eb = std::hypot(b.w_y - ref.w_y, b.w_z - ref.w_z);
  CHECK(ea / eb >= 8.0);
  CHECK(ea / eb <= 32.0);
  CHECK_THROWS_AS(integrate_flow({}, 10, 50, 0.8, 10, 0.0), DomainError);
}
