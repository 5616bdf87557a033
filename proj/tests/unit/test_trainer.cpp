#include "doctest.h"
#include "marginlab/dgp.hpp"
#include "marginlab/errors.hpp"
#include "marginlab/trainer.hpp"
#include "oracles.hpp"

using namespace marginlab;

namespace {

Dataset data(double rho, int d, int n, std::uint64_t seed, double B = 10.0) {
  DgpConfig c;
  c.rho = rho;
  c.B = B;
  c.d = d;
  c.n = n;
  c.seed = seed;
  return sample_dataset(c);
}

LossSpec make(LossKind k) {
  LossSpec s;
  s.kind = k;
  return s;
}

TrainConfig tc(double lr, double momentum, std::int64_t epochs, std::int64_t every) {
  TrainConfig c;
  c.lr = lr;
  c.momentum = momentum;
  c.epochs = epochs;
  c.eval_every = every;
  return c;
}

}  // namespace

TEST_CASE("momentum-free training matches reference gradient descent") {
  const auto tr = data(0.9, 20, 60, 1, 2.0), te = data(0.5, 20, 60, 2, 2.0);
  const auto rec = train(ModelParams::linear_zeros(20), tr, te, make(LossKind::Log), tc(0.05, 0.0, 300, 100));
  const Eigen::VectorXd ref = oracle::gd_log_loss(tr.X, tr.y, 0.05, 300);
  CHECK((rec.final_params.theta() - ref).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("heavy-ball update") {
  const auto tr = data(0.9, 6, 20, 3, 2.0);
  const auto rec = train(ModelParams::linear_zeros(6), tr, tr, make(LossKind::Log), tc(0.1, 0.9, 3, 1));
  // v1 = g0, v2 = 0.9 v1 + g1, v3 = 0.9 v2 + g2
  Eigen::VectorXd w = Eigen::VectorXd::Zero(6), v = Eigen::VectorXd::Zero(6);
  for (int e = 0; e < 3; ++e) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(6);
    for (int i = 0; i < tr.n(); ++i) {
      const double m = tr.y(i) * tr.X.row(i).dot(w);
      g -= oracle::sigma(-m) * tr.y(i) * tr.X.row(i).transpose();
    }
    v = 0.9 * v + g / tr.n();
    w -= 0.1 * v;
  }
  CHECK((rec.final_params.theta() - w).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("snapshot schedule") {
  const auto tr = data(0.9, 6, 20, 3);
  const auto rec = train(ModelParams::linear_zeros(6), tr, tr, make(LossKind::Log), tc(1e-3, 0.9, 250, 100));
  REQUIRE(rec.snapshots.size() == 4);
  CHECK(rec.snapshots[0].epoch == 0);
  CHECK(rec.snapshots[1].epoch == 100);
  CHECK(rec.snapshots[2].epoch == 200);
  CHECK(rec.snapshots[3].epoch == 250);
}

TEST_CASE("zero learning rate is a fixed point") {
  const auto tr = data(0.9, 10, 50, 4), te = data(0.1, 10, 50, 5);
  const auto p = ModelParams::mlp_init(10, 5, 3);
  const auto rec = train(p, tr, te, make(LossKind::SigmaDamp), tc(0.0, 0.9, 50, 10));
  CHECK(rec.final_params.theta() == p.theta());
  for (const auto& s : rec.snapshots) {
    CHECK(*s.train.all.loss == *rec.snapshots[0].train.all.loss);
    CHECK(*s.test.all.acc == *rec.snapshots[0].test.all.acc);
  }
}

TEST_CASE("deterministic records") {
  const auto tr = data(0.9, 10, 50, 4), te = data(0.1, 10, 50, 5);
  const auto a = train(ModelParams::mlp_init(10, 5, 3), tr, te, make(LossKind::Log), tc(1e-2, 0.9, 100, 10));
  const auto b = train(ModelParams::mlp_init(10, 5, 3), tr, te, make(LossKind::Log), tc(1e-2, 0.9, 100, 10));
  CHECK(a.final_params.theta() == b.final_params.theta());
  REQUIRE(a.snapshots.size() == b.snapshots.size());
  for (std::size_t i = 0; i < a.snapshots.size(); ++i) CHECK(*a.snapshots[i].test.all.loss == *b.snapshots[i].test.all.loss);
}

TEST_CASE("evaluation of hand-built classifiers") {
  const auto te = data(0.1, 12, 2000, 6);
  Eigen::VectorXd e2 = Eigen::VectorXd::Zero(12);
  e2(1) = 1;
  const auto m = evaluate(ModelParams::linear(e2), te, make(LossKind::Log));
  CHECK(*m.all.acc == 1.0);
  CHECK(*m.shortcut.acc == 1.0);
  CHECK(*m.leftover.acc == 1.0);
  CHECK(*m.worst_group_acc == 1.0);
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(12);
  e1(0) = 1 / te.B;
  const auto s = evaluate(ModelParams::linear(e1), te, make(LossKind::Log));
  CHECK(*s.shortcut.acc == 1.0);
  CHECK(*s.leftover.acc == 0.0);
  CHECK(*s.all.acc == doctest::Approx(te.shortcut_idx.size() / 2000.0));
  CHECK(std::abs(*s.all.acc - 0.1) < 0.03);
  CHECK(*s.worst_group_acc == 0.0);
}

TEST_CASE("group losses recompose the overall loss") {
  const auto te = data(0.7, 12, 300, 7);
  const auto p = ModelParams::mlp_init(12, 6, 2);
  for (auto k : {LossKind::Log, LossKind::MargLog}) {
    const auto m = evaluate(p, te, make(k));
    const double recomposed = (*m.shortcut.loss * m.shortcut.count + *m.leftover.loss * m.leftover.count) / m.all.count;
    CHECK(recomposed == doctest::Approx(*m.all.loss).epsilon(1e-13));
    CHECK(m.shortcut.count + m.leftover.count == 300);
  }
}

TEST_CASE("empty group has absent metrics") {
  Eigen::MatrixXd X(2, 3);
  X << 1, 1, 0.3, -1, -1, 0.2;
  const auto ds = make_dataset(X, Eigen::Vector2d(1, -1), Eigen::Vector2d(1, -1), 1.0);
  const auto m = evaluate(ModelParams::linear_zeros(3), ds, make(LossKind::Log));
  CHECK(m.leftover.count == 0);
  CHECK_FALSE(m.leftover.acc.has_value());
  CHECK_FALSE(m.leftover.loss.has_value());
  // sign(0) = +1
  CHECK(*m.all.acc == 0.5);
}

TEST_CASE("log-loss decreases monotonically for small steps") {
  const auto tr = data(0.9, 300, 1000, 8), te = data(0.1, 300, 1000, 9);
  const auto rec = train(ModelParams::linear_zeros(300), tr, te, make(LossKind::Log), tc(1e-3, 0.0, 1000, 1));
  for (std::size_t i = 11; i < rec.snapshots.size(); ++i)
    CHECK(*rec.snapshots[i].train.all.loss <= *rec.snapshots[i - 1].train.all.loss);
}

TEST_CASE("stitch loss never drops below its floor") {
  const auto tr = data(0.9, 50, 100, 10);
  const auto rec = train(ModelParams::linear_zeros(50), tr, tr, make(LossKind::SigmaStitch), tc(1e-2, 0.9, 2000, 50));
  const double floor = oracle::naive_log_loss(1.0);
  for (const auto& s : rec.snapshots) CHECK(*s.train.all.loss >= floor - 1e-9);
  CHECK(*rec.snapshots.back().train.all.loss < *rec.snapshots.front().train.all.loss);
}

TEST_CASE("snapshot hook stops early") {
  const auto tr = data(0.9, 10, 40, 11);
  int calls = 0;
  const auto rec = train(ModelParams::linear_zeros(10), tr, tr, make(LossKind::Log), tc(1e-2, 0.9, 1000, 10),
                         [&](const Snapshot&) { return ++calls < 3; });
  CHECK(rec.snapshots.size() == 3);
  CHECK(rec.snapshots.back().epoch == 20);
}

TEST_CASE("divergence and config errors") {
  const auto tr = data(0.9, 10, 40, 12);
  LossSpec sd = make(LossKind::SpectralDecoupling);
  sd.lambda = 1.0;
  try {
    train(ModelParams::linear_zeros(10), tr, tr, sd, tc(1e3, 0.0, 1000, 10));
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.epoch() > 0);
  }
  CHECK_THROWS_AS(train(ModelParams::linear_zeros(10), tr, tr, sd, tc(-1, 0.0, 10, 1)), ConfigError);
  CHECK_THROWS_AS(train(ModelParams::linear_zeros(10), tr, tr, sd, tc(1e-3, 1.0, 10, 1)), ConfigError);
  CHECK_THROWS_AS(train(ModelParams::linear_zeros(9), tr, tr, sd, tc(1e-3, 0.0, 10, 1)), ShapeError);
}
