#include "marginlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "marginlab/errors.hpp"

namespace marginlab {

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
    throw ConfigError("train.weight_decay must be nonnegative");
  if (epochs < 1) throw ConfigError("train.epochs must be positive");
  if (eval_every < 1) throw ConfigError("train.eval_every must be positive");
}

namespace {

struct Acc {
  int count = 0;
  int correct = 0;
  double loss = 0.0;

  void add(bool ok, double l) {
    ++count;
    correct += ok;
    loss += l;
  }
  GroupStat stat() const {
    GroupStat s;
    s.count = count;
    if (count > 0) {
      s.loss = loss / count;
      s.acc = static_cast<double>(correct) / count;
    }
    return s;
  }
};

}  // namespace

GroupMetrics evaluate(const ModelParams& params, const Dataset& ds, const LossSpec& loss) {
  const Eigen::VectorXd f = forward(params, ds.X);
  Acc all, sc, lo;
  Acc cell[2][2];  // [y > 0][z > 0]
  Acc label[2];
  for (int i = 0; i < ds.n(); ++i) {
    const int yi = ds.y(i) > 0 ? 1 : -1;
    const int pred = f(i) >= 0.0 ? 1 : -1;
    const bool ok = pred == yi;
    const double l = eval_loss(loss, f(i), yi);
    all.add(ok, l);
    (ds.y(i) == ds.z(i) ? sc : lo).add(ok, l);
    cell[yi > 0][ds.z(i) > 0].add(ok, l);
    label[yi > 0].add(ok, l);
  }
  GroupMetrics m;
  m.all = all.stat();
  m.shortcut = sc.stat();
  m.leftover = lo.stat();
  for (auto& row : cell)
    for (auto& c : row)
      if (c.count > 0) {
        const double a = static_cast<double>(c.correct) / c.count;
        m.worst_group_acc = m.worst_group_acc ? std::min(*m.worst_group_acc, a) : a;
      }
  double bal = 0.0;
  int labels = 0;
  for (auto& c : label)
    if (c.count > 0) {
      bal += static_cast<double>(c.correct) / c.count;
      ++labels;
    }
  if (labels > 0) m.balanced_acc = bal / labels;
  return m;
}

namespace {

Snapshot snapshot(std::int64_t epoch, const ModelParams& p, const Dataset& tr, const Dataset& te,
                  const LossSpec& loss) {
  Snapshot s;
  s.epoch = epoch;
  s.train = evaluate(p, tr, loss);
  s.test = evaluate(p, te, loss);
  if (p.kind() == ModelKind::Linear) {
    s.w_y = p.w_y();
    s.B_wz = tr.B * p.w_z();
    s.we_norm = p.w_e().norm();
  }
  return s;
}

}  // namespace

TrainRecord train(ModelParams params, const Dataset& train_ds, const Dataset& test_ds, const LossSpec& loss,
                  const TrainConfig& cfg, const SnapshotHook& hook) {
  cfg.validate();
  loss.validate();
  if (train_ds.d() != params.d() || test_ds.d() != params.d())
    throw ShapeError("train: dataset dimension does not match params");
  if (train_ds.B != test_ds.B) throw ShapeError("train: train and test datasets use different B");

  TrainRecord rec;
  rec.snapshots.push_back(snapshot(0, params, train_ds, test_ds, loss));
  bool keep_going = !hook || hook(rec.snapshots.back());

  Eigen::VectorXd& theta = params.theta();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
  for (std::int64_t e = 1; e <= cfg.epochs && keep_going; ++e) {
    const LossAndGrad lg = backward(params, train_ds.X, train_ds.y, loss);
    if (!std::isfinite(lg.loss) || std::abs(lg.loss) > 1e12)
      throw DivergenceError("training diverged: loss " + std::to_string(lg.loss) + " at epoch " + std::to_string(e),
                            e);
    v = cfg.momentum * v + lg.grad + cfg.weight_decay * theta;
    theta -= cfg.lr * v;
    if (!theta.allFinite())
      throw DivergenceError("training diverged: non-finite parameter at epoch " + std::to_string(e), e);
    if (e % cfg.eval_every == 0 || e == cfg.epochs) {
      rec.snapshots.push_back(snapshot(e, params, train_ds, test_ds, loss));
      if (hook) keep_going = hook(rec.snapshots.back());
    }
  }
  rec.final_params = std::move(params);
  return rec;
}

}  // namespace marginlab
