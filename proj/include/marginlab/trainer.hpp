#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "marginlab/dgp.hpp"
#include "marginlab/losses.hpp"
#include "marginlab/model.hpp"

namespace marginlab {

struct TrainConfig {
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::int64_t epochs = 1000;
  std::int64_t eval_every = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

// Absent fields mean the group was empty.
struct GroupStat {
  int count = 0;
  std::optional<double> loss;
  std::optional<double> acc;
};

struct GroupMetrics {
  GroupStat all;
  GroupStat shortcut;
  GroupStat leftover;
  std::optional<double> worst_group_acc;  // min over nonempty (y, z) cells
  std::optional<double> balanced_acc;     // mean of per-label accuracies
};

struct Snapshot {
  std::int64_t epoch = 0;
  GroupMetrics train;
  GroupMetrics test;
  // linear models only
  std::optional<double> w_y;
  std::optional<double> B_wz;
  std::optional<double> we_norm;
};

struct TrainRecord {
  std::vector<Snapshot> snapshots;
  ModelParams final_params = ModelParams::linear_zeros(3);
};

// Predictions use sign(f) with sign(0) = +1.
GroupMetrics evaluate(const ModelParams& params, const Dataset& ds, const LossSpec& loss);

// Called after each recorded snapshot; returning false stops training early.
using SnapshotHook = std::function<bool(const Snapshot&)>;

TrainRecord train(ModelParams params, const Dataset& train_ds, const Dataset& test_ds, const LossSpec& loss,
                  const TrainConfig& cfg, const SnapshotHook& hook = {});

}  // namespace marginlab
