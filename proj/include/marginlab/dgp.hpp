#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace marginlab {

struct DgpConfig {
  double rho = 0.9;
  double B = 10.0;
  int d = 300;
  int n = 1000;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Rows are samples laid out as [B*z, y, delta_1 .. delta_{d-2}].
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::VectorXd z;
  std::vector<int> shortcut_idx;  // y == z
  std::vector<int> leftover_idx;  // y != z
  double B = 1.0;

  int n() const { return static_cast<int>(X.rows()); }
  int d() const { return static_cast<int>(X.cols()); }
  int k() const { return static_cast<int>(leftover_idx.size()); }
  auto noise() const { return X.rightCols(X.cols() - 2); }
};

Dataset sample_dataset(const DgpConfig& config);

// Builds a Dataset from raw columns, recomputing the group partition.
Dataset make_dataset(Eigen::MatrixXd X, Eigen::VectorXd y, Eigen::VectorXd z, double B);

struct LeftoverStats {
  double mean_fraction = 0.0;
  double tail_frequency = 0.0;  // P(k >= n/10)
  double tail_stderr = 0.0;
  int trials = 0;
};

LeftoverStats leftover_fraction_stats(int n, double rho, int trials, std::uint64_t seed);

// CSV with header y,z,x_1..x_d
void write_dataset_csv(const Dataset& ds, std::ostream& out);
Dataset read_dataset_csv(std::istream& in, double B);

}  // namespace marginlab
