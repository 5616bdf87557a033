#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "marginlab/dgp.hpp"
#include "marginlab/losses.hpp"

namespace marginlab {

enum class ModelKind { Linear, Mlp };

// All parameters live in one flat vector so optimizers can treat both
// model kinds alike.
//   Linear: theta = w = [w_z, w_y, w_e].
//   Mlp:    theta = [vec(W1) (column-major, h x d), b1, w2, b2].
class ModelParams {
 public:
  static ModelParams linear(Eigen::VectorXd w);
  static ModelParams linear_zeros(int d);
  static ModelParams mlp_zeros(int d, int h);
  // W1, w2 ~ N(0, 1/fan_in); biases zero.
  static ModelParams mlp_init(int d, int h, std::uint64_t seed);

  ModelKind kind() const { return kind_; }
  int d() const { return d_; }
  int h() const { return h_; }
  Eigen::VectorXd& theta() { return theta_; }
  const Eigen::VectorXd& theta() const { return theta_; }

  // linear views
  double w_z() const;
  double w_y() const;
  Eigen::VectorXd w_e() const;

  // mlp views
  Eigen::Map<const Eigen::MatrixXd> W1() const;
  Eigen::Map<Eigen::MatrixXd> W1();
  Eigen::Map<const Eigen::VectorXd> b1() const;
  Eigen::Map<Eigen::VectorXd> b1();
  Eigen::Map<const Eigen::VectorXd> w2() const;
  Eigen::Map<Eigen::VectorXd> w2();
  double b2() const { return theta_(theta_.size() - 1); }
  double& b2() { return theta_(theta_.size() - 1); }

 private:
  ModelParams(ModelKind kind, int d, int h, Eigen::VectorXd theta)
      : kind_(kind), d_(d), h_(h), theta_(std::move(theta)) {}
  void require(ModelKind k) const;

  ModelKind kind_ = ModelKind::Linear;
  int d_ = 0;
  int h_ = 0;
  Eigen::VectorXd theta_;
};

Eigen::VectorXd forward(const ModelParams& params, const Eigen::MatrixXd& X);

struct LossAndGrad {
  double loss;             // mean loss
  Eigen::VectorXd grad;    // gradient of the mean loss w.r.t. theta
  Eigen::VectorXd output;  // f on every row
};

LossAndGrad backward(const ModelParams& params, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const LossSpec& spec);

struct GradComponents {
  double stable;      // |sum_i a_i y_i x_i2| over all samples
  double noise_norm;  // || sum_{i in subset} a_i y_i delta_i ||
};

// Per-sample linear gradients a_i y_i x_i with the given weights a_i. Sums, not means.
GradComponents grad_components(const Dataset& ds, const Eigen::VectorXd& sample_weights,
                               const std::vector<int>& subset);

}  // namespace marginlab
