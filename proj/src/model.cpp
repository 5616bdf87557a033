#include "marginlab/model.hpp"

#include <cmath>
#include <string>

#include "marginlab/errors.hpp"
#include "marginlab/rng.hpp"

namespace marginlab {

ModelParams ModelParams::linear(Eigen::VectorXd w) {
  if (w.size() < 3) throw ShapeError("linear params need d >= 3");
  const int d = static_cast<int>(w.size());
  return ModelParams(ModelKind::Linear, d, 0, std::move(w));
}

ModelParams ModelParams::linear_zeros(int d) { return linear(Eigen::VectorXd::Zero(d)); }

ModelParams ModelParams::mlp_zeros(int d, int h) {
  if (d < 1 || h < 1) throw ShapeError("mlp params need d >= 1 and h >= 1");
  return ModelParams(ModelKind::Mlp, d, h, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h) * d + 2 * h + 1));
}

ModelParams ModelParams::mlp_init(int d, int h, std::uint64_t seed) {
  ModelParams p = mlp_zeros(d, h);
  Rng rng(seed);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
  auto W1 = p.W1();
  for (int j = 0; j < d; ++j)
    for (int r = 0; r < h; ++r) W1(r, j) = s1 * rng.normal();
  auto w2 = p.w2();
  for (int r = 0; r < h; ++r) w2(r) = s2 * rng.normal();
  return p;
}

void ModelParams::require(ModelKind k) const {
  if (kind_ != k)
    throw ShapeError(k == ModelKind::Linear ? "operation needs linear params" : "operation needs mlp params");
}

double ModelParams::w_z() const {
  require(ModelKind::Linear);
  return theta_(0);
}

double ModelParams::w_y() const {
  require(ModelKind::Linear);
  return theta_(1);
}

Eigen::VectorXd ModelParams::w_e() const {
  require(ModelKind::Linear);
  return theta_.tail(d_ - 2);
}

Eigen::Map<const Eigen::MatrixXd> ModelParams::W1() const {
  require(ModelKind::Mlp);
  return {theta_.data(), h_, d_};
}
Eigen::Map<Eigen::MatrixXd> ModelParams::W1() {
  require(ModelKind::Mlp);
  return {theta_.data(), h_, d_};
}
Eigen::Map<const Eigen::VectorXd> ModelParams::b1() const {
  require(ModelKind::Mlp);
  return {theta_.data() + static_cast<Eigen::Index>(h_) * d_, h_};
}
Eigen::Map<Eigen::VectorXd> ModelParams::b1() {
  require(ModelKind::Mlp);
  return {theta_.data() + static_cast<Eigen::Index>(h_) * d_, h_};
}
Eigen::Map<const Eigen::VectorXd> ModelParams::w2() const {
  require(ModelKind::Mlp);
  return {theta_.data() + static_cast<Eigen::Index>(h_) * d_ + h_, h_};
}
Eigen::Map<Eigen::VectorXd> ModelParams::w2() {
  require(ModelKind::Mlp);
  return {theta_.data() + static_cast<Eigen::Index>(h_) * d_ + h_, h_};
}

namespace {

void check_shape(const ModelParams& p, const Eigen::MatrixXd& X) {
  if (X.cols() != p.d())
    throw ShapeError("input has " + std::to_string(X.cols()) + " columns, params expect " + std::to_string(p.d()));
}

Eigen::MatrixXd hidden_pre(const ModelParams& p, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd pre = X * p.W1().transpose();
  pre.rowwise() += p.b1().transpose();
  return pre;
}

}  // namespace

Eigen::VectorXd forward(const ModelParams& params, const Eigen::MatrixXd& X) {
  check_shape(params, X);
  if (params.kind() == ModelKind::Linear) return X * params.theta();
  const Eigen::MatrixXd H = hidden_pre(params, X).cwiseMax(0.0);
  return (H * params.w2()).array() + params.b2();
}

LossAndGrad backward(const ModelParams& params, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const LossSpec& spec) {
  check_shape(params, X);
  if (y.size() != X.rows()) throw ShapeError("labels and inputs have different row counts");
  const Eigen::Index n = X.rows();
  if (n == 0) throw ShapeError("backward needs at least one row");

  LossAndGrad out;
  Eigen::MatrixXd pre;
  if (params.kind() == ModelKind::Linear) {
    out.output = X * params.theta();
  } else {
    pre = hidden_pre(params, X);
    out.output = (pre.cwiseMax(0.0) * params.w2()).array() + params.b2();
  }

  // dl/df per row, already divided by n
  Eigen::VectorXd g(n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int yi = y(i) > 0 ? 1 : -1;
    total += eval_loss(spec, out.output(i), yi);
    g(i) = grad_output(spec, out.output(i), yi) / static_cast<double>(n);
  }
  out.loss = total / static_cast<double>(n);

  if (params.kind() == ModelKind::Linear) {
    out.grad = X.transpose() * g;
    return out;
  }

  const int h = params.h(), d = params.d();
  out.grad.resize(params.theta().size());
  Eigen::Map<Eigen::MatrixXd> gW1(out.grad.data(), h, d);
  Eigen::Map<Eigen::VectorXd> gb1(out.grad.data() + static_cast<Eigen::Index>(h) * d, h);
  Eigen::Map<Eigen::VectorXd> gw2(out.grad.data() + static_cast<Eigen::Index>(h) * d + h, h);

  gw2.noalias() = pre.cwiseMax(0.0).transpose() * g;
  out.grad(out.grad.size() - 1) = g.sum();
  // reuse pre as the gradient w.r.t. pre-activations; relu'(0) = 0
  const auto w2 = params.w2();
  for (Eigen::Index r = 0; r < h; ++r) {
    auto col = pre.col(r);
    for (Eigen::Index i = 0; i < n; ++i) col(i) = col(i) > 0.0 ? g(i) * w2(r) : 0.0;
  }
  gb1 = pre.colwise().sum().transpose();
  gW1.noalias() = pre.transpose() * X;
  return out;
}

GradComponents grad_components(const Dataset& ds, const Eigen::VectorXd& sample_weights,
                               const std::vector<int>& subset) {
  if (sample_weights.size() != ds.n()) throw ShapeError("grad_components: one weight per sample required");
  if (subset.empty()) throw DomainError("grad_components: empty sample subset");
  GradComponents c;
  double stable = 0.0;
  for (int i = 0; i < ds.n(); ++i) stable += sample_weights(i) * ds.y(i) * ds.X(i, 1);
  c.stable = std::abs(stable);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(ds.d() - 2);
  for (int i : subset) {
    if (i < 0 || i >= ds.n()) throw DomainError("grad_components: subset index out of range");
    acc += sample_weights(i) * ds.y(i) * ds.X.row(i).tail(ds.d() - 2).transpose();
  }
  c.noise_norm = acc.norm();
  return c;
}

}  // namespace marginlab
