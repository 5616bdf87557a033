#include "marginlab/dgp.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "marginlab/errors.hpp"
#include "marginlab/numfmt.hpp"
#include "marginlab/rng.hpp"

namespace marginlab {

void DgpConfig::validate() const {
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("dgp.rho must lie in (0, 1)");
  if (!(B > 0.0) || !std::isfinite(B)) throw ConfigError("dgp.B must be positive");
  if (d < 3) throw ConfigError("dgp.d must be at least 3");
  if (n < 1) throw ConfigError("dgp.n must be at least 1");
}

Dataset make_dataset(Eigen::MatrixXd X, Eigen::VectorXd y, Eigen::VectorXd z, double B) {
  if (X.rows() != y.size() || X.rows() != z.size())
    throw ShapeError("dataset: X, y, z row counts differ");
  if (X.cols() < 3) throw ShapeError("dataset: need at least 3 columns");
  Dataset ds;
  ds.B = B;
  for (int i = 0; i < X.rows(); ++i) {
    if (std::abs(y(i)) != 1.0 || std::abs(z(i)) != 1.0)
      throw DomainError("dataset: labels and shortcut values must be +-1");
    (y(i) == z(i) ? ds.shortcut_idx : ds.leftover_idx).push_back(i);
  }
  ds.X = std::move(X);
  ds.y = std::move(y);
  ds.z = std::move(z);
  return ds;
}

Dataset sample_dataset(const DgpConfig& config) {
  config.validate();
  const int n = config.n, d = config.d;
  Rng rng(config.seed);
  Eigen::MatrixXd X(n, d);
  Eigen::VectorXd y(n), z(n);
  for (int i = 0; i < n; ++i) {
    const int yi = rng.rademacher();
    const int zi = rng.bernoulli(config.rho) ? yi : -yi;
    y(i) = yi;
    z(i) = zi;
    X(i, 0) = config.B * zi;
    X(i, 1) = yi;
    for (int j = 2; j < d; ++j) X(i, j) = rng.normal();
  }
  return make_dataset(std::move(X), std::move(y), std::move(z), config.B);
}

LeftoverStats leftover_fraction_stats(int n, double rho, int trials, std::uint64_t seed) {
  if (n < 1) throw DomainError("leftover_fraction_stats: n must be >= 1");
  if (!(rho > 0.0 && rho < 1.0)) throw DomainError("leftover_fraction_stats: rho must lie in (0, 1)");
  if (trials < 1) throw DomainError("leftover_fraction_stats: trials must be >= 1");
  Rng rng(seed);
  const double q = 1.0 - rho;
  double sum = 0.0;
  long tail = 0;
  for (int t = 0; t < trials; ++t) {
    int k = 0;
    for (int i = 0; i < n; ++i) k += rng.uniform() < q;
    sum += static_cast<double>(k) / n;
    // k >= n/10 without rounding n/10
    if (10L * k >= n) ++tail;
  }
  LeftoverStats s;
  s.trials = trials;
  s.mean_fraction = sum / trials;
  s.tail_frequency = static_cast<double>(tail) / trials;
  s.tail_stderr = std::sqrt(s.tail_frequency * (1.0 - s.tail_frequency) / trials);
  return s;
}

void write_dataset_csv(const Dataset& ds, std::ostream& out) {
  out << "y,z";
  for (int j = 1; j <= ds.d(); ++j) out << ",x_" << j;
  out << '\n';
  for (int i = 0; i < ds.n(); ++i) {
    out << fmt_double(ds.y(i)) << ',' << fmt_double(ds.z(i));
    for (int j = 0; j < ds.d(); ++j) out << ',' << fmt_double(ds.X(i, j));
    out << '\n';
  }
}

Dataset read_dataset_csv(std::istream& in, double B) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("dataset csv: missing header");
  const long cols = std::count(line.begin(), line.end(), ',') + 1;
  if (cols < 5 || line.rfind("y,z,", 0) != 0) throw ConfigError("dataset csv: bad header");
  const long d = cols - 2;
  std::vector<double> vals;
  long rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const char* p = line.data();
    const char* end = p + line.size();
    long got = 0;
    while (p < end) {
      double v;
      auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc()) throw ConfigError("dataset csv: bad number on row " + std::to_string(rows + 1));
      vals.push_back(v);
      ++got;
      p = res.ptr;
      if (p < end && *p == ',') ++p;
    }
    if (got != cols) throw ConfigError("dataset csv: wrong column count on row " + std::to_string(rows + 1));
    ++rows;
  }
  Eigen::MatrixXd X(rows, d);
  Eigen::VectorXd y(rows), z(rows);
  for (long i = 0; i < rows; ++i) {
    y(i) = vals[i * cols];
    z(i) = vals[i * cols + 1];
    for (long j = 0; j < d; ++j) X(i, j) = vals[i * cols + 2 + j];
  }
  return make_dataset(std::move(X), std::move(y), std::move(z), B);
}

}  // namespace marginlab
