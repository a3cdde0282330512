#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>

namespace darlr {

// Mutable reward estimate r_hat(u, i) plus the value each entry held before
// its most recent write.
class ShapedRewardMatrix {
 public:
  ShapedRewardMatrix() = default;
  ShapedRewardMatrix(const Eigen::MatrixXd& initial, double r_min, double r_max);

  double operator()(int u, int i) const { return current_(u, i); }
  const Eigen::MatrixXd& current() const { return current_; }
  const Eigen::MatrixXd& previous() const { return previous_; }
  const Eigen::MatrixXi& write_count() const { return writes_; }
  double r_min() const { return r_min_; }
  double r_max() const { return r_max_; }
  int rows() const { return static_cast<int>(current_.rows()); }
  int cols() const { return static_cast<int>(current_.cols()); }

  // previous <- current; current <- clip((1 - alpha) * current + alpha * value).
  void write(int u, int i, double value, double alpha);

  std::uint64_t hash() const;

  void save(std::ostream& os) const;
  static ShapedRewardMatrix load(std::istream& is);

  bool operator==(const ShapedRewardMatrix& other) const;

 private:
  Eigen::MatrixXd current_;
  Eigen::MatrixXd previous_;
  Eigen::MatrixXi writes_;
  double r_min_ = 0.0;
  double r_max_ = 1.0;
};

}  // namespace darlr
