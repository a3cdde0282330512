#include "darlr/shaped_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "darlr/error.hpp"
#include "darlr/nn/checkpoint.hpp"
#include "darlr/rng.hpp"

namespace darlr {

ShapedRewardMatrix::ShapedRewardMatrix(const Eigen::MatrixXd& initial, double r_min, double r_max)
    : current_(initial.cwiseMax(r_min).cwiseMin(r_max)),
      previous_(current_),
      writes_(Eigen::MatrixXi::Zero(initial.rows(), initial.cols())),
      r_min_(r_min),
      r_max_(r_max) {
  if (!(r_min < r_max)) throw Error("shaped matrix: r_min must be below r_max");
  if (!initial.allFinite()) throw Error("shaped matrix: non-finite initial value");
}

void ShapedRewardMatrix::write(int u, int i, double value, double alpha) {
  if (u < 0 || u >= rows() || i < 0 || i >= cols()) throw Error("shaped matrix: index out of range");
  if (!std::isfinite(value)) throw Error("shaped matrix: non-finite write");
  previous_(u, i) = current_(u, i);
  current_(u, i) = std::clamp((1.0 - alpha) * current_(u, i) + alpha * value, r_min_, r_max_);
  ++writes_(u, i);
}

std::uint64_t ShapedRewardMatrix::hash() const {
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(current_.size()));
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < bytes; ++k) h = (h ^ p[k]) * 0x100000001b3ULL;
  };
  mix(current_.data(), sizeof(double) * current_.size());
  mix(previous_.data(), sizeof(double) * previous_.size());
  mix(writes_.data(), sizeof(int) * writes_.size());
  return h;
}

void ShapedRewardMatrix::save(std::ostream& os) const {
  os << "range " << nn::format_double(r_min_) << ' ' << nn::format_double(r_max_) << '\n';
  nn::write_matrix(os, "current", current_);
  nn::write_matrix(os, "previous", previous_);
  nn::write_matrix(os, "write_count", writes_.cast<double>());
}

ShapedRewardMatrix ShapedRewardMatrix::load(std::istream& is) {
  std::string tag, lo, hi;
  if (!(is >> tag >> lo >> hi) || tag != "range") throw Error("shaped matrix: malformed header");
  ShapedRewardMatrix m;
  m.r_min_ = nn::parse_double(lo);
  m.r_max_ = nn::parse_double(hi);
  m.current_ = nn::read_matrix(is, "current");
  m.previous_ = nn::read_matrix(is, "previous");
  m.writes_ = nn::read_matrix(is, "write_count").cast<int>();
  if (m.previous_.rows() != m.current_.rows() || m.previous_.cols() != m.current_.cols() ||
      m.writes_.rows() != m.current_.rows() || m.writes_.cols() != m.current_.cols()) {
    throw Error("shaped matrix: inconsistent shapes");
  }
  return m;
}

bool ShapedRewardMatrix::operator==(const ShapedRewardMatrix& o) const {
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  return r_min_ == o.r_min_ && r_max_ == o.r_max_ && same(current_, o.current_) &&
         same(previous_, o.previous_) && same(writes_, o.writes_);
}

}  // namespace darlr
