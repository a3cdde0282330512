#include "darlr/nn/param.hpp"

#include <cmath>

#include "darlr/rng.hpp"

namespace darlr::nn {

ParamBlock::ParamBlock(std::string block_name, Index rows, Index cols)
    : name(std::move(block_name)),
      value(Mat::Zero(rows, cols)),
      grad(Mat::Zero(rows, cols)),
      adam_m(Mat::Zero(rows, cols)),
      adam_v(Mat::Zero(rows, cols)) {}

void uniform_init(ParamBlock& block, std::uint64_t seed, double scale) {
  Rng rng = make_stream(seed, block.name);
  // Row-major fill so the draw order matches the checkpoint layout.
  for (Index r = 0; r < block.rows(); ++r) {
    for (Index c = 0; c < block.cols(); ++c) {
      block.value(r, c) = (2.0 * uniform01(rng) - 1.0) * scale;
    }
  }
}

void glorot_init(ParamBlock& block, std::uint64_t seed) {
  const double fan_in = static_cast<double>(block.cols());
  const double fan_out = static_cast<double>(block.rows());
  uniform_init(block, seed, std::sqrt(6.0 / (fan_in + fan_out)));
}

void zero_grads(const ParamRefs& blocks) {
  for (ParamBlock* b : blocks) b->zero_grad();
}

ConstParamRefs const_refs(const ParamRefs& blocks) {
  return ConstParamRefs(blocks.begin(), blocks.end());
}

}  // namespace darlr::nn
