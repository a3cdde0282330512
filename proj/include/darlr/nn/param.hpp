#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace darlr::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

// A named, trainable parameter tensor with its gradient accumulator and
// Adam moment buffers. Vectors are stored as n x 1.
struct ParamBlock {
  std::string name;
  Mat value;
  Mat grad;
  Mat adam_m;
  Mat adam_v;
  std::int64_t step_count = 0;

  ParamBlock() = default;
  ParamBlock(std::string block_name, Index rows, Index cols);

  Index rows() const { return value.rows(); }
  Index cols() const { return value.cols(); }
  Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(); }
};

using ParamRefs = std::vector<ParamBlock*>;
using ConstParamRefs = std::vector<const ParamBlock*>;

// uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)) with fan_in = cols and
// fan_out = rows, drawn from the stream named after the block.
void glorot_init(ParamBlock& block, std::uint64_t seed);

// Uniform(-scale, scale) from the block's named stream.
void uniform_init(ParamBlock& block, std::uint64_t seed, double scale);

void zero_grads(const ParamRefs& blocks);

ConstParamRefs const_refs(const ParamRefs& blocks);

}  // namespace darlr::nn
