#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "darlr/nn/param.hpp"

namespace darlr::nn {

// Columns of every input matrix are independent samples (or sequence
// positions); all layers act column-wise.

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, Index in, Index out, std::uint64_t seed);

  Index in_width() const { return weight.cols(); }
  Index out_width() const { return weight.rows(); }

  Mat forward(const Mat& x) const;
  // Accumulates weight/bias gradients and returns d(loss)/dx.
  Mat backward(const Mat& x, const Mat& dy);
  void collect(ParamRefs& out);

  ParamBlock weight;  // out x in
  ParamBlock bias;    // out x 1
};

class LayerNorm {
 public:
  struct Tape {
    Mat normalized;
    Vec inv_std;  // one per column
  };

  LayerNorm() = default;
  LayerNorm(const std::string& name, Index width);

  Mat forward(const Mat& x, Tape* tape) const;
  Mat backward(const Tape& tape, const Mat& dy);
  void collect(ParamRefs& out);

  static constexpr double kEps = 1e-5;
  ParamBlock gain;
  ParamBlock shift;
};

enum class Activation { Tanh, Relu, Identity };

Mat activate(Activation act, const Mat& z);
// Derivative expressed through the activation output `a`.
Mat activation_grad(Activation act, const Mat& a, const Mat& da);

class Mlp {
 public:
  struct Tape {
    const Mlp* owner = nullptr;
    std::int64_t version = -1;
    std::vector<Mat> inputs;   // input of each layer
    std::vector<Mat> outputs;  // post-activation output of each hidden layer
  };

  Mlp() = default;
  // widths = {in, hidden..., out}; hidden layers use `act`, the last is linear.
  Mlp(const std::string& name, std::vector<Index> widths, std::uint64_t seed,
      Activation act = Activation::Tanh);

  Index in_width() const { return layers_.front().in_width(); }
  Index out_width() const { return layers_.back().out_width(); }
  const std::vector<Index>& widths() const { return widths_; }
  Activation activation() const { return act_; }

  Mat forward(const Mat& x, Tape* tape) const;
  Mat backward(const Tape& tape, const Mat& dy);
  void collect(ParamRefs& out);

  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::int64_t version() const { return layers_.front().weight.step_count; }

  std::vector<Index> widths_;
  Activation act_ = Activation::Tanh;
  std::vector<Linear> layers_;
};

}  // namespace darlr::nn
