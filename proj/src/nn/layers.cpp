#include "darlr/nn/layers.hpp"

#include "darlr/error.hpp"

namespace darlr::nn {

Linear::Linear(const std::string& name, Index in, Index out, std::uint64_t seed)
    : weight(name + ".weight", out, in), bias(name + ".bias", out, 1) {
  glorot_init(weight, seed);
}

Mat Linear::forward(const Mat& x) const {
  if (x.rows() != weight.cols()) {
    throw Error("shape mismatch in " + weight.name + ": expected input width " +
                std::to_string(weight.cols()) + ", got " + std::to_string(x.rows()));
  }
  Mat y = weight.value * x;
  y.colwise() += bias.value.col(0);
  return y;
}

Mat Linear::backward(const Mat& x, const Mat& dy) {
  weight.grad.noalias() += dy * x.transpose();
  bias.grad.col(0) += dy.rowwise().sum();
  return weight.value.transpose() * dy;
}

void Linear::collect(ParamRefs& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

LayerNorm::LayerNorm(const std::string& name, Index width)
    : gain(name + ".gain", width, 1), shift(name + ".shift", width, 1) {
  gain.value.setOnes();
}

Mat LayerNorm::forward(const Mat& x, Tape* tape) const {
  const Index d = x.rows();
  Mat y(x.rows(), x.cols());
  Mat normalized(x.rows(), x.cols());
  Vec inv_std(x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    const Vec centered = x.col(c).array() - mean;
    const double var = centered.squaredNorm() / static_cast<double>(d);
    inv_std(c) = 1.0 / std::sqrt(var + kEps);
    normalized.col(c) = centered * inv_std(c);
    y.col(c) = normalized.col(c).cwiseProduct(gain.value.col(0)) + shift.value.col(0);
  }
  if (tape) {
    tape->normalized = std::move(normalized);
    tape->inv_std = std::move(inv_std);
  }
  return y;
}

Mat LayerNorm::backward(const Tape& tape, const Mat& dy) {
  const Mat& xhat = tape.normalized;
  gain.grad.col(0) += dy.cwiseProduct(xhat).rowwise().sum();
  shift.grad.col(0) += dy.rowwise().sum();
  Mat dx(dy.rows(), dy.cols());
  const double d = static_cast<double>(dy.rows());
  for (Index c = 0; c < dy.cols(); ++c) {
    const Vec dxhat = dy.col(c).cwiseProduct(gain.value.col(0));
    const double mean_dxhat = dxhat.sum() / d;
    const double mean_dxhat_xhat = dxhat.dot(xhat.col(c)) / d;
    dx.col(c) = tape.inv_std(c) *
                (dxhat.array() - mean_dxhat - xhat.col(c).array() * mean_dxhat_xhat).matrix();
  }
  return dx;
}

void LayerNorm::collect(ParamRefs& out) {
  out.push_back(&gain);
  out.push_back(&shift);
}

Mat activate(Activation act, const Mat& z) {
  switch (act) {
    case Activation::Tanh:
      return z.array().tanh().matrix();
    case Activation::Relu:
      return z.cwiseMax(0.0);
    case Activation::Identity:
      return z;
  }
  return z;
}

Mat activation_grad(Activation act, const Mat& a, const Mat& da) {
  switch (act) {
    case Activation::Tanh:
      return (da.array() * (1.0 - a.array().square())).matrix();
    case Activation::Relu:
      return (da.array() * (a.array() > 0.0).cast<double>()).matrix();
    case Activation::Identity:
      return da;
  }
  return da;
}

Mlp::Mlp(const std::string& name, std::vector<Index> widths, std::uint64_t seed, Activation act)
    : widths_(std::move(widths)), act_(act) {
  if (widths_.size() < 2) throw Error("mlp " + name + " needs at least input and output widths");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    layers_.emplace_back(name + ".l" + std::to_string(l), widths_[l], widths_[l + 1], seed);
  }
}

Mat Mlp::forward(const Mat& x, Tape* tape) const {
  if (x.rows() != in_width()) {
    throw Error("shape mismatch: mlp expects input width " + std::to_string(in_width()) +
                ", got " + std::to_string(x.rows()));
  }
  if (tape) {
    tape->owner = this;
    tape->version = version();
    tape->inputs.clear();
    tape->outputs.clear();
  }
  Mat h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (tape) tape->inputs.push_back(h);
    Mat z = layers_[l].forward(h);
    if (l + 1 == layers_.size()) return z;
    h = activate(act_, z);
    if (tape) tape->outputs.push_back(h);
  }
  return h;
}

Mat Mlp::backward(const Tape& tape, const Mat& dy) {
  if (tape.owner != this || tape.version != version() || tape.inputs.size() != layers_.size()) {
    throw Error("stale tape: mlp backward called with a tape from another forward state");
  }
  Mat grad = dy;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (l + 1 < layers_.size()) grad = activation_grad(act_, tape.outputs[l], grad);
    grad = layers_[l].backward(tape.inputs[l], grad);
  }
  return grad;
}

void Mlp::collect(ParamRefs& out) {
  for (Linear& layer : layers_) layer.collect(out);
}

}  // namespace darlr::nn
