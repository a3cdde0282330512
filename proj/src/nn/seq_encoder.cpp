#include "darlr/nn/seq_encoder.hpp"

#include <cmath>
#include <limits>

#include "darlr/error.hpp"

namespace darlr::nn {

SeqEncoder::SeqEncoder(const std::string& name, const SeqEncoderConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), positions_(name + ".positions", cfg.width, cfg.window) {
  if (cfg_.heads < 1 || cfg_.width % cfg_.heads != 0) {
    throw Error("seq encoder " + name + ": width must be divisible by heads");
  }
  if (cfg_.window < 1 || cfg_.layers < 1) throw Error("seq encoder " + name + ": bad window/layers");
  if (cfg_.ff_width == 0) cfg_.ff_width = 2 * cfg_.width;
  glorot_init(positions_, seed);
  const Index d = cfg_.width;
  for (Index l = 0; l < cfg_.layers; ++l) {
    const std::string p = name + ".layer" + std::to_string(l);
    layers_.push_back(Layer{LayerNorm(p + ".ln1", d), Linear(p + ".query", d, d, seed),
                            Linear(p + ".key", d, d, seed), Linear(p + ".value", d, d, seed),
                            Linear(p + ".out", d, d, seed), LayerNorm(p + ".ln2", d),
                            Linear(p + ".ff_in", d, cfg_.ff_width, seed),
                            Linear(p + ".ff_out", cfg_.ff_width, d, seed)});
  }
}

namespace {

// Row-wise causal softmax of scores (query rows, key columns).
Mat causal_softmax(const Mat& scores) {
  const Index t = scores.rows();
  Mat a = Mat::Zero(t, t);
  for (Index i = 0; i < t; ++i) {
    const double mx = scores.row(i).head(i + 1).maxCoeff();
    double total = 0.0;
    for (Index j = 0; j <= i; ++j) {
      a(i, j) = std::exp(scores(i, j) - mx);
      total += a(i, j);
    }
    a.row(i).head(i + 1) /= total;
  }
  return a;
}

}  // namespace

Vec SeqEncoder::encode(const Mat& tokens, Tape* tape) const {
  const Index t = tokens.cols();
  if (t < 1) throw Error("seq encoder: empty token list");
  if (t > cfg_.window) throw Error("seq encoder: more tokens than the window holds");
  if (tokens.rows() != cfg_.width) throw Error("seq encoder: token width mismatch");

  const Index d = cfg_.width;
  const Index dh = d / cfg_.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  if (tape) {
    tape->owner = this;
    tape->version = version();
    tape->length = t;
    tape->layers.assign(layers_.size(), LayerTape{});
  }

  Mat x = tokens + positions_.value.rightCols(t);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    LayerTape local;
    LayerTape& lt = tape ? tape->layers[l] : local;
    lt.input = x;
    lt.normed1 = layer.ln1.forward(x, &lt.ln1);
    lt.q = layer.query.forward(lt.normed1);
    lt.k = layer.key.forward(lt.normed1);
    lt.v = layer.value.forward(lt.normed1);
    lt.heads_out.resize(d, t);
    lt.attention.resize(static_cast<std::size_t>(cfg_.heads));
    for (Index h = 0; h < cfg_.heads; ++h) {
      const auto qh = lt.q.middleRows(h * dh, dh);
      const auto kh = lt.k.middleRows(h * dh, dh);
      const auto vh = lt.v.middleRows(h * dh, dh);
      Mat scores = scale * (qh.transpose() * kh);
      lt.attention[h] = causal_softmax(scores);
      lt.heads_out.middleRows(h * dh, dh) = vh * lt.attention[h].transpose();
    }
    lt.mid = x + layer.out.forward(lt.heads_out);
    lt.normed2 = layer.ln2.forward(lt.mid, &lt.ln2);
    lt.hidden = activate(Activation::Tanh, layer.ff_in.forward(lt.normed2));
    x = lt.mid + layer.ff_out.forward(lt.hidden);
  }
  return x.col(t - 1);
}

Mat SeqEncoder::backward(const Tape& tape, const Vec& d_encoding) {
  if (tape.owner != this || tape.version != version() || tape.layers.size() != layers_.size()) {
    throw Error("stale tape: seq encoder backward called with a tape from another forward state");
  }
  const Index t = tape.length;
  const Index d = cfg_.width;
  const Index dh = d / cfg_.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Mat dx = Mat::Zero(d, t);
  dx.col(t - 1) = d_encoding;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    Layer& layer = layers_[l];
    const LayerTape& lt = tape.layers[l];

    // x_out = mid + ff_out(tanh(ff_in(ln2(mid))))
    Mat dmid = dx;
    Mat dhidden = layer.ff_out.backward(lt.hidden, dx);
    Mat dpre = activation_grad(Activation::Tanh, lt.hidden, dhidden);
    Mat dnormed2 = layer.ff_in.backward(lt.normed2, dpre);
    dmid += layer.ln2.backward(lt.ln2, dnormed2);

    // mid = x + out(attention(ln1(x)))
    Mat dinput = dmid;
    Mat dheads = layer.out.backward(lt.heads_out, dmid);
    Mat dq(d, t), dk(d, t), dv(d, t);
    for (Index h = 0; h < cfg_.heads; ++h) {
      const Mat& a = lt.attention[h];
      const auto vh = lt.v.middleRows(h * dh, dh);
      const auto doh = dheads.middleRows(h * dh, dh);
      dv.middleRows(h * dh, dh) = doh * a;
      const Mat da = doh.transpose() * vh;
      Mat ds = Mat::Zero(t, t);
      for (Index i = 0; i < t; ++i) {
        const double inner = a.row(i).head(i + 1).dot(da.row(i).head(i + 1));
        for (Index j = 0; j <= i; ++j) ds(i, j) = a(i, j) * (da(i, j) - inner);
      }
      dq.middleRows(h * dh, dh) = scale * (lt.k.middleRows(h * dh, dh) * ds.transpose());
      dk.middleRows(h * dh, dh) = scale * (lt.q.middleRows(h * dh, dh) * ds);
    }
    Mat dnormed1 = layer.query.backward(lt.normed1, dq);
    dnormed1 += layer.key.backward(lt.normed1, dk);
    dnormed1 += layer.value.backward(lt.normed1, dv);
    dinput += layer.ln1.backward(lt.ln1, dnormed1);
    dx = std::move(dinput);
  }
  positions_.grad.rightCols(t) += dx;
  return dx;
}

void SeqEncoder::collect(ParamRefs& out) {
  out.push_back(&positions_);
  for (Layer& layer : layers_) {
    layer.ln1.collect(out);
    layer.query.collect(out);
    layer.key.collect(out);
    layer.value.collect(out);
    layer.out.collect(out);
    layer.ln2.collect(out);
    layer.ff_in.collect(out);
    layer.ff_out.collect(out);
  }
}

void SeqEncoder::zero_residual_branches() {
  for (Layer& layer : layers_) {
    for (Linear* lin : {&layer.value, &layer.out, &layer.ff_out}) {
      lin->weight.value.setZero();
      lin->bias.value.setZero();
    }
  }
}

}  // namespace darlr::nn
