#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "darlr/nn/layers.hpp"

namespace darlr::nn {

struct SeqEncoderConfig {
  Index width = 32;   // model width d
  Index heads = 1;
  Index layers = 1;
  Index window = 5;   // maximum number of tokens
  Index ff_width = 0; // 0 = 2 * width
};

// Pre-norm causal self-attention stack over a short token window. A sequence
// of T <= window tokens receives the last T positional offsets, so the newest
// token always sits at position window-1. The encoding is the last column.
class SeqEncoder {
 public:
  struct LayerTape {
    Mat input;
    LayerNorm::Tape ln1;
    Mat normed1, q, k, v;
    std::vector<Mat> attention;  // per head, T x T, row = query position
    Mat heads_out;
    Mat mid;
    LayerNorm::Tape ln2;
    Mat normed2, hidden;
  };
  struct Tape {
    const SeqEncoder* owner = nullptr;
    std::int64_t version = -1;
    Index length = 0;
    std::vector<LayerTape> layers;
  };

  SeqEncoder() = default;
  SeqEncoder(const std::string& name, const SeqEncoderConfig& cfg, std::uint64_t seed);

  const SeqEncoderConfig& config() const { return cfg_; }
  Index width() const { return cfg_.width; }
  Index window() const { return cfg_.window; }

  // tokens: width x T with 1 <= T <= window.
  Vec encode(const Mat& tokens, Tape* tape) const;
  // Accumulates parameter gradients; returns d(loss)/d(tokens).
  Mat backward(const Tape& tape, const Vec& d_encoding);
  void collect(ParamRefs& out);

  // Zeroes the value/output projections and the feed-forward output so each
  // layer reduces to its residual path.
  void zero_residual_branches();
  ParamBlock& positions() { return positions_; }

 private:
  struct Layer {
    LayerNorm ln1;
    Linear query, key, value, out;
    LayerNorm ln2;
    Linear ff_in, ff_out;
  };

  std::int64_t version() const { return positions_.step_count; }

  SeqEncoderConfig cfg_;
  ParamBlock positions_;  // width x window
  std::vector<Layer> layers_;
};

}  // namespace darlr::nn
