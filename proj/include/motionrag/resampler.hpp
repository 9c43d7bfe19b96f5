#pragma once

#include "motionrag/nn.hpp"

namespace motionrag::rsmp {

struct ResamplerConfig {
  int tokens = 8;    // L
  int dim = 64;      // d
  int input_dim = 64;
  int layers = 2;
  int heads = 4;
  int d_ff = 256;
  double init_scale = 0.02;
};

// L learned queries cross-attend over a variable-length input set and come
// out as exactly L tokens. Pre-norm residual blocks; keys/values are taken
// from the raw inputs (positional content lives in the encoder outputs).
template <class S>
class Resampler {
 public:
  Resampler(const ResamplerConfig& cfg, const std::string& name, Rng rng) : cfg_(cfg) {
    queries_.setup(name + ".queries", cfg.tokens, cfg.dim);
    queries_.init_normal(rng, cfg.init_scale);
    layers_.resize(cfg.layers);
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string ln = name + ".layer" + std::to_string(l);
      layers_[l].ln_attn.init(ln + ".ln_attn", cfg.dim);
      layers_[l].attn.init(ln + ".attn", cfg.dim, cfg.input_dim, cfg.dim, cfg.heads, rng,
                           cfg.init_scale);
      layers_[l].ln_ff.init(ln + ".ln_ff", cfg.dim);
      layers_[l].ff.init(ln + ".ff", cfg.dim, cfg.d_ff, rng, cfg.init_scale);
    }
  }

  struct Cache {
    nn::Mat<S> inputs;
    struct LayerCache {
      nn::Mat<S> x_in;  // query block entering the layer
      typename nn::LayerNorm<S>::Cache ln_attn;
      typename nn::Mha<S>::Cache attn;
      nn::Mat<S> x_mid;
      typename nn::LayerNorm<S>::Cache ln_ff;
      typename nn::FeedForward<S>::Cache ff;
    };
    std::vector<LayerCache> layers;
  };

  // inputs: N x input_dim, N >= 1. Returns L x d.
  nn::Mat<S> forward(const nn::Mat<S>& inputs, Cache& c) const {
    require(inputs.rows() >= 1, Err::ShapeMismatch, "resampler needs at least one input token");
    require(inputs.cols() == cfg_.input_dim, Err::ShapeMismatch,
            "resampler input dim " + std::to_string(inputs.cols()) + ", expected " +
                std::to_string(cfg_.input_dim));
    c.inputs = inputs;
    c.layers.resize(layers_.size());
    nn::Mat<S> x = queries_.value;
    for (size_t l = 0; l < layers_.size(); ++l) {
      auto& lc = c.layers[l];
      const auto& ly = layers_[l];
      lc.x_in = x;
      x += ly.attn.forward(ly.ln_attn.forward(x, lc.ln_attn), inputs, nullptr, lc.attn);
      lc.x_mid = x;
      x += ly.ff.forward(ly.ln_ff.forward(x, lc.ln_ff), lc.ff);
    }
    return x;
  }

  // Accumulates parameter grads; d_inputs (if given) is accumulated into.
  void backward(Cache& c, const nn::Mat<S>& d_out, nn::Mat<S>* d_inputs) {
    nn::Mat<S> dx = d_out;
    for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
      auto& lc = c.layers[l];
      auto& ly = layers_[l];
      {
        nn::Mat<S> d_normed = nn::Mat<S>::Zero(lc.x_mid.rows(), lc.x_mid.cols());
        ly.ff.backward(lc.ff, dx, &d_normed);
        ly.ln_ff.backward(lc.ln_ff, d_normed, &dx);  // residual: dx passes through
      }
      {
        nn::Mat<S> d_normed = nn::Mat<S>::Zero(lc.x_in.rows(), lc.x_in.cols());
        ly.attn.backward(lc.attn, dx, &d_normed, d_inputs);
        ly.ln_attn.backward(lc.ln_attn, d_normed, &dx);
      }
    }
    queries_.grad += dx;
  }

  void collect(nn::ParamList<S>& out) {
    out.push_back(&queries_);
    for (auto& ly : layers_) {
      ly.ln_attn.collect(out);
      ly.attn.collect(out);
      ly.ln_ff.collect(out);
      ly.ff.collect(out);
    }
  }

  const ResamplerConfig& config() const { return cfg_; }

 private:
  struct Layer {
    nn::LayerNorm<S> ln_attn;
    nn::Mha<S> attn;
    nn::LayerNorm<S> ln_ff;
    nn::FeedForward<S> ff;
  };

  ResamplerConfig cfg_;
  nn::Param<S> queries_;
  std::vector<Layer> layers_;
};

}  // namespace motionrag::rsmp
