#pragma once

#include <optional>

#include "motionrag/nn.hpp"
#include "motionrag/sinusoid.hpp"

namespace motionrag::cama {

// allowed[i][j] iff segment(j) <= segment(i): full attention within a
// segment, none to later segments.
struct BlockCausalMask {
  std::vector<int> segment_lengths;
  std::vector<int> segment_of;  // token -> segment
  nn::BoolMask allowed;
};

inline BlockCausalMask build_block_causal_mask(const std::vector<int>& segment_lengths) {
  require(!segment_lengths.empty(), Err::EmptyContext, "no segments");
  int total = 0;
  for (int len : segment_lengths) {
    require(len >= 1, Err::ShapeMismatch, "segment lengths must be >= 1");
    total += len;
  }
  BlockCausalMask m;
  m.segment_lengths = segment_lengths;
  m.segment_of.reserve(total);
  for (size_t s = 0; s < segment_lengths.size(); ++s)
    for (int i = 0; i < segment_lengths[s]; ++i) m.segment_of.push_back(static_cast<int>(s));
  m.allowed = nn::BoolMask(total, total);
  for (int i = 0; i < total; ++i)
    for (int j = 0; j < total; ++j)
      m.allowed.set(i, j, m.segment_of[j] <= m.segment_of[i]);
  return m;
}

// One retrieved exemplar: appearance tokens of its first frame plus motion
// tokens of the clip, both L x d.
template <class S>
struct ContextExample {
  nn::Mat<S> appearance;
  nn::Mat<S> motion;
};

// Segments in processing order [rank K, ..., rank 1, target]. A segment with
// no motion block reads the transformer's learned null-motion parameter.
template <class S>
struct ContextSequence {
  int tokens_per_segment = 0;  // L
  int dim = 0;                 // d
  struct Segment {
    nn::Mat<S> appearance;
    std::optional<nn::Mat<S>> motion;
  };
  std::vector<Segment> segments;

  int total_tokens() const {
    return static_cast<int>(segments.size()) * tokens_per_segment;
  }
  std::vector<int> segment_lengths() const {
    return std::vector<int>(segments.size(), tokens_per_segment);
  }
};

// examples[0] is the most relevant (rank 1). Default layout pairs segment n
// with the motion of the previously processed exemplar: rank-K gets the null
// block, rank n gets motion of rank n+1, the target gets rank 1's motion.
// pair_own_motion switches to the alternative reading where every exemplar
// carries its own motion and only the target segment reads the null block.
template <class S>
ContextSequence<S> build_sequence(const std::vector<ContextExample<S>>& examples,
                                  const nn::Mat<S>& target_appearance,
                                  bool pair_own_motion = false) {
  require(!examples.empty(), Err::EmptyContext, "need at least one context example");
  const Eigen::Index L = target_appearance.rows(), d = target_appearance.cols();
  require(L >= 1 && d >= 1, Err::ShapeMismatch, "empty target appearance block");
  for (const auto& e : examples) {
    require(e.appearance.rows() == L && e.appearance.cols() == d, Err::ShapeMismatch,
            "appearance block shape mismatch");
    require(e.motion.rows() == L && e.motion.cols() == d, Err::ShapeMismatch,
            "motion block shape mismatch");
  }

  const int k = static_cast<int>(examples.size());
  ContextSequence<S> seq;
  seq.tokens_per_segment = static_cast<int>(L);
  seq.dim = static_cast<int>(d);
  seq.segments.resize(k + 1);
  for (int pos = 0; pos < k; ++pos) {
    const int rank = k - pos;  // processing order K..1
    auto& seg = seq.segments[pos];
    seg.appearance = examples[rank - 1].appearance;
    if (pair_own_motion) {
      seg.motion = examples[rank - 1].motion;
    } else if (rank + 1 <= k) {
      seg.motion = examples[rank].motion;  // f_m(V_{n+1})
    }  // rank K: null block
  }
  auto& target = seq.segments[k];
  target.appearance = target_appearance;
  if (!pair_own_motion) target.motion = examples[0].motion;  // f_m(V_1)
  return seq;
}

// Mean squared error over all L*d entries.
template <class S>
S transfer_loss(const nn::Mat<S>& pred, const nn::Mat<S>& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), Err::ShapeMismatch,
          "transfer_loss shape mismatch");
  return (pred - target).squaredNorm() / static_cast<S>(pred.size());
}

template <class S>
nn::Mat<S> transfer_loss_grad(const nn::Mat<S>& pred, const nn::Mat<S>& target) {
  return (pred - target) * (S(2) / static_cast<S>(pred.size()));
}

struct MctConfig {
  int tokens = 8;  // L
  int dim = 64;    // d
  int layers = 2;
  int heads = 4;
  int d_ff = 256;
  int max_seq = 512;
  double init_scale = 0.02;
};

// Block-causal in-context transformer. Inputs per segment are
// appearance + motion (element-wise), plus a sinusoidal position table over
// the full sequence; the output head reads the last L positions.
template <class S>
class Mct {
 public:
  Mct(const MctConfig& cfg, const std::string& name, Rng rng) : cfg_(cfg) {
    null_motion_.setup(name + ".null_motion", cfg.tokens, cfg.dim);
    null_motion_.init_normal(rng, cfg.init_scale);
    layers_.resize(cfg.layers);
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string ln = name + ".layer" + std::to_string(l);
      layers_[l].ln_attn.init(ln + ".ln_attn", cfg.dim);
      layers_[l].attn.init(ln + ".attn", cfg.dim, cfg.dim, cfg.dim, cfg.heads, rng,
                           cfg.init_scale);
      layers_[l].ln_ff.init(ln + ".ln_ff", cfg.dim);
      layers_[l].ff.init(ln + ".ff", cfg.dim, cfg.d_ff, rng, cfg.init_scale);
    }
    head_.init(name + ".head", cfg.dim, cfg.dim, rng, cfg.init_scale);
    pos_ = sinusoid_table<S>(cfg.max_seq, cfg.dim);
  }

  struct Cache {
    BlockCausalMask mask;
    std::vector<bool> null_slot;
    nn::Mat<S> x0;  // inputs + positions
    struct LayerCache {
      nn::Mat<S> x_in;
      typename nn::LayerNorm<S>::Cache ln_attn;
      typename nn::Mha<S>::Cache attn;
      nn::Mat<S> x_mid;
      typename nn::LayerNorm<S>::Cache ln_ff;
      typename nn::FeedForward<S>::Cache ff;
      nn::Mat<S> x_out;
    };
    std::vector<LayerCache> layers;
    nn::Mat<S> head_in;  // last L rows of the final hidden states
  };

  struct Output {
    nn::Mat<S> hidden;       // total x d, final layer
    nn::Mat<S> motion_pred;  // L x d
  };

  Output forward(const ContextSequence<S>& seq, Cache& c) const {
    require(seq.tokens_per_segment == cfg_.tokens && seq.dim == cfg_.dim, Err::ShapeMismatch,
            "sequence block shape does not match the transformer");
    require(!seq.segments.empty(), Err::EmptyContext, "empty sequence");
    const int total = seq.total_tokens();
    require(total <= cfg_.max_seq, Err::ShapeMismatch,
            "sequence length " + std::to_string(total) + " exceeds max " +
                std::to_string(cfg_.max_seq));

    c.mask = build_block_causal_mask(seq.segment_lengths());
    c.null_slot.assign(seq.segments.size(), false);
    c.x0.resize(total, cfg_.dim);
    for (size_t s = 0; s < seq.segments.size(); ++s) {
      const auto& seg = seq.segments[s];
      auto rows = c.x0.middleRows(static_cast<Eigen::Index>(s) * cfg_.tokens, cfg_.tokens);
      rows = seg.appearance;
      if (seg.motion) {
        rows += *seg.motion;
      } else {
        rows += null_motion_.value;
        c.null_slot[s] = true;
      }
    }
    c.x0 += pos_.topRows(total);

    c.layers.resize(layers_.size());
    nn::Mat<S> x = c.x0;
    for (size_t l = 0; l < layers_.size(); ++l) {
      auto& lc = c.layers[l];
      const auto& ly = layers_[l];
      lc.x_in = x;
      const nn::Mat<S> normed = ly.ln_attn.forward(x, lc.ln_attn);
      x += ly.attn.forward(normed, normed, &c.mask.allowed, lc.attn);
      lc.x_mid = x;
      x += ly.ff.forward(ly.ln_ff.forward(x, lc.ln_ff), lc.ff);
      lc.x_out = x;
    }

    Output out;
    out.hidden = x;
    c.head_in = x.bottomRows(cfg_.tokens);
    out.motion_pred = head_.forward(c.head_in);
    return out;
  }

  // Per-segment input gradients (appearance and motion blocks receive the
  // same slice; null slots route into the null-motion parameter).
  struct InputGrads {
    std::vector<nn::Mat<S>> segment;  // d(loss)/d(segment input), L x d each
  };

  InputGrads backward(Cache& c, const nn::Mat<S>& d_motion_pred) {
    nn::Mat<S> dx = nn::Mat<S>::Zero(c.layers.back().x_out.rows(), cfg_.dim);
    {
      nn::Mat<S> d_head_in = nn::Mat<S>::Zero(cfg_.tokens, cfg_.dim);
      head_.backward(c.head_in, d_motion_pred, &d_head_in);
      dx.bottomRows(cfg_.tokens) += d_head_in;
    }
    for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
      auto& lc = c.layers[l];
      auto& ly = layers_[l];
      {
        nn::Mat<S> d_normed = nn::Mat<S>::Zero(lc.x_mid.rows(), lc.x_mid.cols());
        ly.ff.backward(lc.ff, dx, &d_normed);
        ly.ln_ff.backward(lc.ln_ff, d_normed, &dx);
      }
      {
        // q and kv share the normalized stream; both grads land in d_normed
        nn::Mat<S> d_normed = nn::Mat<S>::Zero(lc.x_in.rows(), lc.x_in.cols());
        ly.attn.backward(lc.attn, dx, &d_normed, &d_normed);
        ly.ln_attn.backward(lc.ln_attn, d_normed, &dx);
      }
    }

    InputGrads grads;
    grads.segment.resize(c.null_slot.size());
    for (size_t s = 0; s < c.null_slot.size(); ++s) {
      grads.segment[s] = dx.middleRows(static_cast<Eigen::Index>(s) * cfg_.tokens, cfg_.tokens);
      if (c.null_slot[s]) null_motion_.grad += grads.segment[s];
    }
    return grads;
  }

  void collect(nn::ParamList<S>& out) {
    out.push_back(&null_motion_);
    for (auto& ly : layers_) {
      ly.ln_attn.collect(out);
      ly.attn.collect(out);
      ly.ln_ff.collect(out);
      ly.ff.collect(out);
    }
    head_.collect(out);
  }

  const MctConfig& config() const { return cfg_; }
  const nn::Param<S>& null_motion() const { return null_motion_; }

 private:
  struct Layer {
    nn::LayerNorm<S> ln_attn;
    nn::Mha<S> attn;
    nn::LayerNorm<S> ln_ff;
    nn::FeedForward<S> ff;
  };

  MctConfig cfg_;
  nn::Param<S> null_motion_;
  std::vector<Layer> layers_;
  nn::Linear<S> head_;
  nn::Mat<S> pos_;
};

}  // namespace motionrag::cama
