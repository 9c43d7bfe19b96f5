#pragma once

#include <functional>

#include "motionrag/encoders.hpp"
#include "motionrag/nn.hpp"
#include "motionrag/parallel.hpp"
#include "motionrag/resampler.hpp"
#include "motionrag/sinusoid.hpp"

namespace motionrag::gen {

struct NoiseSchedule {
  int t_diff = 0;
  std::vector<double> betas;
  std::vector<double> alpha_bar;

  static NoiseSchedule linear(int steps = 50, double beta_min = 1e-4, double beta_max = 0.02) {
    require(steps >= 1, Err::ConfigInvalid, "schedule needs at least one step");
    require(beta_min > 0.0 && beta_max < 1.0 && beta_min <= beta_max, Err::ConfigInvalid,
            "betas must satisfy 0 < beta_min <= beta_max < 1");
    NoiseSchedule s;
    s.t_diff = steps;
    s.betas.resize(steps);
    s.alpha_bar.resize(steps);
    double prod = 1.0;
    for (int t = 0; t < steps; ++t) {
      s.betas[t] = steps == 1 ? beta_min : beta_min + (beta_max - beta_min) * t / (steps - 1);
      prod *= 1.0 - s.betas[t];
      s.alpha_bar[t] = prod;
    }
    return s;
  }
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise
template <class S>
nn::Mat<S> forward_diffuse(const nn::Mat<S>& x0, int t, const nn::Mat<S>& noise,
                           const NoiseSchedule& sched) {
  require(t >= 0 && t < sched.t_diff, Err::StepOutOfRange,
          "t = " + std::to_string(t) + " outside [0, " + std::to_string(sched.t_diff) + ")");
  require(x0.rows() == noise.rows() && x0.cols() == noise.cols(), Err::ShapeMismatch,
          "noise shape must match x0");
  const S a = static_cast<S>(std::sqrt(sched.alpha_bar[t]));
  const S b = static_cast<S>(std::sqrt(1.0 - sched.alpha_bar[t]));
  return a * x0 + b * noise;
}

struct AdapterConfig {
  int d_model = 64;
  int d_motion = 64;
  int d_attn = 64;
  int heads = 4;
  double scale = 1.0;
};

// Residual cross-attention injection: Z' = Z + s * Attn(Z Wq, M Wk, M Wv) Wo.
// Wo starts at zero so the injection is an exact identity until trained.
template <class S>
class MotionAdapter {
 public:
  void init(const std::string& name, const AdapterConfig& cfg, Rng& rng, double init_scale) {
    require(cfg.d_attn % cfg.heads == 0, Err::ConfigInvalid,
            "adapter attention dim must be divisible by heads");
    cfg_ = cfg;
    wq_.setup(name + ".wq", cfg.d_model, cfg.d_attn);
    wq_.init_normal(rng, init_scale);
    wk_.setup(name + ".wk", cfg.d_motion, cfg.d_attn);
    wk_.init_normal(rng, init_scale);
    wv_.setup(name + ".wv", cfg.d_motion, cfg.d_attn);
    wv_.init_normal(rng, init_scale);
    wo_.setup(name + ".wo", cfg.d_attn, cfg.d_model);  // zero-initialized
  }

  struct Cache {
    nn::Mat<S> z, m;
    nn::Mat<S> q, k, v;
    std::vector<nn::Mat<S>> attn;
    nn::Mat<S> ctx;
  };

  nn::Mat<S> forward(const nn::Mat<S>& z, const nn::Mat<S>& motion, Cache& c) const {
    require(z.cols() == cfg_.d_model, Err::ShapeMismatch, "adapter d_model mismatch");
    require(motion.cols() == cfg_.d_motion, Err::ShapeMismatch, "adapter motion dim mismatch");
    c.z = z;
    c.m = motion;
    c.q.noalias() = z * wq_.value;
    c.k.noalias() = motion * wk_.value;
    c.v.noalias() = motion * wv_.value;
    const int dh = cfg_.d_attn / cfg_.heads;
    const S sc = S(1) / std::sqrt(static_cast<S>(dh));
    c.attn.assign(cfg_.heads, nn::Mat<S>());
    c.ctx.setZero(z.rows(), cfg_.d_attn);
    for (int h = 0; h < cfg_.heads; ++h) {
      auto qh = c.q.middleCols(h * dh, dh);
      auto kh = c.k.middleCols(h * dh, dh);
      auto vh = c.v.middleCols(h * dh, dh);
      nn::Mat<S>& a = c.attn[h];
      a.noalias() = qh * kh.transpose();
      a *= sc;
      for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const S mx = a.row(i).maxCoeff();
        a.row(i) = (a.row(i).array() - mx).exp();
        a.row(i) = (a.row(i).array() < S(nn::kAttnFlush)).select(S(0), a.row(i));
        a.row(i) /= a.row(i).sum();
      }
      c.ctx.middleCols(h * dh, dh).noalias() = a * vh;
    }
    return z + static_cast<S>(cfg_.scale) * (c.ctx * wo_.value);
  }

  // dz is accumulated (includes the residual path); d_motion likewise.
  void backward(Cache& c, const nn::Mat<S>& d_out, nn::Mat<S>* dz, nn::Mat<S>* d_motion) {
    const S s = static_cast<S>(cfg_.scale);
    if (dz) *dz += d_out;
    wo_.grad.noalias() += s * c.ctx.transpose() * d_out;
    nn::Mat<S> dctx = s * (d_out * wo_.value.transpose());

    const int dh = cfg_.d_attn / cfg_.heads;
    const S sc = S(1) / std::sqrt(static_cast<S>(dh));
    nn::Mat<S> dq = nn::Mat<S>::Zero(c.q.rows(), cfg_.d_attn);
    nn::Mat<S> dk = nn::Mat<S>::Zero(c.k.rows(), cfg_.d_attn);
    nn::Mat<S> dv = nn::Mat<S>::Zero(c.v.rows(), cfg_.d_attn);
    for (int h = 0; h < cfg_.heads; ++h) {
      auto qh = c.q.middleCols(h * dh, dh);
      auto kh = c.k.middleCols(h * dh, dh);
      auto vh = c.v.middleCols(h * dh, dh);
      const nn::Mat<S>& a = c.attn[h];
      auto dctx_h = dctx.middleCols(h * dh, dh);
      nn::Mat<S> da = dctx_h * vh.transpose();
      dv.middleCols(h * dh, dh).noalias() = a.transpose() * dctx_h;
      nn::Mat<S> ds(a.rows(), a.cols());
      for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const S dot = a.row(i).cwiseProduct(da.row(i)).sum();
        ds.row(i) = a.row(i).cwiseProduct((da.row(i).array() - dot).matrix());
      }
      dq.middleCols(h * dh, dh).noalias() = sc * (ds * kh);
      dk.middleCols(h * dh, dh).noalias() = sc * (ds.transpose() * qh);
    }
    wq_.grad.noalias() += c.z.transpose() * dq;
    wk_.grad.noalias() += c.m.transpose() * dk;
    wv_.grad.noalias() += c.m.transpose() * dv;
    if (dz) dz->noalias() += dq * wq_.value.transpose();
    if (d_motion) {
      d_motion->noalias() += dk * wk_.value.transpose();
      d_motion->noalias() += dv * wv_.value.transpose();
    }
  }

  void collect(nn::ParamList<S>& out) {
    out.push_back(&wq_);
    out.push_back(&wk_);
    out.push_back(&wv_);
    out.push_back(&wo_);
  }

  const AdapterConfig& config() const { return cfg_; }
  nn::Param<S>& output_projection() { return wo_; }

 private:
  AdapterConfig cfg_;
  nn::Param<S> wq_, wk_, wv_, wo_;
};

struct DenoiserConfig {
  int frames = 8, height = 32, width = 32, patch = 8;
  int d_model = 64;
  int blocks = 3;
  int heads = 4;
  int d_ff = 256;
  int img_dim = 64;     // width of the image-condition tokens (encoder features)
  int motion_dim = 64;  // width of the motion tokens fed to the adapters
  AdapterConfig adapter;
  double init_scale = 0.02;

  int tokens_per_frame() const { return (height / patch) * (width / patch); }
  int total_tokens() const { return frames * tokens_per_frame(); }
  int patch_dim() const { return patch * patch * 3; }
};

// Toy x0-predicting video denoiser. Each block: spatio-temporal
// self-attention, image cross-attention, motion-adapter slot, feed-forward;
// pre-norm residuals throughout.
template <class S>
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& cfg, const std::string& name, Rng rng) : cfg_(cfg) {
    require(cfg.height % cfg.patch == 0 && cfg.width % cfg.patch == 0, Err::ConfigInvalid,
            "frame dims must be divisible by the patch size");
    cfg_.adapter.d_model = cfg.d_model;
    cfg_.adapter.d_motion = cfg.motion_dim;

    patch_embed_.init(name + ".patch_embed", cfg_.patch_dim(), cfg_.d_model, rng,
                      1.0 / std::sqrt(static_cast<double>(cfg_.patch_dim())));
    time_fc1_.init(name + ".time_fc1", cfg_.d_model, cfg_.d_model, rng,
                   1.0 / std::sqrt(static_cast<double>(cfg_.d_model)));
    time_fc2_.init(name + ".time_fc2", cfg_.d_model, cfg_.d_model, rng,
                   1.0 / std::sqrt(static_cast<double>(cfg_.d_model)));
    blocks_.resize(cfg_.blocks);
    for (int i = 0; i < cfg_.blocks; ++i) {
      const std::string bn = name + ".block" + std::to_string(i);
      auto& b = blocks_[i];
      b.ln_sa.init(bn + ".ln_sa", cfg_.d_model);
      b.sa.init(bn + ".sa", cfg_.d_model, cfg_.d_model, cfg_.d_model, cfg_.heads, rng,
                cfg_.init_scale);
      b.ln_ca.init(bn + ".ln_ca", cfg_.d_model);
      b.ca.init(bn + ".ca", cfg_.d_model, cfg_.img_dim, cfg_.d_model, cfg_.heads, rng,
                cfg_.init_scale);
      b.adapter.init(bn + ".adapter", cfg_.adapter, rng, cfg_.init_scale);
      b.ln_ff.init(bn + ".ln_ff", cfg_.d_model);
      b.ff.init(bn + ".ff", cfg_.d_model, cfg_.d_ff, rng, cfg_.init_scale);
    }
    ln_out_.init(name + ".ln_out", cfg_.d_model);
    out_proj_.init(name + ".out_proj", cfg_.d_model, cfg_.patch_dim(), rng, cfg_.init_scale);

    // fixed (t, y, x) positions plus a timestep sinusoid table
    const int hp = cfg_.height / cfg_.patch, wp = cfg_.width / cfg_.patch;
    pos_ = nn::Mat<S>::Zero(cfg_.total_tokens(), cfg_.d_model);
    const int third = cfg_.d_model / 3;
    for (int t = 0; t < cfg_.frames; ++t)
      for (int py = 0; py < hp; ++py)
        for (int px = 0; px < wp; ++px) {
          const int row = (t * hp + py) * wp + px;
          add_sinusoid_slice(pos_, row, 0, third, t);
          add_sinusoid_slice(pos_, row, third, third, py);
          add_sinusoid_slice(pos_, row, 2 * third, cfg_.d_model - 2 * third, px);
        }
  }

  struct Cache {
    nn::Mat<S> x_patches;  // raw x_t tokens
    int t = 0;
    nn::Mat<S> temb_in, temb_pre, temb_act, temb;  // 1 x d_model stages
    nn::Mat<S> x_embedded;
    struct BlockCache {
      nn::Mat<S> x_in;
      typename nn::LayerNorm<S>::Cache ln_sa;
      typename nn::Mha<S>::Cache sa;
      nn::Mat<S> x_sa;
      typename nn::LayerNorm<S>::Cache ln_ca;
      typename nn::Mha<S>::Cache ca;
      nn::Mat<S> x_ca;
      bool has_motion = false;
      typename MotionAdapter<S>::Cache adapter;
      nn::Mat<S> x_ad;
      typename nn::LayerNorm<S>::Cache ln_ff;
      typename nn::FeedForward<S>::Cache ff;
    };
    std::vector<BlockCache> blocks;
    nn::Mat<S> x_final;
    typename nn::LayerNorm<S>::Cache ln_out;
    nn::Mat<S> normed_out;
    nn::Mat<S> img_tokens;
  };

  // x_t: total_tokens x patch_dim. img_tokens: N_i x img_dim (the frozen
  // frame-0 features). motion: L x motion_dim or nullptr (adapter sites are
  // skipped entirely).
  nn::Mat<S> forward(const nn::Mat<S>& x_t, int t, const nn::Mat<S>& img_tokens,
                     const nn::Mat<S>* motion, Cache& c) const {
    require(x_t.rows() == cfg_.total_tokens() && x_t.cols() == cfg_.patch_dim(),
            Err::ShapeMismatch, "x_t token block has the wrong shape");
    require(img_tokens.cols() == cfg_.img_dim, Err::ShapeMismatch,
            "image condition width mismatch");
    if (motion)
      require(motion->cols() == cfg_.motion_dim, Err::ShapeMismatch,
              "motion condition width mismatch");

    c.x_patches = x_t;
    c.t = t;
    c.img_tokens = img_tokens;
    c.temb_in = sinusoid_table<S>(t + 1, cfg_.d_model).row(t);
    c.temb_pre = time_fc1_.forward(c.temb_in);
    c.temb_act = nn::gelu(c.temb_pre);
    c.temb = time_fc2_.forward(c.temb_act);

    nn::Mat<S> x = patch_embed_.forward(x_t);
    x += pos_;
    x.rowwise() += c.temb.row(0);
    c.x_embedded = x;

    c.blocks.resize(blocks_.size());
    for (size_t i = 0; i < blocks_.size(); ++i) {
      const auto& b = blocks_[i];
      auto& bc = c.blocks[i];
      bc.x_in = x;
      {
        const nn::Mat<S> normed = b.ln_sa.forward(x, bc.ln_sa);
        x += b.sa.forward(normed, normed, nullptr, bc.sa);
      }
      bc.x_sa = x;
      x += b.ca.forward(b.ln_ca.forward(x, bc.ln_ca), img_tokens, nullptr, bc.ca);
      bc.x_ca = x;
      if (motion) {
        bc.has_motion = true;
        x = b.adapter.forward(x, *motion, bc.adapter);
      }
      bc.x_ad = x;
      x += b.ff.forward(b.ln_ff.forward(x, bc.ln_ff), bc.ff);
    }
    c.x_final = x;
    c.normed_out = ln_out_.forward(x, c.ln_out);
    return out_proj_.forward(c.normed_out);
  }

  // Accumulates parameter grads; d_motion / d_img (if non-null) are
  // accumulated into.
  void backward(Cache& c, const nn::Mat<S>& d_xhat, nn::Mat<S>* d_motion,
                nn::Mat<S>* d_img = nullptr) {
    nn::Mat<S> dx = nn::Mat<S>::Zero(c.x_final.rows(), c.x_final.cols());
    {
      nn::Mat<S> d_normed = nn::Mat<S>::Zero(c.normed_out.rows(), c.normed_out.cols());
      out_proj_.backward(c.normed_out, d_xhat, &d_normed);
      ln_out_.backward(c.ln_out, d_normed, &dx);
    }
    for (int i = static_cast<int>(blocks_.size()) - 1; i >= 0; --i) {
      auto& b = blocks_[i];
      auto& bc = c.blocks[i];
      {
        nn::Mat<S> d_normed = nn::Mat<S>::Zero(bc.x_ad.rows(), bc.x_ad.cols());
        b.ff.backward(bc.ff, dx, &d_normed);
        b.ln_ff.backward(bc.ln_ff, d_normed, &dx);
      }
      if (bc.has_motion) {
        nn::Mat<S> dz = nn::Mat<S>::Zero(bc.x_ca.rows(), bc.x_ca.cols());
        b.adapter.backward(bc.adapter, dx, &dz, d_motion);
        dx = std::move(dz);
      }
      {
        nn::Mat<S> d_normed = nn::Mat<S>::Zero(bc.x_sa.rows(), bc.x_sa.cols());
        b.ca.backward(bc.ca, dx, &d_normed, d_img);
        b.ln_ca.backward(bc.ln_ca, d_normed, &dx);
      }
      {
        nn::Mat<S> d_normed = nn::Mat<S>::Zero(bc.x_in.rows(), bc.x_in.cols());
        b.sa.backward(bc.sa, dx, &d_normed, &d_normed);
        b.ln_sa.backward(bc.ln_sa, d_normed, &dx);
      }
    }
    // embedding stage: x = patch_embed(x_t) + pos + temb
    {
      nn::Mat<S> d_temb = dx.colwise().sum();
      nn::Mat<S> d_temb_act = nn::Mat<S>::Zero(1, cfg_.d_model);
      time_fc2_.backward(c.temb_act, d_temb, &d_temb_act);
      nn::Mat<S> d_temb_pre = d_temb_act.cwiseProduct(nn::gelu_grad(c.temb_pre));
      time_fc1_.backward(c.temb_in, d_temb_pre, nullptr);
    }
    patch_embed_.backward(c.x_patches, dx, nullptr);
  }

  void collect(nn::ParamList<S>& out) {
    patch_embed_.collect(out);
    time_fc1_.collect(out);
    time_fc2_.collect(out);
    for (auto& b : blocks_) {
      b.ln_sa.collect(out);
      b.sa.collect(out);
      b.ln_ca.collect(out);
      b.ca.collect(out);
      b.adapter.collect(out);
      b.ln_ff.collect(out);
      b.ff.collect(out);
    }
    ln_out_.collect(out);
    out_proj_.collect(out);
  }

  void collect_adapters(nn::ParamList<S>& out) {
    for (auto& b : blocks_) b.adapter.collect(out);
  }

  const DenoiserConfig& config() const { return cfg_; }

 private:
  struct Block {
    nn::LayerNorm<S> ln_sa;
    nn::Mha<S> sa;
    nn::LayerNorm<S> ln_ca;
    nn::Mha<S> ca;
    MotionAdapter<S> adapter;
    nn::LayerNorm<S> ln_ff;
    nn::FeedForward<S> ff;
  };

  DenoiserConfig cfg_;
  nn::Linear<S> patch_embed_;
  nn::Linear<S> time_fc1_, time_fc2_;
  std::vector<Block> blocks_;
  nn::LayerNorm<S> ln_out_;
  nn::Linear<S> out_proj_;
  nn::Mat<S> pos_;
};

// Deterministic DDIM-style sampler with x0 parameterization; zero stochastic
// term, final frames clipped to [0,1].
inline std::vector<int> sample_timesteps(int t_diff, int steps) {
  require(steps >= 1, Err::ConfigInvalid, "need at least one sampling step");
  std::vector<int> ts;
  if (steps == 1) {
    ts.push_back(t_diff - 1);
    return ts;
  }
  for (int k = 0; k < steps; ++k) {
    const int t = static_cast<int>(std::lround(static_cast<double>(t_diff - 1) *
                                               (steps - 1 - k) / (steps - 1)));
    if (ts.empty() || ts.back() != t) ts.push_back(t);
  }
  return ts;
}

template <class S>
VideoTensor sample(const Denoiser<S>& den, const NoiseSchedule& sched,
                   const nn::Mat<S>& img_tokens, const nn::Mat<S>* motion, int steps,
                   uint64_t seed) {
  const auto& cfg = den.config();
  Rng rng = Rng::fork(seed, 0);
  nn::Mat<S> x(cfg.total_tokens(), cfg.patch_dim());
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<S>(rng.normal());

  const std::vector<int> ts = sample_timesteps(sched.t_diff, steps);
  typename Denoiser<S>::Cache cache;
  nn::Mat<S> xhat;
  for (size_t k = 0; k < ts.size(); ++k) {
    const int t = ts[k];
    xhat = den.forward(x, t, img_tokens, motion, cache);
    if (k + 1 < ts.size()) {
      const S a_t = static_cast<S>(std::sqrt(sched.alpha_bar[t]));
      const S b_t = static_cast<S>(std::sqrt(1.0 - sched.alpha_bar[t]));
      const S a_p = static_cast<S>(std::sqrt(sched.alpha_bar[ts[k + 1]]));
      const S b_p = static_cast<S>(std::sqrt(1.0 - sched.alpha_bar[ts[k + 1]]));
      const nn::Mat<S> eps = (x - a_t * xhat) / b_t;
      x = a_p * xhat + b_p * eps;
    } else {
      x = xhat;
    }
  }
  x = x.cwiseMax(S(0)).cwiseMin(S(1));
  return enc::patches_to_video(x, cfg.frames, cfg.height, cfg.width, cfg.patch);
}

// ---- stage-1 training -------------------------------------------------------

// Views into caller-owned feature storage.
template <class S>
struct Stage1Item {
  const nn::Mat<S>* video_feat = nullptr;  // frozen dense motion features
  const nn::Mat<S>* x0_tokens = nullptr;   // clean clip in token form
  const nn::Mat<S>* image_feat = nullptr;  // frozen dense frame-0 features
};

struct StageConfig {
  int steps = 4000;
  int batch = 4;
  nn::AdamConfig adam;
  uint64_t seed = 1;
  int threads = 1;
};

struct TrainStats {
  std::vector<double> losses;

  double smoothed_initial() const { return window_mean(0); }
  double smoothed_final() const {
    const int w = window();
    return window_mean(static_cast<int>(losses.size()) - w);
  }
  int window() const {
    return std::max(10, static_cast<int>(losses.size()) / 100);
  }
  double window_mean(int start) const {
    const int w = std::min<int>(window(), static_cast<int>(losses.size()));
    start = std::max(0, std::min<int>(start, static_cast<int>(losses.size()) - w));
    double s = 0.0;
    for (int i = start; i < start + w; ++i) s += losses[i];
    return s / w;
  }
};

// Joint training of denoiser, adapters and motion resampler on ground-truth
// clips: MSE between the denoised prediction and the clean clip. The image
// conditioning is the frozen frame-0 feature block. Deterministic for a
// given (seed, threads): per-slot RNG streams, ordered gradient reduction
// over model replicas.
template <class S>
TrainStats stage1_train(const std::vector<Stage1Item<S>>& items,
                        rsmp::Resampler<S>& motion_res, Denoiser<S>& den,
                        const NoiseSchedule& sched, const StageConfig& cfg,
                        const std::function<void(int, double)>& on_step = nullptr) {
  require(items.size() >= 100, Err::CorpusTooSmall,
          "stage 1 needs at least 100 videos, got " + std::to_string(items.size()));

  nn::ParamList<S> trained;
  motion_res.collect(trained);
  den.collect(trained);
  nn::Adam<S> opt(cfg.adam, trained);

  const int workers = std::max(1, cfg.threads);
  struct Replica {
    std::unique_ptr<rsmp::Resampler<S>> res;
    std::unique_ptr<Denoiser<S>> den;
    nn::ParamList<S> params;
  };
  std::vector<Replica> reps(workers);
  for (auto& r : reps) {
    r.res = std::make_unique<rsmp::Resampler<S>>(motion_res);
    r.den = std::make_unique<Denoiser<S>>(den);
    r.res->collect(r.params);
    r.den->collect(r.params);
  }

  TrainStats stats;
  stats.losses.resize(cfg.steps);
  std::vector<double> slot_loss(cfg.batch);

  for (int step = 0; step < cfg.steps; ++step) {
    for (auto& r : reps)
      for (size_t i = 0; i < trained.size(); ++i) {
        r.params[i]->value = trained[i]->value;
        r.params[i]->grad.setZero();
      }
    nn::zero_grads(trained);
    parallel_for(cfg.batch, workers, [&](int slot) {
      Replica& r = reps[slot % workers];
      Rng rng = Rng::fork(cfg.seed, static_cast<uint64_t>(step) * cfg.batch + slot);
      const auto& item = items[rng.uniform_int(items.size())];
      const nn::Mat<S>& x0 = *item.x0_tokens;
      const int t = static_cast<int>(rng.uniform_int(sched.t_diff));
      nn::Mat<S> noise(x0.rows(), x0.cols());
      for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = static_cast<S>(rng.normal());

      typename rsmp::Resampler<S>::Cache rc;
      const nn::Mat<S> motion_tokens = r.res->forward(*item.video_feat, rc);
      const nn::Mat<S> x_t = forward_diffuse(x0, t, noise, sched);
      typename Denoiser<S>::Cache dc;
      const nn::Mat<S> xhat = r.den->forward(x_t, t, *item.image_feat, &motion_tokens, dc);

      const nn::Mat<S> err = xhat - x0;
      slot_loss[slot] = static_cast<double>(err.squaredNorm()) / err.size();
      const nn::Mat<S> d_xhat =
          err * (S(2) / (static_cast<S>(err.size()) * static_cast<S>(cfg.batch)));
      nn::Mat<S> d_motion = nn::Mat<S>::Zero(motion_tokens.rows(), motion_tokens.cols());
      r.den->backward(dc, d_xhat, &d_motion);
      r.res->backward(rc, d_motion, nullptr);
    });
    for (auto& r : reps)
      for (size_t i = 0; i < trained.size(); ++i) trained[i]->grad += r.params[i]->grad;
    opt.step();

    double loss = 0.0;
    for (int b = 0; b < cfg.batch; ++b) loss += slot_loss[b];
    stats.losses[step] = loss / cfg.batch;
    if (on_step) on_step(step, stats.losses[step]);
  }
  return stats;
}

}  // namespace motionrag::gen
