#pragma once

#include <chrono>
#include <memory>
#include <nlohmann/json.hpp>
#include <unordered_map>

#include "motionrag/cama.hpp"
#include "motionrag/checkpoint.hpp"
#include "motionrag/corpus.hpp"
#include "motionrag/encoders.hpp"
#include "motionrag/generator.hpp"
#include "motionrag/motion_fit.hpp"
#include "motionrag/retrieval.hpp"

namespace motionrag::pipe {

// Every hyperparameter of the run in one structured config; serializable to
// and from a JSON file.
struct RunConfig {
  // corpus
  uint64_t corpus_seed = 7;
  int corpus_n = 2000;
  int frames = 8, height = 32, width = 32;
  std::string vocab = "default";
  // encoders (fixed featurization, shared by all stages)
  uint64_t encoder_seed = 1234;
  int patch = 8;
  int d_enc = 64;
  // retrieval
  int d_e = 256;
  int k = 9;
  // resamplers (motion, generator-side image, CAMA image)
  int tokens = 8;  // L
  int dim = 64;    // d
  int res_layers = 2, res_heads = 4, res_ff = 256;
  // motion context transformer
  int mct_layers = 2, mct_heads = 4, mct_ff = 256, max_seq = 512;
  bool pair_own_motion = false;  // alternative sequence reading
  // generator; the beta range is chosen so alpha_bar decays to ~1e-4 by the
  // final step, matching the sampler's pure-Gaussian starting point
  int t_diff = 50;
  double beta_min = 0.01, beta_max = 0.35;
  int gen_blocks = 3, d_model = 64, gen_heads = 4, gen_ff = 256;
  int sample_steps = 10;
  int adapter_dim = 64, adapter_heads = 4;
  double adapter_scale = 1.0;
  // training
  int stage1_steps = 5000, stage1_batch = 4;
  double stage1_lr = 1e-3;
  int stage2_steps = 2500, stage2_batch = 8;
  double stage2_lr = 1e-3;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8, weight_decay = 0.0;
  // evaluation
  double heldout_fraction = 0.1;
  int eval_count = 50;
  uint64_t eval_seed = 2024;
  uint64_t rand_strategy_seed = 555;
  // run
  uint64_t seed = 1;
  std::string precision = "f64";  // f64 (test) | f32 (fast)
  int threads = 2;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::filesystem::path& path);
};

// ---- adaptation strategies -------------------------------------------------

enum class StrategyKind { NoMotion, Top1, AvgK, MctK, RandomK, MctRandomK, Oracle };

struct AdaptationStrategy {
  StrategyKind kind = StrategyKind::NoMotion;
  int k = 9;
  uint64_t seed = 0;  // random-pick stream for RandomK / MctRandomK

  std::string name() const;
  // "nomotion" | "top1" | "avg-K" | "mct-K" | "rand-K" | "mct-rand-K" | "oracle"
  static AdaptationStrategy parse(const std::string& text, uint64_t rand_seed);
};

// Table 3/4 row set: baseline, top-1, avg/mct at k in {5,9}, random context
// rows, oracle ceiling.
std::vector<AdaptationStrategy> ablation_strategies(uint64_t rand_seed);

// ---- trained system ----------------------------------------------------------

template <class S>
struct System {
  RunConfig cfg;
  gen::NoiseSchedule schedule;
  std::unique_ptr<enc::VideoEncoder<S>> video_enc;
  std::unique_ptr<enc::ImageEncoder<S>> image_enc;
  std::unique_ptr<rsmp::Resampler<S>> motion_res;    // trained in stage 1
  std::unique_ptr<gen::Denoiser<S>> denoiser;        // trained in stage 1 (incl. adapters)
  std::unique_ptr<rsmp::Resampler<S>> cama_img_res;  // trained in stage 2
  std::unique_ptr<cama::Mct<S>> mct;                 // trained in stage 2
  int stage = 0;  // highest stage whose weights are trained

  static System make(const RunConfig& cfg) {
    cfg.validate();
    System s;
    s.cfg = cfg;
    s.schedule = gen::NoiseSchedule::linear(cfg.t_diff, cfg.beta_min, cfg.beta_max);
    enc::EncoderConfig ec{cfg.patch, cfg.d_enc, cfg.encoder_seed};
    s.video_enc = std::make_unique<enc::VideoEncoder<S>>(ec);
    s.image_enc = std::make_unique<enc::ImageEncoder<S>>(ec);

    rsmp::ResamplerConfig rc;
    rc.tokens = cfg.tokens;
    rc.dim = cfg.dim;
    rc.input_dim = cfg.d_enc;
    rc.layers = cfg.res_layers;
    rc.heads = cfg.res_heads;
    rc.d_ff = cfg.res_ff;
    s.motion_res = std::make_unique<rsmp::Resampler<S>>(rc, "motion_res", Rng::fork(cfg.seed, 10));
    s.cama_img_res =
        std::make_unique<rsmp::Resampler<S>>(rc, "cama_img_res", Rng::fork(cfg.seed, 12));

    gen::DenoiserConfig dc;
    dc.frames = cfg.frames;
    dc.height = cfg.height;
    dc.width = cfg.width;
    dc.patch = cfg.patch;
    dc.d_model = cfg.d_model;
    dc.blocks = cfg.gen_blocks;
    dc.heads = cfg.gen_heads;
    dc.d_ff = cfg.gen_ff;
    dc.img_dim = cfg.d_enc;
    dc.motion_dim = cfg.dim;
    dc.adapter.d_attn = cfg.adapter_dim;
    dc.adapter.heads = cfg.adapter_heads;
    dc.adapter.scale = cfg.adapter_scale;
    s.denoiser = std::make_unique<gen::Denoiser<S>>(dc, "denoiser", Rng::fork(cfg.seed, 11));

    cama::MctConfig mc;
    mc.tokens = cfg.tokens;
    mc.dim = cfg.dim;
    mc.layers = cfg.mct_layers;
    mc.heads = cfg.mct_heads;
    mc.d_ff = cfg.mct_ff;
    mc.max_seq = cfg.max_seq;
    s.mct = std::make_unique<cama::Mct<S>>(mc, "mct", Rng::fork(cfg.seed, 13));
    return s;
  }

  nn::ParamList<S> stage1_params() {
    nn::ParamList<S> out;
    motion_res->collect(out);
    denoiser->collect(out);
    return out;
  }
  nn::ParamList<S> stage2_params() {
    nn::ParamList<S> out;
    cama_img_res->collect(out);
    mct->collect(out);
    return out;
  }
  nn::ParamList<S> all_params() {
    nn::ParamList<S> out = stage1_params();
    for (auto* p : stage2_params()) out.push_back(p);
    return out;
  }

  void save(const std::filesystem::path& path) {
    nlohmann::json meta;
    meta["stage"] = stage;
    meta["config"] = cfg.to_json();
    meta["stage1_hash"] = nn::hash_params(stage1_params());
    ckpt::save_checkpoint<S>(path, all_params(), meta);
  }

  static System load(const std::filesystem::path& path) {
    const nlohmann::json meta = ckpt::peek_checkpoint(path);
    System s = make(RunConfig::from_json(meta.at("config")));
    ckpt::load_checkpoint<S>(path, s.all_params());
    s.stage = meta.at("stage").get<int>();
    return s;
  }
};

// ---- cached frozen features ---------------------------------------------------

template <class S>
struct FeatureBank {
  std::vector<nn::Mat<S>> video_feats;  // dense temporal-difference features
  std::vector<nn::Mat<S>> image_feats;  // dense frame-0 features
  std::vector<nn::Mat<S>> x0_tokens;    // clip in diffusion token form
  std::unordered_map<std::string, size_t> id_to_pos;

  static FeatureBank build(const corpus::Corpus& c, const enc::VideoEncoder<S>& ve,
                           const enc::ImageEncoder<S>& ie, int threads) {
    FeatureBank b;
    const size_t n = c.size();
    b.video_feats.resize(n);
    b.image_feats.resize(n);
    b.x0_tokens.resize(n);
    parallel_for(static_cast<int>(n), threads, [&](int i) {
      const VideoTensor v = c.frames(c.entry_at(i).id);
      b.video_feats[i] = ve.encode(v);
      b.image_feats[i] = ie.encode(v, 0);
      b.x0_tokens[i] = enc::video_to_patches<S>(v, ve.config().patch);
    });
    for (size_t i = 0; i < n; ++i) b.id_to_pos[c.entry_at(i).id] = i;
    return b;
  }
};

// Seeded 90/10-style partition of corpus positions.
struct Split {
  std::vector<size_t> train, held;
};
Split split_corpus(size_t n, double heldout_fraction, uint64_t seed);

// Caption index over the training split only.
template <class S>
retrieval::RetrievalIndex build_train_index(const corpus::Corpus& c, const Split& split,
                                            int d_e) {
  std::vector<retrieval::RetrievalRecord> records;
  records.reserve(split.train.size());
  for (size_t pos : split.train) {
    const auto& e = c.entry_at(pos);
    records.push_back({e.id, retrieval::embed_caption(e.caption, d_e), e.caption});
  }
  return retrieval::build_index(std::move(records));
}

// ---- stage 2 -------------------------------------------------------------------

// Trains the MCT and the CAMA image resampler against frozen motion-resampler
// targets; every stage-1 parameter is hash-checked unchanged.
template <class S>
gen::TrainStats stage2_train(System<S>& sys, const corpus::Corpus& corpus,
                             const FeatureBank<S>& bank, const Split& split,
                             const retrieval::RetrievalIndex& index, const gen::StageConfig& cfg,
                             const std::function<void(int, double)>& on_step = nullptr) {
  require(sys.stage >= 1, Err::CheckpointMismatch, "stage 2 requires stage-1 weights");
  require(!index.records.empty(), Err::IndexMissing, "stage 2 requires a retrieval index");
  const uint64_t frozen_before = nn::hash_params(sys.stage1_params());

  // frozen per-video motion tokens and retrieval lists
  const size_t n_train = split.train.size();
  std::vector<nn::Mat<S>> motion_tokens(n_train);
  std::vector<std::vector<size_t>> context(n_train);  // corpus positions, rank 1 first
  parallel_for(static_cast<int>(n_train), cfg.threads, [&](int i) {
    const size_t pos = split.train[i];
    typename rsmp::Resampler<S>::Cache rc;
    motion_tokens[i] = sys.motion_res->forward(bank.video_feats[pos], rc);
    const auto& entry = corpus.entry_at(pos);
    const std::set<std::string> self{entry.id};
    const auto hits =
        retrieval::retrieve_top_k(index, {entry.caption, sys.cfg.k}, &self);
    for (const auto& h : hits) context[i].push_back(bank.id_to_pos.at(h.record->id));
  });
  std::unordered_map<size_t, size_t> train_slot;  // corpus pos -> dense slot
  for (size_t i = 0; i < n_train; ++i) train_slot[split.train[i]] = i;

  nn::ParamList<S> trained;
  sys.cama_img_res->collect(trained);
  sys.mct->collect(trained);
  nn::Adam<S> opt(cfg.adam, trained);

  const int workers = std::max(1, cfg.threads);
  struct Replica {
    std::unique_ptr<rsmp::Resampler<S>> res;
    std::unique_ptr<cama::Mct<S>> mct;
    nn::ParamList<S> params;
  };
  std::vector<Replica> reps(workers);
  for (auto& r : reps) {
    r.res = std::make_unique<rsmp::Resampler<S>>(*sys.cama_img_res);
    r.mct = std::make_unique<cama::Mct<S>>(*sys.mct);
    r.res->collect(r.params);
    r.mct->collect(r.params);
  }

  gen::TrainStats stats;
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
      const size_t i = rng.uniform_int(n_train);
      const size_t target_pos = split.train[i];

      std::vector<cama::ContextExample<S>> examples(context[i].size());
      std::vector<typename rsmp::Resampler<S>::Cache> app_caches(context[i].size());
      for (size_t e = 0; e < context[i].size(); ++e) {
        const size_t pos = context[i][e];
        examples[e].appearance = r.res->forward(bank.image_feats[pos], app_caches[e]);
        examples[e].motion = motion_tokens[train_slot.at(pos)];
      }
      typename rsmp::Resampler<S>::Cache target_cache;
      const nn::Mat<S> target_app = r.res->forward(bank.image_feats[target_pos], target_cache);
      const auto seq =
          cama::build_sequence<S>(examples, target_app, sys.cfg.pair_own_motion);

      typename cama::Mct<S>::Cache mc;
      const auto out = r.mct->forward(seq, mc);
      const nn::Mat<S>& target_motion = motion_tokens[i];
      slot_loss[slot] = static_cast<double>(cama::transfer_loss(out.motion_pred, target_motion));

      const nn::Mat<S> d_pred =
          cama::transfer_loss_grad(out.motion_pred, target_motion) / static_cast<S>(cfg.batch);
      const auto input_grads = r.mct->backward(mc, d_pred);
      // segment s < K holds example rank K-s; the last segment is the target
      const int k_ctx = static_cast<int>(examples.size());
      for (int s = 0; s < k_ctx; ++s)
        r.res->backward(app_caches[k_ctx - 1 - s], input_grads.segment[s], nullptr);
      r.res->backward(target_cache, input_grads.segment[k_ctx], nullptr);
    });

    for (auto& r : reps)
      for (size_t i = 0; i < trained.size(); ++i) trained[i]->grad += r.params[i]->grad;
    opt.step();

    double loss = 0.0;
    for (int b = 0; b < cfg.batch; ++b) loss += slot_loss[b];
    stats.losses[step] = loss / cfg.batch;
    if (on_step) on_step(step, stats.losses[step]);
  }

  require(nn::hash_params(sys.stage1_params()) == frozen_before, Err::CheckpointMismatch,
          "stage-1 parameters changed during stage 2");
  sys.stage = 2;
  return stats;
}

// ---- adaptation -----------------------------------------------------------------

template <class S>
struct AdaptContext {
  System<S>* sys = nullptr;
  const retrieval::RetrievalIndex* index = nullptr;
  const corpus::Corpus* corpus = nullptr;
  const FeatureBank<S>* bank = nullptr;            // optional feature fast path
  const std::set<std::string>* exclude = nullptr;  // e.g. the target id during training-style use
};

// Deterministic k distinct picks from the index (candidates ordered as stored).
std::vector<size_t> random_picks(size_t n_records, const std::vector<char>& excluded, int k,
                                 uint64_t seed, uint64_t salt);

template <class S>
nn::Mat<S> motion_tokens_for(const AdaptContext<S>& ctx, const std::string& id) {
  typename rsmp::Resampler<S>::Cache rc;
  if (ctx.bank) {
    const auto it = ctx.bank->id_to_pos.find(id);
    if (it != ctx.bank->id_to_pos.end())
      return ctx.sys->motion_res->forward(ctx.bank->video_feats[it->second], rc);
  }
  return ctx.sys->motion_res->forward(ctx.sys->video_enc->encode(ctx.corpus->frames(id)), rc);
}

template <class S>
nn::Mat<S> appearance_tokens_for(const AdaptContext<S>& ctx, rsmp::Resampler<S>& resampler,
                                 const std::string& id) {
  typename rsmp::Resampler<S>::Cache rc;
  if (ctx.bank) {
    const auto it = ctx.bank->id_to_pos.find(id);
    if (it != ctx.bank->id_to_pos.end())
      return resampler.forward(ctx.bank->image_feats[it->second], rc);
  }
  return resampler.forward(ctx.sys->image_enc->encode(ctx.corpus->frames(id), 0), rc);
}

// Maps retrieved or random exemplars to a motion condition per the strategy.
// `salt` decorrelates random picks across queries; Oracle requires the ground
// truth clip and is an evaluation-only path.
template <class S>
std::optional<nn::Mat<S>> adapt_motion(const AdaptationStrategy& strat, const VideoTensor& image,
                                       const std::string& prompt, const AdaptContext<S>& ctx,
                                       const VideoTensor* oracle_video = nullptr,
                                       uint64_t salt = 0) {
  auto& sys = *ctx.sys;
  const auto avg_of = [&](const std::vector<std::string>& ids) {
    nn::Mat<S> acc = nn::Mat<S>::Zero(sys.cfg.tokens, sys.cfg.dim);
    for (const auto& id : ids) acc += motion_tokens_for(ctx, id);
    return nn::Mat<S>(acc / static_cast<S>(ids.size()));
  };
  const auto mct_of = [&](const std::vector<std::string>& ids) {
    require(sys.stage >= 2, Err::CheckpointMismatch,
            "MCT strategies need stage-2 weights");
    std::vector<cama::ContextExample<S>> examples(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
      examples[i].appearance = appearance_tokens_for(ctx, *sys.cama_img_res, ids[i]);
      examples[i].motion = motion_tokens_for(ctx, ids[i]);
    }
    typename rsmp::Resampler<S>::Cache rc;
    const nn::Mat<S> target_app = sys.cama_img_res->forward(sys.image_enc->encode(image, 0), rc);
    const auto seq = cama::build_sequence<S>(examples, target_app, sys.cfg.pair_own_motion);
    typename cama::Mct<S>::Cache mc;
    return sys.mct->forward(seq, mc).motion_pred;
  };
  const auto retrieved_ids = [&](int k) {
    const auto hits = retrieval::retrieve_top_k(*ctx.index, {prompt, k}, ctx.exclude);
    std::vector<std::string> ids;
    for (const auto& h : hits) ids.push_back(h.record->id);
    return ids;
  };
  const auto random_ids = [&](int k) {
    std::vector<char> excluded(ctx.index->records.size(), 0);
    if (ctx.exclude)
      for (size_t i = 0; i < ctx.index->records.size(); ++i)
        if (ctx.exclude->count(ctx.index->records[i].id)) excluded[i] = 1;
    const auto picks = random_picks(ctx.index->records.size(), excluded, k, strat.seed, salt);
    std::vector<std::string> ids;
    for (size_t p : picks) ids.push_back(ctx.index->records[p].id);
    return ids;
  };

  switch (strat.kind) {
    case StrategyKind::NoMotion:
      return std::nullopt;
    case StrategyKind::Top1:
      return motion_tokens_for(ctx, retrieved_ids(1).front());
    case StrategyKind::AvgK:
      return avg_of(retrieved_ids(strat.k));
    case StrategyKind::MctK:
      return mct_of(retrieved_ids(strat.k));
    case StrategyKind::RandomK:
      return avg_of(random_ids(strat.k));
    case StrategyKind::MctRandomK:
      return mct_of(random_ids(strat.k));
    case StrategyKind::Oracle:
      require(oracle_video != nullptr, Err::OracleUnavailable,
              "oracle strategy needs the ground-truth clip");
      {
        typename rsmp::Resampler<S>::Cache rc;
        return sys.motion_res->forward(sys.video_enc->encode(*oracle_video), rc);
      }
  }
  return std::nullopt;
}

// ---- inference --------------------------------------------------------------------

template <class S>
struct InferResult {
  VideoTensor video;
  std::optional<nn::Mat<S>> motion;
  double adapt_ms = 0.0;  // retrieve + adapt wall clock
};

template <class S>
InferResult<S> infer(const VideoTensor& image, const std::string& prompt,
                     const AdaptationStrategy& strat, const AdaptContext<S>& ctx,
                     uint64_t sample_seed, const VideoTensor* oracle_video = nullptr,
                     uint64_t salt = 0) {
  auto& sys = *ctx.sys;
  require(sys.stage >= 1, Err::CheckpointMismatch, "inference needs stage-1 weights");
  const auto t0 = std::chrono::steady_clock::now();
  InferResult<S> out;
  out.motion = adapt_motion(strat, image, prompt, ctx, oracle_video, salt);
  out.adapt_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  const nn::Mat<S> img_tokens = sys.image_enc->encode(image, 0);
  out.video = gen::sample(*sys.denoiser, sys.schedule, img_tokens,
                          out.motion ? &*out.motion : nullptr, sys.cfg.sample_steps, sample_seed);
  return out;
}

// ---- evaluation --------------------------------------------------------------------

struct StrategyRow {
  std::string name;
  double mean_motion_err = 0.0;
  double mean_pixel_mse = 0.0;
  double mean_token_l2 = 0.0;
  bool token_l2_defined = false;
  double mean_adapt_ms = 0.0;
  int count = 0;
  std::vector<double> motion_err, pixel_mse, token_l2;  // per video
};

struct EvalReport {
  std::vector<std::string> video_ids;
  std::vector<StrategyRow> rows;
  uint64_t eval_seed = 0;

  const StrategyRow& row(const std::string& name) const;
  std::string to_table() const;
  std::string to_jsonl() const;  // machine-readable, one record per row
};

void write_report(const EvalReport& report, const std::filesystem::path& dir);

// Generates with each strategy on the held-out set at per-video fixed seeds
// and scores motion recovery, pixel MSE against the true render, and
// token-space distance to the oracle motion tokens.
template <class S>
EvalReport evaluate(System<S>& sys, const corpus::Corpus& corpus, const FeatureBank<S>& bank,
                    const Split& split, const retrieval::RetrievalIndex& index,
                    const std::vector<AdaptationStrategy>& strategies, int eval_count,
                    uint64_t eval_seed, int threads) {
  require(!split.held.empty(), Err::ConfigInvalid, "empty held-out split");
  const int n = std::min<int>(eval_count, static_cast<int>(split.held.size()));

  EvalReport report;
  report.eval_seed = eval_seed;
  for (int v = 0; v < n; ++v) report.video_ids.push_back(corpus.entry_at(split.held[v]).id);
  report.rows.resize(strategies.size());
  for (size_t s = 0; s < strategies.size(); ++s) {
    auto& row = report.rows[s];
    row.name = strategies[s].name();
    row.count = n;
    row.motion_err.resize(n);
    row.pixel_mse.resize(n);
    row.token_l2.assign(n, 0.0);
  }
  std::vector<double> adapt_ms(static_cast<size_t>(n) * strategies.size(), 0.0);

  parallel_for(n, threads, [&](int v) {
    const size_t pos = split.held[v];
    const auto& entry = corpus.entry_at(pos);
    const VideoTensor truth = enc::patches_to_video(
        bank.x0_tokens[pos], sys.cfg.frames, sys.cfg.height, sys.cfg.width, sys.cfg.patch);
    VideoTensor image(1, truth.height, truth.width);
    std::copy(truth.data.begin(),
              truth.data.begin() + static_cast<size_t>(truth.height) * truth.width * 3,
              image.data.begin());

    typename rsmp::Resampler<S>::Cache rc;
    const nn::Mat<S> oracle_tokens =
        sys.motion_res->forward(bank.video_feats[pos], rc);

    AdaptContext<S> ctx;
    ctx.sys = &sys;
    ctx.index = &index;
    ctx.corpus = &corpus;
    ctx.bank = &bank;
    const std::set<std::string> self{entry.id};
    ctx.exclude = &self;

    const uint64_t vid_salt = binio::fnv1a64(entry.id);
    const uint64_t sample_seed = eval_seed ^ vid_salt;

    for (size_t s = 0; s < strategies.size(); ++s) {
      auto& row = report.rows[s];
      const auto result =
          infer(image, entry.caption, strategies[s], ctx, sample_seed, &truth, vid_salt);
      adapt_ms[static_cast<size_t>(v) * strategies.size() + s] = result.adapt_ms;
      row.pixel_mse[v] = pixel_mse(result.video, truth);
      double err = 1.0;  // NoForeground or fit failure scores the maximum
      try {
        const auto fitted = fit::estimate_motion(result.video);
        err = fit::motion_error(entry.motion, fitted.spec);
      } catch (const Error& e) {
        if (e.code() != Err::NoForeground) throw;
      }
      row.motion_err[v] = err;
      if (result.motion)
        row.token_l2[v] = static_cast<double>(
            (*result.motion - oracle_tokens).template cast<double>().norm());
    }
  });

  for (size_t s = 0; s < strategies.size(); ++s) {
    auto& row = report.rows[s];
    double me = 0, pm = 0, tl = 0, ms = 0;
    for (int v = 0; v < n; ++v) {
      me += row.motion_err[v];
      pm += row.pixel_mse[v];
      tl += row.token_l2[v];
      ms += adapt_ms[static_cast<size_t>(v) * strategies.size() + s];
    }
    row.mean_motion_err = me / n;
    row.mean_pixel_mse = pm / n;
    row.token_l2_defined = strategies[s].kind != StrategyKind::NoMotion;
    row.mean_token_l2 = row.token_l2_defined ? tl / n : 0.0;
    row.mean_adapt_ms = ms / n;
  }
  return report;
}

// One command over the full Table-3/4 row set.
template <class S>
EvalReport ablate(System<S>& sys, const corpus::Corpus& corpus, const FeatureBank<S>& bank,
                  const Split& split, const retrieval::RetrievalIndex& index) {
  require(sys.stage >= 2, Err::CheckpointMismatch, "ablation needs fully trained checkpoints");
  return evaluate(sys, corpus, bank, split, index,
                  ablation_strategies(sys.cfg.rand_strategy_seed), sys.cfg.eval_count,
                  sys.cfg.eval_seed, sys.cfg.threads);
}

}  // namespace motionrag::pipe
