#include <CLI11.hpp>
#include <iostream>

#include "motionrag/pipeline.hpp"

using namespace motionrag;

namespace {

pipe::RunConfig load_config(const std::string& path) {
  if (path.empty()) {
    pipe::RunConfig cfg;
    cfg.validate();
    return cfg;
  }
  return pipe::RunConfig::from_file(path);
}

template <class S>
std::vector<gen::Stage1Item<S>> stage1_items(const pipe::FeatureBank<S>& bank,
                                             const pipe::Split& split) {
  std::vector<gen::Stage1Item<S>> items(split.train.size());
  for (size_t i = 0; i < split.train.size(); ++i) {
    const size_t pos = split.train[i];
    items[i] = {&bank.video_feats[pos], &bank.x0_tokens[pos], &bank.image_feats[pos]};
  }
  return items;
}

struct TrainArgs {
  std::string corpus_dir, config_path, out_path, stage1_path, index_path;
  int steps_override = -1;
  int threads_override = -1;
};

template <class S>
int run_stage1(const pipe::RunConfig& cfg, const TrainArgs& args) {
  auto corpus = corpus::load_corpus(args.corpus_dir);
  auto sys = pipe::System<S>::make(cfg);
  const auto split = pipe::split_corpus(corpus.size(), cfg.heldout_fraction, cfg.seed);
  std::cerr << "featurizing " << corpus.size() << " videos...\n";
  const auto bank = pipe::FeatureBank<S>::build(corpus, *sys.video_enc, *sys.image_enc,
                                                cfg.threads);
  const auto items = stage1_items<S>(bank, split);

  gen::StageConfig sc;
  sc.steps = args.steps_override > 0 ? args.steps_override : cfg.stage1_steps;
  sc.batch = cfg.stage1_batch;
  sc.adam = {cfg.stage1_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay};
  sc.seed = cfg.seed;
  sc.threads = cfg.threads;
  const auto stats = gen::stage1_train<S>(items, *sys.motion_res, *sys.denoiser,
                                          sys.schedule, sc, [&](int step, double loss) {
                                            if (step % 200 == 0)
                                              std::cerr << "stage1 step " << step << " loss "
                                                        << loss << "\n";
                                          });
  sys.stage = 1;
  sys.save(args.out_path);
  std::cout << "stage1: steps " << sc.steps << ", smoothed loss "
            << stats.smoothed_initial() << " -> " << stats.smoothed_final() << "\n"
            << "checkpoint written to " << args.out_path << "\n";
  return 0;
}

template <class S>
int run_stage2(const TrainArgs& args) {
  auto sys = pipe::System<S>::load(args.stage1_path);
  if (args.threads_override > 0) sys.cfg.threads = args.threads_override;
  auto corpus = corpus::load_corpus(args.corpus_dir);
  const auto split = pipe::split_corpus(corpus.size(), sys.cfg.heldout_fraction, sys.cfg.seed);
  std::cerr << "featurizing " << corpus.size() << " videos...\n";
  const auto bank =
      pipe::FeatureBank<S>::build(corpus, *sys.video_enc, *sys.image_enc, sys.cfg.threads);
  retrieval::RetrievalIndex index =
      args.index_path.empty() ? pipe::build_train_index<S>(corpus, split, sys.cfg.d_e)
                              : retrieval::load_index(args.index_path);

  gen::StageConfig sc;
  sc.steps = args.steps_override > 0 ? args.steps_override : sys.cfg.stage2_steps;
  sc.batch = sys.cfg.stage2_batch;
  sc.adam = {sys.cfg.stage2_lr, sys.cfg.adam_beta1, sys.cfg.adam_beta2, sys.cfg.adam_eps,
             sys.cfg.weight_decay};
  sc.seed = sys.cfg.seed + 1;
  sc.threads = sys.cfg.threads;
  const auto stats =
      pipe::stage2_train<S>(sys, corpus, bank, split, index, sc, [&](int step, double loss) {
        if (step % 200 == 0) std::cerr << "stage2 step " << step << " loss " << loss << "\n";
      });
  sys.save(args.out_path);
  std::cout << "stage2: steps " << sc.steps << ", smoothed transfer loss "
            << stats.smoothed_initial() << " -> " << stats.smoothed_final() << "\n"
            << "checkpoint written to " << args.out_path << "\n";
  return 0;
}

struct EvalArgs {
  std::string corpus_dir, checkpoint, out_dir, strategies, index_path;
  bool full_ablation = false;
};

template <class S>
int run_eval(const EvalArgs& args) {
  auto sys = pipe::System<S>::load(args.checkpoint);
  auto corpus = corpus::load_corpus(args.corpus_dir);
  const auto split = pipe::split_corpus(corpus.size(), sys.cfg.heldout_fraction, sys.cfg.seed);
  const auto bank =
      pipe::FeatureBank<S>::build(corpus, *sys.video_enc, *sys.image_enc, sys.cfg.threads);
  retrieval::RetrievalIndex index =
      args.index_path.empty() ? pipe::build_train_index<S>(corpus, split, sys.cfg.d_e)
                              : retrieval::load_index(args.index_path);

  std::vector<pipe::AdaptationStrategy> strategies;
  if (args.full_ablation || args.strategies.empty()) {
    strategies = pipe::ablation_strategies(sys.cfg.rand_strategy_seed);
  } else {
    std::stringstream ss(args.strategies);
    std::string tok;
    while (std::getline(ss, tok, ','))
      strategies.push_back(pipe::AdaptationStrategy::parse(tok, sys.cfg.rand_strategy_seed));
  }
  const auto report = pipe::evaluate<S>(sys, corpus, bank, split, index, strategies,
                                        sys.cfg.eval_count, sys.cfg.eval_seed, sys.cfg.threads);
  if (!args.out_dir.empty()) pipe::write_report(report, args.out_dir);
  std::cout << report.to_table();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MotionRAG desk-scale pipeline"};
  app.require_subcommand(1);

  // build-corpus
  auto* cmd_corpus = app.add_subcommand("build-corpus", "generate a synthetic video corpus");
  uint64_t bc_seed = 7;
  int bc_count = 2000, bc_frames = 8, bc_size = 32, bc_threads = 2;
  std::string bc_out, bc_vocab = "default";
  cmd_corpus->add_option("--seed", bc_seed, "generation seed");
  cmd_corpus->add_option("--count", bc_count, "number of videos")->required();
  cmd_corpus->add_option("--frames", bc_frames, "frames per clip");
  cmd_corpus->add_option("--size", bc_size, "frame height/width in pixels");
  cmd_corpus->add_option("--out", bc_out, "output directory")->required();
  cmd_corpus->add_option("--vocab", bc_vocab, "caption vocabulary: default | alt");
  cmd_corpus->add_option("--threads", bc_threads, "worker threads");

  // build-index
  auto* cmd_index = app.add_subcommand("build-index", "embed captions and build an index");
  std::string bi_corpus, bi_out;
  int bi_dim = 256;
  cmd_index->add_option("--corpus", bi_corpus, "corpus directory")->required();
  cmd_index->add_option("--out", bi_out, "index file path")->required();
  cmd_index->add_option("--dim", bi_dim, "embedding dimension");

  // query
  auto* cmd_query = app.add_subcommand("query", "top-k lookup against an index");
  std::string q_index, q_text;
  int q_k = 9;
  cmd_query->add_option("--index", q_index, "index file")->required();
  cmd_query->add_option("--text", q_text, "query text")->required();
  cmd_query->add_option("--k", q_k, "result count");

  // train-stage1 / train-stage2
  TrainArgs targs;
  std::string t_config;
  auto* cmd_t1 = app.add_subcommand("train-stage1", "train denoiser, adapters, motion resampler");
  cmd_t1->add_option("--corpus", targs.corpus_dir)->required();
  cmd_t1->add_option("--config", t_config, "run config JSON");
  cmd_t1->add_option("--out", targs.out_path)->required();
  cmd_t1->add_option("--steps", targs.steps_override, "override stage1_steps");

  auto* cmd_t2 = app.add_subcommand("train-stage2", "train MCT and image resampler");
  cmd_t2->add_option("--corpus", targs.corpus_dir)->required();
  cmd_t2->add_option("--stage1", targs.stage1_path, "stage-1 checkpoint")->required();
  cmd_t2->add_option("--out", targs.out_path)->required();
  cmd_t2->add_option("--index", targs.index_path, "optional prebuilt index");
  cmd_t2->add_option("--steps", targs.steps_override, "override stage2_steps");
  cmd_t2->add_option("--threads", targs.threads_override, "override threads");

  // infer
  auto* cmd_infer = app.add_subcommand("infer", "retrieve, adapt and generate one clip");
  std::string in_ckpt, in_image, in_prompt, in_strategy = "mct-9", in_out, in_index, in_corpus,
              in_oracle;
  uint64_t in_seed = 0;
  cmd_infer->add_option("--checkpoint", in_ckpt)->required();
  cmd_infer->add_option("--image", in_image, ".mrv clip; frame 0 is the conditioning image")
      ->required();
  cmd_infer->add_option("--prompt", in_prompt)->required();
  cmd_infer->add_option("--strategy", in_strategy,
                        "nomotion | top1 | avg-K | mct-K | rand-K | mct-rand-K | oracle");
  cmd_infer->add_option("--seed", in_seed, "sampling seed");
  cmd_infer->add_option("--out", in_out, "output .mrv")->required();
  cmd_infer->add_option("--index", in_index, "retrieval index (swap for other databases)");
  cmd_infer->add_option("--corpus", in_corpus, "corpus backing the index");
  cmd_infer->add_option("--oracle-video", in_oracle, ".mrv for the oracle strategy");

  // eval / ablate
  EvalArgs eargs;
  auto* cmd_eval = app.add_subcommand("eval", "score strategies on the held-out split");
  cmd_eval->add_option("--corpus", eargs.corpus_dir)->required();
  cmd_eval->add_option("--checkpoint", eargs.checkpoint)->required();
  cmd_eval->add_option("--out", eargs.out_dir, "report directory");
  cmd_eval->add_option("--strategies", eargs.strategies, "comma-separated strategy names");
  cmd_eval->add_option("--index", eargs.index_path, "optional prebuilt index");

  auto* cmd_ablate = app.add_subcommand("ablate", "full strategy table (Table 3/4 analogue)");
  cmd_ablate->add_option("--corpus", eargs.corpus_dir)->required();
  cmd_ablate->add_option("--checkpoint", eargs.checkpoint)->required();
  cmd_ablate->add_option("--out", eargs.out_dir, "report directory");
  cmd_ablate->add_option("--index", eargs.index_path, "optional prebuilt index");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_corpus->parsed()) {
      corpus::generate_corpus(bc_seed, bc_count, bc_frames, bc_size, bc_size, bc_out, bc_vocab,
                              bc_threads);
      std::cout << "corpus of " << bc_count << " videos written to " << bc_out << "\n";
      return 0;
    }
    if (cmd_index->parsed()) {
      const auto c = corpus::load_corpus(bi_corpus);
      std::vector<retrieval::RetrievalRecord> records;
      records.reserve(c.size());
      for (size_t i = 0; i < c.size(); ++i) {
        const auto& e = c.entry_at(i);
        records.push_back({e.id, retrieval::embed_caption(e.caption, bi_dim), e.caption});
      }
      retrieval::save_index(retrieval::build_index(std::move(records)), bi_out);
      std::cout << "index over " << c.size() << " captions written to " << bi_out << "\n";
      return 0;
    }
    if (cmd_query->parsed()) {
      const auto index = retrieval::load_index(q_index);
      const auto t0 = std::chrono::steady_clock::now();
      const auto hits = retrieval::retrieve_top_k(index, {q_text, q_k});
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
              .count();
      for (const auto& h : hits)
        std::cout << h.record->id << "\t" << std::setprecision(6) << h.similarity << "\n";
      std::cerr << "query over " << index.size() << " records took " << ms << " ms\n";
      return 0;
    }
    if (cmd_t1->parsed()) {
      const auto cfg = load_config(t_config);
      return cfg.precision == "f32" ? run_stage1<float>(cfg, targs)
                                    : run_stage1<double>(cfg, targs);
    }
    if (cmd_t2->parsed()) {
      const auto meta = ckpt::peek_checkpoint(targs.stage1_path);
      const int width = meta.at("scalar_bytes").get<int>();
      return width == 4 ? run_stage2<float>(targs) : run_stage2<double>(targs);
    }
    if (cmd_eval->parsed() || cmd_ablate->parsed()) {
      eargs.full_ablation = cmd_ablate->parsed();
      const auto meta = ckpt::peek_checkpoint(eargs.checkpoint);
      const int width = meta.at("scalar_bytes").get<int>();
      return width == 4 ? run_eval<float>(eargs) : run_eval<double>(eargs);
    }
    if (cmd_infer->parsed()) {
      const auto meta = ckpt::peek_checkpoint(in_ckpt);
      const int width = meta.at("scalar_bytes").get<int>();
      auto run = [&](auto tag) {
        using S = decltype(tag);
        auto sys = pipe::System<S>::load(in_ckpt);
        const VideoTensor image = read_mrv(in_image);
        const auto strat =
            pipe::AdaptationStrategy::parse(in_strategy, sys.cfg.rand_strategy_seed);

        std::optional<corpus::Corpus> corp;
        retrieval::RetrievalIndex index;
        pipe::AdaptContext<S> ctx;
        ctx.sys = &sys;
        if (strat.kind != pipe::StrategyKind::NoMotion &&
            strat.kind != pipe::StrategyKind::Oracle) {
          require(!in_corpus.empty(), Err::ConfigInvalid,
                  "--corpus is required for retrieval strategies");
          corp.emplace(corpus::load_corpus(in_corpus));
          if (in_index.empty()) {
            std::vector<retrieval::RetrievalRecord> records;
            for (size_t i = 0; i < corp->size(); ++i) {
              const auto& e = corp->entry_at(i);
              records.push_back({e.id, retrieval::embed_caption(e.caption, sys.cfg.d_e),
                                 e.caption});
            }
            index = retrieval::build_index(std::move(records));
          } else {
            index = retrieval::load_index(in_index);
          }
          ctx.index = &index;
          ctx.corpus = &*corp;
        }
        std::optional<VideoTensor> oracle;
        if (!in_oracle.empty()) oracle = read_mrv(in_oracle);

        const auto result = pipe::infer<S>(image, in_prompt, strat, ctx, in_seed,
                                           oracle ? &*oracle : nullptr);
        write_mrv(in_out, result.video);
        std::cout << "strategy " << strat.name() << ": retrieve+adapt took " << std::fixed
                  << std::setprecision(2) << result.adapt_ms << " ms; clip written to "
                  << in_out << "\n";
        return 0;
      };
      return width == 4 ? run(float{}) : run(double{});
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
