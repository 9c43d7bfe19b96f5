#include "motionrag/pipeline.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace motionrag::pipe {

using json = nlohmann::json;

void RunConfig::validate() const {
  require(corpus_n >= 1, Err::ConfigInvalid, "corpus_n must be >= 1");
  require(frames >= 2, Err::ConfigInvalid, "frames must be >= 2");
  require(height % patch == 0 && width % patch == 0, Err::ConfigInvalid,
          "height and width must be divisible by patch");
  require(d_enc >= 6, Err::ConfigInvalid, "d_enc too small for position slices");
  require(k >= 1, Err::ConfigInvalid, "k must be >= 1");
  require((k + 1) * tokens <= max_seq, Err::ConfigInvalid,
          "K+1 segments of L tokens exceed max_seq");
  require(dim % res_heads == 0 && dim % mct_heads == 0, Err::ConfigInvalid,
          "dim must be divisible by the attention head counts");
  require(d_model % gen_heads == 0, Err::ConfigInvalid, "d_model not divisible by gen_heads");
  require(adapter_dim % adapter_heads == 0, Err::ConfigInvalid,
          "adapter_dim not divisible by adapter_heads");
  require(t_diff >= 1 && beta_min > 0 && beta_max < 1 && beta_min <= beta_max,
          Err::ConfigInvalid, "bad noise schedule");
  require(sample_steps >= 1, Err::ConfigInvalid, "sample_steps must be >= 1");
  require(heldout_fraction > 0.0 && heldout_fraction < 1.0, Err::ConfigInvalid,
          "heldout_fraction must be in (0,1)");
  require(eval_count >= 1, Err::ConfigInvalid, "eval_count must be >= 1");
  require(precision == "f64" || precision == "f32", Err::ConfigInvalid,
          "precision must be f64 or f32");
  require(threads >= 1, Err::ConfigInvalid, "threads must be >= 1");
}

json RunConfig::to_json() const {
  return json{{"corpus_seed", corpus_seed},
              {"corpus_n", corpus_n},
              {"frames", frames},
              {"height", height},
              {"width", width},
              {"vocab", vocab},
              {"encoder_seed", encoder_seed},
              {"patch", patch},
              {"d_enc", d_enc},
              {"d_e", d_e},
              {"k", k},
              {"tokens", tokens},
              {"dim", dim},
              {"res_layers", res_layers},
              {"res_heads", res_heads},
              {"res_ff", res_ff},
              {"mct_layers", mct_layers},
              {"mct_heads", mct_heads},
              {"mct_ff", mct_ff},
              {"max_seq", max_seq},
              {"pair_own_motion", pair_own_motion},
              {"t_diff", t_diff},
              {"beta_min", beta_min},
              {"beta_max", beta_max},
              {"gen_blocks", gen_blocks},
              {"d_model", d_model},
              {"gen_heads", gen_heads},
              {"gen_ff", gen_ff},
              {"sample_steps", sample_steps},
              {"adapter_dim", adapter_dim},
              {"adapter_heads", adapter_heads},
              {"adapter_scale", adapter_scale},
              {"stage1_steps", stage1_steps},
              {"stage1_batch", stage1_batch},
              {"stage1_lr", stage1_lr},
              {"stage2_steps", stage2_steps},
              {"stage2_batch", stage2_batch},
              {"stage2_lr", stage2_lr},
              {"adam_beta1", adam_beta1},
              {"adam_beta2", adam_beta2},
              {"adam_eps", adam_eps},
              {"weight_decay", weight_decay},
              {"heldout_fraction", heldout_fraction},
              {"eval_count", eval_count},
              {"eval_seed", eval_seed},
              {"rand_strategy_seed", rand_strategy_seed},
              {"seed", seed},
              {"precision", precision},
              {"threads", threads}};
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("corpus_seed", c.corpus_seed);
  get("corpus_n", c.corpus_n);
  get("frames", c.frames);
  get("height", c.height);
  get("width", c.width);
  get("vocab", c.vocab);
  get("encoder_seed", c.encoder_seed);
  get("patch", c.patch);
  get("d_enc", c.d_enc);
  get("d_e", c.d_e);
  get("k", c.k);
  get("tokens", c.tokens);
  get("dim", c.dim);
  get("res_layers", c.res_layers);
  get("res_heads", c.res_heads);
  get("res_ff", c.res_ff);
  get("mct_layers", c.mct_layers);
  get("mct_heads", c.mct_heads);
  get("mct_ff", c.mct_ff);
  get("max_seq", c.max_seq);
  get("pair_own_motion", c.pair_own_motion);
  get("t_diff", c.t_diff);
  get("beta_min", c.beta_min);
  get("beta_max", c.beta_max);
  get("gen_blocks", c.gen_blocks);
  get("d_model", c.d_model);
  get("gen_heads", c.gen_heads);
  get("gen_ff", c.gen_ff);
  get("sample_steps", c.sample_steps);
  get("adapter_dim", c.adapter_dim);
  get("adapter_heads", c.adapter_heads);
  get("adapter_scale", c.adapter_scale);
  get("stage1_steps", c.stage1_steps);
  get("stage1_batch", c.stage1_batch);
  get("stage1_lr", c.stage1_lr);
  get("stage2_steps", c.stage2_steps);
  get("stage2_batch", c.stage2_batch);
  get("stage2_lr", c.stage2_lr);
  get("adam_beta1", c.adam_beta1);
  get("adam_beta2", c.adam_beta2);
  get("adam_eps", c.adam_eps);
  get("weight_decay", c.weight_decay);
  get("heldout_fraction", c.heldout_fraction);
  get("eval_count", c.eval_count);
  get("eval_seed", c.eval_seed);
  get("rand_strategy_seed", c.rand_strategy_seed);
  get("seed", c.seed);
  get("precision", c.precision);
  get("threads", c.threads);
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) raise(Err::IoFailure, "cannot open config " + path.string());
  json j;
  try {
    is >> j;
  } catch (const std::exception& ex) {
    raise(Err::ConfigInvalid, path.string() + ": " + ex.what());
  }
  return from_json(j);
}

std::string AdaptationStrategy::name() const {
  switch (kind) {
    case StrategyKind::NoMotion: return "nomotion";
    case StrategyKind::Top1: return "top1";
    case StrategyKind::AvgK: return "avg-" + std::to_string(k);
    case StrategyKind::MctK: return "mct-" + std::to_string(k);
    case StrategyKind::RandomK: return "rand-" + std::to_string(k);
    case StrategyKind::MctRandomK: return "mct-rand-" + std::to_string(k);
    case StrategyKind::Oracle: return "oracle";
  }
  return "?";
}

AdaptationStrategy AdaptationStrategy::parse(const std::string& text, uint64_t rand_seed) {
  AdaptationStrategy s;
  s.seed = rand_seed;
  auto tail_k = [&](const std::string& prefix) {
    const std::string t = text.substr(prefix.size());
    const int k = std::stoi(t);
    require(k >= 1, Err::ConfigInvalid, "strategy k must be >= 1");
    return k;
  };
  try {
    if (text == "nomotion" || text == "baseline") {
      s.kind = StrategyKind::NoMotion;
    } else if (text == "top1") {
      s.kind = StrategyKind::Top1;
    } else if (text == "oracle") {
      s.kind = StrategyKind::Oracle;
    } else if (text.rfind("avg-", 0) == 0) {
      s.kind = StrategyKind::AvgK;
      s.k = tail_k("avg-");
    } else if (text.rfind("mct-rand-", 0) == 0) {
      s.kind = StrategyKind::MctRandomK;
      s.k = tail_k("mct-rand-");
    } else if (text.rfind("mct-", 0) == 0) {
      s.kind = StrategyKind::MctK;
      s.k = tail_k("mct-");
    } else if (text.rfind("rand-", 0) == 0) {
      s.kind = StrategyKind::RandomK;
      s.k = tail_k("rand-");
    } else {
      raise(Err::ConfigInvalid, "unknown strategy '" + text + "'");
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    raise(Err::ConfigInvalid, "cannot parse strategy '" + text + "'");
  }
  return s;
}

std::vector<AdaptationStrategy> ablation_strategies(uint64_t rand_seed) {
  std::vector<AdaptationStrategy> out;
  for (const char* name : {"nomotion", "top1", "avg-5", "avg-9", "mct-5", "mct-9", "rand-1",
                           "rand-9", "mct-rand-9", "oracle"})
    out.push_back(AdaptationStrategy::parse(name, rand_seed));
  return out;
}

Split split_corpus(size_t n, double heldout_fraction, uint64_t seed) {
  require(n >= 2, Err::ConfigInvalid, "cannot split fewer than 2 items");
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng::fork(seed, 99);
  for (size_t i = n - 1; i > 0; --i) {
    const size_t j = rng.uniform_int(i + 1);
    std::swap(order[i], order[j]);
  }
  size_t n_held = static_cast<size_t>(heldout_fraction * n);
  n_held = std::max<size_t>(1, std::min(n_held, n - 1));
  Split s;
  s.held.assign(order.begin(), order.begin() + n_held);
  s.train.assign(order.begin() + n_held, order.end());
  return s;
}

std::vector<size_t> random_picks(size_t n_records, const std::vector<char>& excluded, int k,
                                 uint64_t seed, uint64_t salt) {
  std::vector<size_t> candidates;
  candidates.reserve(n_records);
  for (size_t i = 0; i < n_records; ++i)
    if (!excluded[i]) candidates.push_back(i);
  require(!candidates.empty(), Err::EmptyAfterExclusion, "no candidates for random picks");
  const size_t take = std::min<size_t>(k, candidates.size());
  Rng rng = Rng::fork(seed, salt);
  for (size_t i = 0; i < take; ++i) {
    const size_t j = i + rng.uniform_int(candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
  }
  candidates.resize(take);
  return candidates;
}

const StrategyRow& EvalReport::row(const std::string& name) const {
  for (const auto& r : rows)
    if (r.name == name) return r;
  raise(Err::ConfigInvalid, "no strategy row named '" + name + "'");
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os << std::left << std::setw(14) << "strategy" << std::right << std::setw(12) << "motion_err"
     << std::setw(13) << "pixel_mse" << std::setw(12) << "token_l2" << std::setw(12)
     << "adapt_ms" << std::setw(7) << "n" << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(14) << r.name << std::right << std::fixed
       << std::setprecision(4) << std::setw(12) << r.mean_motion_err << std::setw(13)
       << std::setprecision(6) << r.mean_pixel_mse;
    if (r.token_l2_defined)
      os << std::setw(12) << std::setprecision(4) << r.mean_token_l2;
    else
      os << std::setw(12) << "-";
    os << std::setw(12) << std::setprecision(2) << r.mean_adapt_ms << std::setw(7) << r.count
       << "\n";
  }
  return os.str();
}

// Timing is excluded here: the jsonl form is the canonical, bit-reproducible
// record of a run.
std::string EvalReport::to_jsonl() const {
  std::ostringstream os;
  for (const auto& r : rows) {
    json j{{"strategy", r.name},
           {"mean_motion_error", r.mean_motion_err},
           {"mean_pixel_mse", r.mean_pixel_mse},
           {"mean_token_l2", r.token_l2_defined ? json(r.mean_token_l2) : json()},
           {"count", r.count},
           {"eval_seed", eval_seed},
           {"per_video_motion_error", r.motion_err},
           {"per_video_pixel_mse", r.pixel_mse}};
    os << j.dump() << "\n";
  }
  return os.str();
}

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) raise(Err::IoFailure, "cannot create " + dir.string());
  {
    std::ofstream os(dir / "report.txt", std::ios::trunc);
    os << report.to_table();
    if (!os) raise(Err::IoFailure, "write failed: " + (dir / "report.txt").string());
  }
  {
    std::ofstream os(dir / "report.jsonl", std::ios::trunc);
    os << report.to_jsonl();
    if (!os) raise(Err::IoFailure, "write failed: " + (dir / "report.jsonl").string());
  }
}

}  // namespace motionrag::pipe
