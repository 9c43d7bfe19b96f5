#include <doctest.h>

#include "motionrag/generator.hpp"
#include "support/testutil.hpp"

using namespace motionrag;
using namespace motionrag::gen;
using nn::Mat;
using testutil::random_mat;

namespace {

DenoiserConfig tiny_denoiser_cfg() {
  DenoiserConfig c;
  c.frames = 2;
  c.height = 4;
  c.width = 4;
  c.patch = 2;
  c.d_model = 8;
  c.blocks = 1;
  c.heads = 2;
  c.d_ff = 16;
  c.img_dim = 4;
  c.motion_dim = 4;
  c.adapter.d_attn = 4;
  c.adapter.heads = 2;
  c.adapter.scale = 1.0;
  c.init_scale = 0.3;
  return c;
}

}  // namespace

TEST_CASE("noise schedule: betas increase, alpha-bar strictly decreases") {
  const auto s = NoiseSchedule::linear(50, 1e-4, 0.02);
  REQUIRE(s.t_diff == 50);
  for (int t = 0; t < 50; ++t) {
    CHECK(s.betas[t] > 0.0);
    CHECK(s.betas[t] < 1.0);
    if (t > 0) {
      CHECK(s.betas[t] > s.betas[t - 1]);
      CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
    }
    CHECK(s.alpha_bar[t] > 0.0);
    CHECK(s.alpha_bar[t] < 1.0);
  }
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.0, 0.02), Error);
}

TEST_CASE("forward diffuse: exact deterministic branch and bounds") {
  const auto s = NoiseSchedule::linear(50, 1e-4, 0.02);
  Rng rng(1);
  const Mat<double> x0 = random_mat(rng, 4, 6);
  const Mat<double> zero = Mat<double>::Zero(4, 6);

  const auto xt = forward_diffuse(x0, 7, zero, s);
  CHECK((xt - std::sqrt(s.alpha_bar[7]) * x0).cwiseAbs().maxCoeff() == 0.0);

  // t = 0 with a tiny beta stays close to x0
  const Mat<double> noise = random_mat(rng, 4, 6);
  const auto x_near = forward_diffuse(x0, 0, noise, s);
  const double bound = std::sqrt(1.0 - s.alpha_bar[0]) * noise.norm() +
                       (1.0 - std::sqrt(s.alpha_bar[0])) * x0.norm();
  CHECK((x_near - x0).norm() <= bound + 1e-12);

  CHECK_THROWS_AS(forward_diffuse(x0, 50, zero, s), Error);
  CHECK_THROWS_AS(forward_diffuse(x0, -1, zero, s), Error);
}

TEST_CASE("forward diffuse: Monte-Carlo variance matches 1 - alpha_bar within 3%") {
  const auto s = NoiseSchedule::linear(50, 1e-4, 0.02);
  const int t = 31;
  Rng rng(2);
  const Mat<double> x0 = random_mat(rng, 2, 8);
  double sum = 0.0, sum_sq = 0.0;
  long count = 0;
  for (int draw = 0; draw < 10000; ++draw) {
    Mat<double> noise(2, 8);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.normal();
    const Mat<double> delta = forward_diffuse(x0, t, noise, s) -
                              std::sqrt(s.alpha_bar[t]) * x0;
    for (Eigen::Index i = 0; i < delta.size(); ++i) {
      sum += delta.data()[i];
      sum_sq += delta.data()[i] * delta.data()[i];
      ++count;
    }
  }
  const double mean = sum / count;
  const double var = sum_sq / count - mean * mean;
  CHECK(var == doctest::Approx(1.0 - s.alpha_bar[t]).epsilon(0.03));
}

TEST_CASE("adapter: zero output projection and zero scale are exact identities") {
  AdapterConfig cfg;
  cfg.d_model = 8;
  cfg.d_motion = 4;
  cfg.d_attn = 4;
  cfg.heads = 2;
  Rng rng(3);
  MotionAdapter<double> ad;
  ad.init("ad", cfg, rng, 0.4);

  const Mat<double> z = random_mat(rng, 6, 8);
  const Mat<double> m = random_mat(rng, 3, 4);
  MotionAdapter<double>::Cache c;
  const auto z1 = ad.forward(z, m, c);
  for (Eigen::Index i = 0; i < z.size(); ++i) CHECK(z1.data()[i] == z.data()[i]);

  // scale gate: nonzero weights, s = 0
  AdapterConfig cfg0 = cfg;
  cfg0.scale = 0.0;
  MotionAdapter<double> ad0;
  ad0.init("ad0", cfg0, rng, 0.4);
  ad0.output_projection().init_normal(rng, 0.5);
  const auto z2 = ad0.forward(z, m, c);
  for (Eigen::Index i = 0; i < z.size(); ++i) CHECK(z2.data()[i] == z.data()[i]);
}

TEST_CASE("adapter: single motion token gives degenerate softmax, matches hand computation") {
  AdapterConfig cfg;
  cfg.d_model = 2;
  cfg.d_motion = 2;
  cfg.d_attn = 2;
  cfg.heads = 1;
  cfg.scale = 1.0;
  Rng rng(4);
  MotionAdapter<double> ad;
  ad.init("ad", cfg, rng, 0.3);
  nn::ParamList<double> ps;
  ad.collect(ps);
  // hand-set weights
  ps[0]->value << 0.3, -0.2, 0.1, 0.5;   // wq (unused by the math below)
  ps[1]->value << 0.7, 0.2, -0.4, 0.6;   // wk
  ps[2]->value << 0.5, -0.1, 0.2, 0.3;   // wv
  ps[3]->value << 1.0, -1.0, 0.5, 0.25;  // wo

  const Mat<double> z = (Mat<double>(2, 2) << 0.2, -0.7, 1.1, 0.4).finished();
  const Mat<double> m = (Mat<double>(1, 2) << 0.6, -0.3).finished();
  MotionAdapter<double>::Cache c;
  const auto got = ad.forward(z, m, c);

  // v = m * wv; attention over one key is 1, so delta = v * wo for every row
  const double v0 = 0.6 * 0.5 + (-0.3) * 0.2, v1 = 0.6 * -0.1 + (-0.3) * 0.3;
  const double d0 = v0 * 1.0 + v1 * 0.5, d1 = v0 * -1.0 + v1 * 0.25;
  for (int r = 0; r < 2; ++r) {
    CHECK(got(r, 0) == doctest::Approx(z(r, 0) + d0).epsilon(1e-12));
    CHECK(got(r, 1) == doctest::Approx(z(r, 1) + d1).epsilon(1e-12));
  }
}

TEST_CASE("adapter: gradients match finite differences") {
  AdapterConfig cfg;
  cfg.d_model = 6;
  cfg.d_motion = 4;
  cfg.d_attn = 4;
  cfg.heads = 2;
  Rng rng(5);
  MotionAdapter<double> ad;
  ad.init("ad", cfg, rng, 0.4);
  ad.output_projection().init_normal(rng, 0.4);  // move off the zero point

  Mat<double> z = random_mat(rng, 3, 6);
  Mat<double> m = random_mat(rng, 2, 4);
  const Mat<double> upstream = random_mat(rng, 3, 6);

  nn::ParamList<double> ps;
  ad.collect(ps);
  auto loss = [&] {
    MotionAdapter<double>::Cache c;
    return ad.forward(z, m, c).cwiseProduct(upstream).sum();
  };
  nn::zero_grads(ps);
  MotionAdapter<double>::Cache c;
  ad.forward(z, m, c);
  Mat<double> dz = Mat<double>::Zero(3, 6), dm = Mat<double>::Zero(2, 4);
  ad.backward(c, upstream, &dz, &dm);
  CHECK(testutil::max_rel_err_params(ps, loss) < 1e-5);
  CHECK(testutil::max_rel_err_input(z, dz, loss) < 1e-5);
  CHECK(testutil::max_rel_err_input(m, dm, loss) < 1e-5);
}

TEST_CASE("denoiser: output shape and zero-adapter injection identity") {
  const auto cfg = tiny_denoiser_cfg();
  Denoiser<double> den(cfg, "den", Rng(6));
  Rng rng(7);
  const Mat<double> x_t = random_mat(rng, cfg.total_tokens(), cfg.patch_dim());
  const Mat<double> img = random_mat(rng, 2, cfg.img_dim);
  const Mat<double> motion = random_mat(rng, 2, cfg.img_dim);

  Denoiser<double>::Cache c1, c2;
  const auto with = den.forward(x_t, 3, img, &motion, c1);
  const auto without = den.forward(x_t, 3, img, nullptr, c2);
  CHECK(with.rows() == cfg.total_tokens());
  CHECK(with.cols() == cfg.patch_dim());
  for (Eigen::Index i = 0; i < with.size(); ++i) CHECK(with.data()[i] == without.data()[i]);
}

TEST_CASE("denoiser: MSE gradients match finite differences (incl. adapters)") {
  const auto cfg = tiny_denoiser_cfg();
  Denoiser<double> den(cfg, "den", Rng(8));
  // adapters off the zero init so their whole path is exercised
  nn::ParamList<double> adapters;
  den.collect_adapters(adapters);
  Rng arng(9);
  for (auto* p : adapters)
    if (p->name.find(".wo") != std::string::npos) p->init_normal(arng, 0.3);

  Rng rng(10);
  const Mat<double> x0 = random_mat(rng, cfg.total_tokens(), cfg.patch_dim());
  const Mat<double> x_t = random_mat(rng, cfg.total_tokens(), cfg.patch_dim());
  const Mat<double> img = random_mat(rng, 2, cfg.img_dim);
  Mat<double> motion = random_mat(rng, 2, cfg.img_dim);

  nn::ParamList<double> ps;
  den.collect(ps);
  auto loss = [&] {
    Denoiser<double>::Cache c;
    const auto xhat = den.forward(x_t, 5, img, &motion, c);
    return (xhat - x0).squaredNorm() / xhat.size();
  };
  nn::zero_grads(ps);
  Denoiser<double>::Cache c;
  const auto xhat = den.forward(x_t, 5, img, &motion, c);
  const Mat<double> d_xhat = (xhat - x0) * (2.0 / xhat.size());
  Mat<double> d_motion = Mat<double>::Zero(2, cfg.img_dim);
  den.backward(c, d_xhat, &d_motion);
  CHECK(testutil::max_rel_err_params(ps, loss) < 1e-4);
  CHECK(testutil::max_rel_err_input(motion, d_motion, loss) < 1e-4);
}

TEST_CASE("sampler: deterministic, and zero-init adapters make motion a no-op") {
  auto cfg = tiny_denoiser_cfg();
  Denoiser<double> den(cfg, "den", Rng(11));  // adapters still zero-init
  Rng rng(12);
  const Mat<double> img = random_mat(rng, 2, cfg.img_dim);
  const Mat<double> motion = random_mat(rng, 2, cfg.img_dim);
  const auto sched = NoiseSchedule::linear(20, 1e-4, 0.02);

  const Mat<double>* no_motion = nullptr;
  const VideoTensor a = sample(den, sched, img, &motion, 5, 42);
  const VideoTensor b = sample(den, sched, img, &motion, 5, 42);
  CHECK(a == b);
  const VideoTensor c = sample(den, sched, img, no_motion, 5, 42);
  CHECK(a == c);
  const VideoTensor d = sample(den, sched, img, no_motion, 5, 43);
  CHECK_FALSE(a == d);
  for (float x : a.data) CHECK((x >= 0.0f && x <= 1.0f));
}

TEST_CASE("sampler: timestep ladder is decreasing and covers the range") {
  const auto ts = sample_timesteps(50, 10);
  CHECK(ts.front() == 49);
  CHECK(ts.back() == 0);
  for (size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);
  CHECK(sample_timesteps(50, 1) == std::vector<int>{49});
}

TEST_CASE("stage 1: loss decreases, runs deterministically, checkpoint step reproduces") {
  // tiny synthetic task: random "videos" in token space
  auto cfg = tiny_denoiser_cfg();
  rsmp::ResamplerConfig rc;
  rc.tokens = 2;
  rc.dim = cfg.motion_dim;
  rc.input_dim = 6;
  rc.layers = 1;
  rc.heads = 2;
  rc.d_ff = 8;

  Rng rng(13);
  std::vector<Mat<double>> feats, x0s, imgs;
  for (int i = 0; i < 110; ++i) {
    feats.push_back(random_mat(rng, 5, 6));
    x0s.push_back(random_mat(rng, cfg.total_tokens(), cfg.patch_dim(), 0.3));
    imgs.push_back(random_mat(rng, 3, cfg.img_dim));
  }
  std::vector<Stage1Item<double>> items(110);
  for (int i = 0; i < 110; ++i)
    items[i] = {&feats[i], &x0s[i], &imgs[i]};

  auto run = [&](int steps, int threads) {
    rsmp::Resampler<double> res(rc, "motion_res", Rng(14));
    Denoiser<double> den(cfg, "den", Rng(15));
    StageConfig sc;
    sc.steps = steps;
    sc.batch = 4;
    sc.adam.lr = 3e-3;
    sc.seed = 99;
    sc.threads = threads;
    const auto sched = NoiseSchedule::linear(20, 1e-4, 0.02);
    const auto stats = stage1_train<double>(items, res, den, sched, sc);
    return std::make_tuple(stats, nn::hash_params(nn::ParamList<double>{}),
                           [&] {
                             nn::ParamList<double> ps;
                             res.collect(ps);
                             den.collect(ps);
                             return nn::hash_params(ps);
                           }());
  };

  const auto [s1, _, h1] = run(300, 2);
  CHECK(s1.smoothed_final() < s1.smoothed_initial());

  // same seed and thread count reproduce losses and weights bit-exactly
  const auto [s2, __, h2] = run(300, 2);
  CHECK(s1.losses == s2.losses);
  CHECK(h1 == h2);

  SUBCASE("rejects corpora under 100 items") {
    std::vector<Stage1Item<double>> few(items.begin(), items.begin() + 50);
    rsmp::Resampler<double> res(rc, "motion_res", Rng(14));
    Denoiser<double> den(cfg, "den", Rng(15));
    StageConfig sc;
    sc.steps = 1;
    try {
      stage1_train<double>(few, res, den, NoiseSchedule::linear(20), sc);
      FAIL("expected CorpusTooSmall");
    } catch (const Error& e) {
      CHECK(e.code() == Err::CorpusTooSmall);
    }
  }
}
