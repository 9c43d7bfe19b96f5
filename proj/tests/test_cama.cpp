#include <doctest.h>

#include "motionrag/cama.hpp"
#include "support/reference_nets.hpp"
#include "support/testutil.hpp"

using namespace motionrag;
using namespace motionrag::cama;
using nn::Mat;
using testutil::random_mat;

namespace {

MctConfig tiny_mct(int L = 2, int d = 4, int layers = 1, int heads = 2, int d_ff = 8) {
  MctConfig c;
  c.tokens = L;
  c.dim = d;
  c.layers = layers;
  c.heads = heads;
  c.d_ff = d_ff;
  c.max_seq = 64;
  c.init_scale = 0.3;
  return c;
}

ContextSequence<double> random_sequence(Rng& rng, int k, int L, int d) {
  std::vector<ContextExample<double>> ex(k);
  for (auto& e : ex) {
    e.appearance = random_mat(rng, L, d);
    e.motion = random_mat(rng, L, d);
  }
  return build_sequence<double>(ex, random_mat(rng, L, d));
}

}  // namespace

TEST_CASE("block-causal mask: pinned layouts") {
  SUBCASE("two segments of length two") {
    const auto m = build_block_causal_mask({2, 2});
    const bool want[4][4] = {{1, 1, 0, 0}, {1, 1, 0, 0}, {1, 1, 1, 1}, {1, 1, 1, 1}};
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) CHECK(m.allowed.at(i, j) == want[i][j]);
  }
  SUBCASE("one segment is all-true") {
    const auto m = build_block_causal_mask({3});
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(m.allowed.at(i, j));
  }
  SUBCASE("unit segments reduce to plain causal") {
    const auto m = build_block_causal_mask({1, 1, 1});
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(m.allowed.at(i, j) == (j <= i));
  }
  CHECK_THROWS_AS(build_block_causal_mask({}), Error);
  CHECK_THROWS_AS(build_block_causal_mask({2, 0}), Error);
}

TEST_CASE("block-causal mask: every token can attend to its own segment") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> lens(1 + rng.uniform_int(5));
    for (auto& l : lens) l = 1 + static_cast<int>(rng.uniform_int(4));
    const auto m = build_block_causal_mask(lens);
    for (size_t i = 0; i < m.segment_of.size(); ++i) CHECK(m.allowed.at(i, i));
  }
}

TEST_CASE("build_sequence: layout follows the reverse-order formula") {
  Rng rng(2);
  const int L = 2, d = 3;
  std::vector<ContextExample<double>> ex(3);
  for (auto& e : ex) {
    e.appearance = random_mat(rng, L, d);
    e.motion = random_mat(rng, L, d);
  }
  const Mat<double> target = random_mat(rng, L, d);

  SUBCASE("K=3 verbatim reading") {
    const auto seq = build_sequence<double>(ex, target, false);
    REQUIRE(seq.segments.size() == 4);
    // processing order [rank3, rank2, rank1, target]
    CHECK(seq.segments[0].appearance == ex[2].appearance);
    CHECK_FALSE(seq.segments[0].motion.has_value());  // null slot f_m(V_4)
    CHECK(seq.segments[1].appearance == ex[1].appearance);
    CHECK(*seq.segments[1].motion == ex[2].motion);  // rank 2 pairs f_m(V_3)
    CHECK(seq.segments[2].appearance == ex[0].appearance);
    CHECK(*seq.segments[2].motion == ex[1].motion);
    CHECK(seq.segments[3].appearance == target);
    CHECK(*seq.segments[3].motion == ex[0].motion);  // target gets f_m(V_1)
  }

  SUBCASE("K=1 smallest case") {
    const auto seq = build_sequence<double>({ex[0]}, target, false);
    REQUIRE(seq.segments.size() == 2);
    CHECK_FALSE(seq.segments[0].motion.has_value());
    CHECK(seq.segments[0].appearance == ex[0].appearance);
    CHECK(*seq.segments[1].motion == ex[0].motion);
  }

  SUBCASE("alternative reading pairs each exemplar with its own motion") {
    const auto seq = build_sequence<double>(ex, target, true);
    CHECK(*seq.segments[0].motion == ex[2].motion);
    CHECK(*seq.segments[1].motion == ex[1].motion);
    CHECK(*seq.segments[2].motion == ex[0].motion);
    CHECK_FALSE(seq.segments[3].motion.has_value());  // target reads the null block
  }

  SUBCASE("swapping relevance ranks reorders segments") {
    auto swapped = ex;
    std::swap(swapped[0], swapped[1]);
    const auto s1 = build_sequence<double>(ex, target, false);
    const auto s2 = build_sequence<double>(swapped, target, false);
    CHECK(s1.segments[1].appearance == s2.segments[2].appearance);
    CHECK(s1.segments[2].appearance == s2.segments[1].appearance);
  }

  CHECK_THROWS_AS(build_sequence<double>({}, target, false), Error);
}

TEST_CASE("mct: prediction shape is L x d for K = 1..9") {
  const auto cfg = tiny_mct(2, 4, 1, 2, 8);
  Mct<double> mct(cfg, "mct", Rng(3));
  Rng rng(4);
  for (int k = 1; k <= 9; ++k) {
    auto seq = random_sequence(rng, k, 2, 4);
    Mct<double>::Cache c;
    const auto out = mct.forward(seq, c);
    CHECK(out.motion_pred.rows() == 2);
    CHECK(out.motion_pred.cols() == 4);
    CHECK(out.hidden.rows() == (k + 1) * 2);
  }
}

TEST_CASE("mct: perturbing the target segment leaves earlier hidden states bit-identical") {
  const auto cfg = tiny_mct(3, 8, 2, 2, 16);
  Mct<double> mct(cfg, "mct", Rng(5));
  Rng rng(6);
  auto seq = random_sequence(rng, 3, 3, 8);

  Mct<double>::Cache c1;
  const auto out1 = mct.forward(seq, c1);
  auto perturbed = seq;
  perturbed.segments.back().appearance = random_mat(rng, 3, 8);
  *perturbed.segments.back().motion += random_mat(rng, 3, 8);
  Mct<double>::Cache c2;
  const auto out2 = mct.forward(perturbed, c2);

  const int earlier = 3 * 3;  // tokens of segments 0..2
  for (int r = 0; r < earlier; ++r)
    for (int j = 0; j < 8; ++j) {
      CHECK(out1.hidden(r, j) == out2.hidden(r, j));
      for (size_t l = 0; l < c1.layers.size(); ++l)
        CHECK(c1.layers[l].x_out(r, j) == c2.layers[l].x_out(r, j));
    }
  // and the prediction itself does change
  CHECK((out1.motion_pred - out2.motion_pred).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("mct: matches the straight-line reference") {
  const auto cfg = tiny_mct(1, 2, 1, 1, 4);
  Mct<double> mct(cfg, "mct", Rng(7));
  nn::ParamList<double> ps;
  mct.collect(ps);

  SUBCASE("hand-set weights, K=1, L=1, d=2") {
    // pin every parameter to small hand-picked values
    double v = -0.35;
    for (auto* p : ps)
      for (Eigen::Index i = 0; i < p->value.size(); ++i) {
        p->value.data()[i] = v;
        v += 0.13;
        if (v > 0.4) v -= 0.8;
      }
    std::vector<ContextExample<double>> ex(1);
    ex[0].appearance = (Mat<double>(1, 2) << 0.2, -0.4).finished();
    ex[0].motion = (Mat<double>(1, 2) << 0.7, 0.1).finished();
    const Mat<double> target = (Mat<double>(1, 2) << -0.3, 0.5).finished();
    const auto seq = build_sequence<double>(ex, target, false);

    Mct<double>::Cache c;
    const auto got = mct.forward(seq, c);
    const auto want = refnet::mct_forward(
        refnet::param_map(ps), "mct", 1, 1, 1,
        {ex[0].appearance, target}, {Mat<double>(), ex[0].motion});
    CHECK((got.motion_pred - want).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("random weights, K=2") {
    Rng rng(8);
    std::vector<ContextExample<double>> ex(2);
    for (auto& e : ex) {
      e.appearance = random_mat(rng, 1, 2);
      e.motion = random_mat(rng, 1, 2);
    }
    const Mat<double> target = random_mat(rng, 1, 2);
    const auto seq = build_sequence<double>(ex, target, false);
    Mct<double>::Cache c;
    const auto got = mct.forward(seq, c);
    const auto want = refnet::mct_forward(
        refnet::param_map(ps), "mct", 1, 1, 1,
        {ex[1].appearance, ex[0].appearance, target},
        {Mat<double>(), ex[1].motion, ex[0].motion});
    CHECK((got.motion_pred - want).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("transfer loss: pinned values and the naive-loop oracle") {
  Rng rng(9);
  const Mat<double> a = random_mat(rng, 8, 64);
  CHECK(transfer_loss(a, a) == 0.0);

  Mat<double> b = a;
  b(3, 17) += 1.0;
  CHECK(transfer_loss(a, b) == doctest::Approx(1.0 / 512).epsilon(1e-12));

  const Mat<double> c = random_mat(rng, 8, 64);
  double naive = 0.0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 64; ++j) naive += (a(i, j) - c(i, j)) * (a(i, j) - c(i, j));
  naive /= 512.0;
  CHECK(transfer_loss(a, c) == doctest::Approx(naive).epsilon(1e-12));

  CHECK_THROWS_AS(transfer_loss(a, random_mat(rng, 4, 64)), Error);
}

TEST_CASE("mct: gradients match central finite differences") {
  const auto cfg = tiny_mct(2, 4, 1, 2, 8);
  Mct<double> mct(cfg, "mct", Rng(10));
  Rng rng(11);
  std::vector<ContextExample<double>> ex(2);
  for (auto& e : ex) {
    e.appearance = random_mat(rng, 2, 4);
    e.motion = random_mat(rng, 2, 4);
  }
  Mat<double> target_app = random_mat(rng, 2, 4);
  const Mat<double> target_motion = random_mat(rng, 2, 4);

  nn::ParamList<double> ps;
  mct.collect(ps);
  auto loss = [&] {
    const auto seq = build_sequence<double>(ex, target_app, false);
    Mct<double>::Cache c;
    return static_cast<double>(transfer_loss(mct.forward(seq, c).motion_pred, target_motion));
  };
  nn::zero_grads(ps);
  {
    const auto seq = build_sequence<double>(ex, target_app, false);
    Mct<double>::Cache c;
    const auto out = mct.forward(seq, c);
    const auto input_grads = mct.backward(c, transfer_loss_grad(out.motion_pred, target_motion));
    CHECK(testutil::max_rel_err_params(ps, loss) < 1e-4);

    // input gradients: target appearance slice (segment 2)
    CHECK(testutil::max_rel_err_input(target_app, input_grads.segment[2], loss) < 1e-4);
    // first-processed segment influences the prediction (non-degeneracy)
    CHECK(input_grads.segment[0].cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("mct: zero loss at the minimum zeroes every gradient") {
  const auto cfg = tiny_mct(2, 4, 1, 2, 8);
  Mct<double> mct(cfg, "mct", Rng(12));
  Rng rng(13);
  auto seq = random_sequence(rng, 2, 2, 4);
  Mct<double>::Cache c;
  const auto out = mct.forward(seq, c);

  nn::ParamList<double> ps;
  mct.collect(ps);
  nn::zero_grads(ps);
  mct.backward(c, transfer_loss_grad(out.motion_pred, out.motion_pred));
  for (auto* p : ps) CHECK(p->grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mct: sequence exceeding max_seq is rejected") {
  auto cfg = tiny_mct(4, 4, 1, 2, 8);
  cfg.max_seq = 8;
  Mct<double> mct(cfg, "mct", Rng(14));
  Rng rng(15);
  std::vector<ContextExample<double>> ex(3);
  for (auto& e : ex) {
    e.appearance = random_mat(rng, 4, 4);
    e.motion = random_mat(rng, 4, 4);
  }
  const auto seq = build_sequence<double>(ex, random_mat(rng, 4, 4));
  Mct<double>::Cache c;
  CHECK_THROWS_AS(mct.forward(seq, c), Error);
}
