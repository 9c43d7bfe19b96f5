#include <doctest.h>

#include "motionrag/nn.hpp"
#include "support/testutil.hpp"

using namespace motionrag;
using namespace motionrag::nn;
using testutil::max_rel_err_params;
using testutil::random_mat;

TEST_CASE("linear gradients match finite differences") {
  Rng rng(1);
  Linear<double> lin;
  lin.init("lin", 5, 3, rng, 0.5);
  const Mat<double> x = random_mat(rng, 4, 5);
  const Mat<double> upstream = random_mat(rng, 4, 3);

  ParamList<double> ps;
  lin.collect(ps);
  auto loss = [&] { return lin.forward(x).cwiseProduct(upstream).sum(); };
  zero_grads(ps);
  Mat<double> dx = Mat<double>::Zero(4, 5);
  lin.backward(x, upstream, &dx);
  CHECK(max_rel_err_params(ps, loss) < 1e-6);

  Mat<double> x_var = x;
  auto loss_x = [&] { return lin.forward(x_var).cwiseProduct(upstream).sum(); };
  CHECK(testutil::max_rel_err_input(x_var, dx, loss_x) < 1e-6);
}

TEST_CASE("layernorm gradients match finite differences") {
  Rng rng(2);
  LayerNorm<double> ln;
  ln.init("ln", 6);
  // non-trivial gains/shifts
  ln.gamma.init_normal(rng, 0.3);
  ln.gamma.value.array() += 1.0;
  ln.beta.init_normal(rng, 0.2);
  Mat<double> x = random_mat(rng, 5, 6);
  const Mat<double> upstream = random_mat(rng, 5, 6);

  ParamList<double> ps;
  ln.collect(ps);
  auto loss = [&] {
    LayerNorm<double>::Cache c;
    return ln.forward(x, c).cwiseProduct(upstream).sum();
  };
  zero_grads(ps);
  LayerNorm<double>::Cache c;
  ln.forward(x, c);
  Mat<double> dx = Mat<double>::Zero(5, 6);
  ln.backward(c, upstream, &dx);
  CHECK(max_rel_err_params(ps, loss) < 1e-5);
  CHECK(testutil::max_rel_err_input(x, dx, loss) < 1e-5);
}

TEST_CASE("dense attention gradients match finite differences") {
  Rng rng(3);
  Mha<double> mha;
  mha.init("mha", 6, 4, 6, 2, rng, 0.4);
  Mat<double> q_in = random_mat(rng, 3, 6);
  Mat<double> kv_in = random_mat(rng, 5, 4);
  const Mat<double> upstream = random_mat(rng, 3, 6);

  ParamList<double> ps;
  mha.collect(ps);
  auto loss = [&] {
    Mha<double>::Cache c;
    return mha.forward(q_in, kv_in, nullptr, c).cwiseProduct(upstream).sum();
  };
  zero_grads(ps);
  Mha<double>::Cache c;
  mha.forward(q_in, kv_in, nullptr, c);
  Mat<double> dq = Mat<double>::Zero(3, 6), dkv = Mat<double>::Zero(5, 4);
  mha.backward(c, upstream, &dq, &dkv);
  CHECK(max_rel_err_params(ps, loss) < 1e-5);
  CHECK(testutil::max_rel_err_input(q_in, dq, loss) < 1e-5);
  CHECK(testutil::max_rel_err_input(kv_in, dkv, loss) < 1e-5);
}

TEST_CASE("masked attention gradients match finite differences") {
  Rng rng(4);
  Mha<double> mha;
  mha.init("mha", 4, 4, 4, 2, rng, 0.4);
  Mat<double> x = random_mat(rng, 6, 4);
  const Mat<double> upstream = random_mat(rng, 6, 4);
  BoolMask mask(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j <= i; ++j) mask.set(i, j, true);  // causal

  ParamList<double> ps;
  mha.collect(ps);
  auto loss = [&] {
    Mha<double>::Cache c;
    return mha.forward(x, x, &mask, c).cwiseProduct(upstream).sum();
  };
  zero_grads(ps);
  Mha<double>::Cache c;
  mha.forward(x, x, &mask, c);
  Mat<double> dx = Mat<double>::Zero(6, 4);
  mha.backward(c, upstream, &dx, &dx);
  CHECK(max_rel_err_params(ps, loss) < 1e-5);
  CHECK(testutil::max_rel_err_input(x, dx, loss) < 1e-5);
}

TEST_CASE("masked attention equals dense attention under the all-true mask") {
  Rng rng(5);
  Mha<double> mha;
  mha.init("mha", 4, 4, 4, 2, rng, 0.5);
  const Mat<double> x = random_mat(rng, 5, 4);
  BoolMask all(5, 5, true);
  Mha<double>::Cache c1, c2;
  const auto a = mha.forward(x, x, nullptr, c1);
  const auto b = mha.forward(x, x, &all, c2);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("feed-forward gradients match finite differences") {
  Rng rng(6);
  FeedForward<double> ff;
  ff.init("ff", 4, 9, rng, 0.5);
  Mat<double> x = random_mat(rng, 3, 4);
  const Mat<double> upstream = random_mat(rng, 3, 4);

  ParamList<double> ps;
  ff.collect(ps);
  auto loss = [&] {
    FeedForward<double>::Cache c;
    return ff.forward(x, c).cwiseProduct(upstream).sum();
  };
  zero_grads(ps);
  FeedForward<double>::Cache c;
  ff.forward(x, c);
  Mat<double> dx = Mat<double>::Zero(3, 4);
  ff.backward(c, upstream, &dx);
  CHECK(max_rel_err_params(ps, loss) < 1e-5);
  CHECK(testutil::max_rel_err_input(x, dx, loss) < 1e-5);
}

TEST_CASE("adam drives a quadratic toward its minimum") {
  Param<double> p;
  p.setup("p", 1, 4);
  p.value << 2.0, -3.0, 0.5, 4.0;
  AdamConfig cfg;
  cfg.lr = 0.1;
  Adam<double> opt(cfg, {&p});
  for (int i = 0; i < 400; ++i) {
    p.grad = 2.0 * p.value;  // d/dp of sum(p^2)
    opt.step();
  }
  CHECK(p.value.cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("param hashing is order and content sensitive") {
  Param<double> a, b;
  a.setup("a", 2, 2);
  b.setup("b", 2, 2);
  const uint64_t h1 = hash_params<double>({&a, &b});
  CHECK(h1 == hash_params<double>({&a, &b}));
  CHECK(h1 != hash_params<double>({&b, &a}));
  a.value(0, 0) = 1e-16;
  CHECK(h1 != hash_params<double>({&a, &b}));
}
