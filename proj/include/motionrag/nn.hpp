#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "motionrag/binio.hpp"
#include "motionrag/errors.hpp"
#include "motionrag/rng.hpp"

namespace motionrag::nn {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
struct Param {
  std::string name;
  Mat<S> value;
  Mat<S> grad;

  void setup(std::string n, int rows, int cols) {
    name = std::move(n);
    value = Mat<S>::Zero(rows, cols);
    grad = Mat<S>::Zero(rows, cols);
  }
  void init_normal(Rng& rng, double scale) {
    for (Eigen::Index i = 0; i < value.size(); ++i)
      value.data()[i] = static_cast<S>(rng.normal() * scale);
  }
  void fill(S v) { value.setConstant(v); }
  void zero_grad() { grad.setZero(); }
};

template <class S>
using ParamList = std::vector<Param<S>*>;

template <class S>
void zero_grads(const ParamList<S>& ps) {
  for (auto* p : ps) p->zero_grad();
}

template <class S>
size_t param_count(const ParamList<S>& ps) {
  size_t n = 0;
  for (auto* p : ps) n += static_cast<size_t>(p->value.size());
  return n;
}

// Order-sensitive digest of names, shapes and raw value bytes.
template <class S>
uint64_t hash_params(const ParamList<S>& ps) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto* p : ps) {
    h = binio::fnv1a64(p->name.data(), p->name.size(), h);
    const int64_t dims[2] = {p->value.rows(), p->value.cols()};
    h = binio::fnv1a64(dims, sizeof(dims), h);
    h = binio::fnv1a64(p->value.data(), sizeof(S) * p->value.size(), h);
  }
  return h;
}

// ---- activations ---------------------------------------------------------

template <class S>
S gelu_scalar(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * S(0.70710678118654752440)));
}

template <class S>
S gelu_grad_scalar(S x) {
  const S phi = std::exp(S(-0.5) * x * x) * S(0.39894228040143267794);  // N(0,1) pdf
  const S cdf = S(0.5) * (S(1) + std::erf(x * S(0.70710678118654752440)));
  return cdf + x * phi;
}

template <class S>
Mat<S> gelu(const Mat<S>& x) {
  return x.unaryExpr([](S v) { return gelu_scalar(v); });
}

template <class S>
Mat<S> gelu_grad(const Mat<S>& x) {
  return x.unaryExpr([](S v) { return gelu_grad_scalar(v); });
}

// ---- layers ---------------------------------------------------------------

template <class S>
struct Linear {
  Param<S> w;  // in x out
  Param<S> b;  // 1 x out

  void init(const std::string& name, int in, int out, Rng& rng, double scale,
            bool zero_weights = false) {
    w.setup(name + ".w", in, out);
    b.setup(name + ".b", 1, out);
    if (!zero_weights) w.init_normal(rng, scale);
  }

  Mat<S> forward(const Mat<S>& x) const {
    Mat<S> y = x * w.value;
    y.rowwise() += b.value.row(0);
    return y;
  }

  // Accumulates parameter grads; if dx != nullptr it is accumulated into.
  void backward(const Mat<S>& x, const Mat<S>& dy, Mat<S>* dx) {
    w.grad.noalias() += x.transpose() * dy;
    b.grad.row(0) += dy.colwise().sum();
    if (dx) dx->noalias() += dy * w.value.transpose();
  }

  void collect(ParamList<S>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <class S>
struct LayerNorm {
  Param<S> gamma, beta;

  struct Cache {
    Mat<S> xhat;
    Mat<S> inv_std;  // n x 1
  };

  void init(const std::string& name, int d) {
    gamma.setup(name + ".gamma", 1, d);
    gamma.fill(S(1));
    beta.setup(name + ".beta", 1, d);
  }

  Mat<S> forward(const Mat<S>& x, Cache& c) const {
    const Eigen::Index n = x.rows(), d = x.cols();
    c.xhat.resize(n, d);
    c.inv_std.resize(n, 1);
    Mat<S> y(n, d);
    for (Eigen::Index r = 0; r < n; ++r) {
      const S mu = x.row(r).mean();
      const S var = (x.row(r).array() - mu).square().sum() / static_cast<S>(d);
      const S is = S(1) / std::sqrt(var + S(1e-5));
      c.inv_std(r, 0) = is;
      c.xhat.row(r) = (x.row(r).array() - mu) * is;
      y.row(r) = c.xhat.row(r).cwiseProduct(gamma.value.row(0)) + beta.value.row(0);
    }
    return y;
  }

  void backward(const Cache& c, const Mat<S>& dy, Mat<S>* dx) {
    const Eigen::Index n = dy.rows(), d = dy.cols();
    for (Eigen::Index r = 0; r < n; ++r) {
      gamma.grad.row(0) += dy.row(r).cwiseProduct(c.xhat.row(r));
      beta.grad.row(0) += dy.row(r);
    }
    if (!dx) return;
    const S inv_d = S(1) / static_cast<S>(d);
    for (Eigen::Index r = 0; r < n; ++r) {
      Eigen::Matrix<S, 1, Eigen::Dynamic> dxhat =
          dy.row(r).cwiseProduct(gamma.value.row(0));
      const S s1 = dxhat.sum();
      const S s2 = dxhat.cwiseProduct(c.xhat.row(r)).sum();
      dx->row(r) +=
          c.inv_std(r, 0) * (dxhat.array() - inv_d * s1 - c.xhat.row(r).array() * inv_d * s2)
              .matrix();
    }
  }

  void collect(ParamList<S>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

// Attention weights below this are flushed to exact zero. Eigen's vectorized
// exp clamps its argument instead of underflowing, which would otherwise leave
// subnormal weights where scalar exp (and the no-flow contract) produce 0.
inline constexpr double kAttnFlush = 1e-290;

// Row-major boolean attention mask; allowed(i, j) means query token i may
// attend to key token j.
struct BoolMask {
  int rows = 0, cols = 0;
  std::vector<uint8_t> bits;

  BoolMask() = default;
  BoolMask(int r, int c, bool value = false)
      : rows(r), cols(c), bits(static_cast<size_t>(r) * c, value ? 1 : 0) {}
  bool at(int i, int j) const { return bits[static_cast<size_t>(i) * cols + j] != 0; }
  void set(int i, int j, bool v) { bits[static_cast<size_t>(i) * cols + j] = v ? 1 : 0; }
};

// Multi-head attention. The masked path touches only allowed keys, so hidden
// states are exactly independent of masked-out positions.
template <class S>
struct Mha {
  int heads = 1;
  Linear<S> wq, wk, wv, wo;

  struct Cache {
    Mat<S> q_in, kv_in;
    Mat<S> q, k, v;            // projected, N x d_model
    std::vector<Mat<S>> attn;  // per head, Nq x Nk (zeros where masked)
    Mat<S> ctx;                // Nq x d_model, pre-output-projection
    const BoolMask* mask = nullptr;
  };

  void init(const std::string& name, int d_q_in, int d_kv_in, int d_model, int n_heads, Rng& rng,
            double scale) {
    require(d_model % n_heads == 0, Err::ConfigInvalid,
            name + ": d_model must be divisible by heads");
    heads = n_heads;
    wq.init(name + ".wq", d_q_in, d_model, rng, scale);
    wk.init(name + ".wk", d_kv_in, d_model, rng, scale);
    wv.init(name + ".wv", d_kv_in, d_model, rng, scale);
    wo.init(name + ".wo", d_model, d_model, rng, scale);
  }

  Mat<S> forward(const Mat<S>& q_in, const Mat<S>& kv_in, const BoolMask* mask, Cache& c) const {
    const int nq = static_cast<int>(q_in.rows());
    const int nk = static_cast<int>(kv_in.rows());
    if (mask)
      require(mask->rows == nq && mask->cols == nk, Err::ShapeMismatch,
              "attention mask does not match sequence lengths");
    c.q_in = q_in;
    c.kv_in = kv_in;
    c.mask = mask;
    c.q = wq.forward(q_in);
    c.k = wk.forward(kv_in);
    c.v = wv.forward(kv_in);
    const int d_model = static_cast<int>(c.q.cols());
    const int dh = d_model / heads;
    const S sc = S(1) / std::sqrt(static_cast<S>(dh));
    c.attn.assign(heads, Mat<S>());
    c.ctx.setZero(nq, d_model);

    for (int h = 0; h < heads; ++h) {
      auto qh = c.q.middleCols(h * dh, dh);
      auto kh = c.k.middleCols(h * dh, dh);
      auto vh = c.v.middleCols(h * dh, dh);
      Mat<S>& a = c.attn[h];
      if (!mask) {
        a.noalias() = qh * kh.transpose();
        a *= sc;
        for (int i = 0; i < nq; ++i) {
          const S m = a.row(i).maxCoeff();
          a.row(i) = (a.row(i).array() - m).exp();
          a.row(i) = (a.row(i).array() < S(kAttnFlush)).select(S(0), a.row(i));
          a.row(i) /= a.row(i).sum();
        }
        c.ctx.middleCols(h * dh, dh).noalias() = a * vh;
      } else {
        a.setZero(nq, nk);
        for (int i = 0; i < nq; ++i) {
          S m = std::numeric_limits<S>::lowest();
          for (int j = 0; j < nk; ++j)
            if (mask->at(i, j)) m = std::max(m, sc * qh.row(i).dot(kh.row(j)));
          require(m != std::numeric_limits<S>::lowest(), Err::ShapeMismatch,
                  "attention row with no allowed keys");
          S denom = S(0);
          for (int j = 0; j < nk; ++j) {
            if (!mask->at(i, j)) continue;
            S e = std::exp(sc * qh.row(i).dot(kh.row(j)) - m);
            if (e < S(kAttnFlush)) e = S(0);
            a(i, j) = e;
            denom += e;
          }
          for (int j = 0; j < nk; ++j) {
            if (!mask->at(i, j)) continue;
            a(i, j) /= denom;
            c.ctx.row(i).segment(h * dh, dh) += a(i, j) * vh.row(j);
          }
        }
      }
    }
    return wo.forward(c.ctx);
  }

  void backward(Cache& c, const Mat<S>& d_out, Mat<S>* dq_in, Mat<S>* dkv_in) {
    const int d_model = static_cast<int>(c.q.cols());
    const int dh = d_model / heads;
    const S sc = S(1) / std::sqrt(static_cast<S>(dh));

    Mat<S> dctx = Mat<S>::Zero(c.ctx.rows(), c.ctx.cols());
    wo.backward(c.ctx, d_out, &dctx);

    Mat<S> dq = Mat<S>::Zero(c.q.rows(), d_model);
    Mat<S> dk = Mat<S>::Zero(c.k.rows(), d_model);
    Mat<S> dv = Mat<S>::Zero(c.v.rows(), d_model);
    for (int h = 0; h < heads; ++h) {
      auto qh = c.q.middleCols(h * dh, dh);
      auto kh = c.k.middleCols(h * dh, dh);
      auto vh = c.v.middleCols(h * dh, dh);
      const Mat<S>& a = c.attn[h];
      auto dctx_h = dctx.middleCols(h * dh, dh);

      Mat<S> da = dctx_h * vh.transpose();
      dv.middleCols(h * dh, dh).noalias() = a.transpose() * dctx_h;
      // softmax backward; masked entries have a == 0 and contribute nothing
      Mat<S> ds(a.rows(), a.cols());
      for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const S dot = a.row(i).cwiseProduct(da.row(i)).sum();
        ds.row(i) = a.row(i).cwiseProduct((da.row(i).array() - dot).matrix());
      }
      dq.middleCols(h * dh, dh).noalias() = sc * (ds * kh);
      dk.middleCols(h * dh, dh).noalias() = sc * (ds.transpose() * qh);
    }
    wq.backward(c.q_in, dq, dq_in);
    wk.backward(c.kv_in, dk, dkv_in);
    wv.backward(c.kv_in, dv, dkv_in);
  }

  void collect(ParamList<S>& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
  }
};

template <class S>
struct FeedForward {
  Linear<S> fc1, fc2;

  struct Cache {
    Mat<S> x, h_pre, h_act;
  };

  void init(const std::string& name, int d, int d_ff, Rng& rng, double scale) {
    fc1.init(name + ".fc1", d, d_ff, rng, scale);
    fc2.init(name + ".fc2", d_ff, d, rng, scale);
  }

  Mat<S> forward(const Mat<S>& x, Cache& c) const {
    c.x = x;
    c.h_pre = fc1.forward(x);
    c.h_act = gelu(c.h_pre);
    return fc2.forward(c.h_act);
  }

  void backward(Cache& c, const Mat<S>& dy, Mat<S>* dx) {
    Mat<S> dh_act = Mat<S>::Zero(c.h_act.rows(), c.h_act.cols());
    fc2.backward(c.h_act, dy, &dh_act);
    Mat<S> dh_pre = dh_act.cwiseProduct(gelu_grad(c.h_pre));
    fc1.backward(c.x, dh_pre, dx);
  }

  void collect(ParamList<S>& out) {
    fc1.collect(out);
    fc2.collect(out);
  }
};

// ---- optimizer -------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <class S>
class Adam {
 public:
  Adam(AdamConfig cfg, ParamList<S> params) : cfg_(cfg), params_(std::move(params)) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto* p : params_) {
      m_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() {
    ++t_;
    const S bc1 = S(1) - static_cast<S>(std::pow(cfg_.beta1, static_cast<double>(t_)));
    const S bc2 = S(1) - static_cast<S>(std::pow(cfg_.beta2, static_cast<double>(t_)));
    const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
    const S lr = static_cast<S>(cfg_.lr), eps = static_cast<S>(cfg_.eps);
    const S wd = static_cast<S>(cfg_.weight_decay);
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      m_[i] = b1 * m_[i] + (S(1) - b1) * p.grad;
      v_[i] = b2 * v_[i] + (S(1) - b2) * p.grad.cwiseProduct(p.grad);
      const Mat<S> mh = m_[i] / bc1;
      const Mat<S> vh = v_[i] / bc2;
      p.value -= lr * (mh.array() / (vh.array().sqrt() + eps)).matrix();
      if (wd != S(0)) p.value -= lr * wd * p.value;
    }
  }

  const ParamList<S>& params() const { return params_; }

 private:
  AdamConfig cfg_;
  ParamList<S> params_;
  std::vector<Mat<S>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace motionrag::nn
