#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "motionrag/nn.hpp"

namespace testutil {

// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("motionrag_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline uint64_t hash_file(const std::filesystem::path& p) {
  auto is = motionrag::binio::open_in(p);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[4096];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    h = motionrag::binio::fnv1a64(buf, static_cast<size_t>(is.gcount()), h);
    if (!is) break;
  }
  return h;
}

// Central finite differences over every scalar of every parameter; the
// analytic grads must already be accumulated. Returns the worst relative
// error. The 1e-6 denominator floor covers gradient components so small that
// the difference quotient itself is cancellation-limited (|fd| ~ 1e-8 with an
// O(1) loss leaves only ~1e-11 of signal at step 1e-5).
inline double max_rel_err_params(const motionrag::nn::ParamList<double>& params,
                                 const std::function<double()>& forward_loss,
                                 double step = 1e-5) {
  double worst = 0.0;
  for (auto* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double orig = p->value.data()[i];
      p->value.data()[i] = orig + step;
      const double lp = forward_loss();
      p->value.data()[i] = orig - step;
      const double lm = forward_loss();
      p->value.data()[i] = orig;
      const double fd = (lp - lm) / (2.0 * step);
      const double an = p->grad.data()[i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

// Same contract for gradients with respect to an input matrix.
inline double max_rel_err_input(motionrag::nn::Mat<double>& input,
                                const motionrag::nn::Mat<double>& analytic,
                                const std::function<double()>& forward_loss,
                                double step = 1e-5) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < input.size(); ++i) {
    const double orig = input.data()[i];
    input.data()[i] = orig + step;
    const double lp = forward_loss();
    input.data()[i] = orig - step;
    const double lm = forward_loss();
    input.data()[i] = orig;
    const double fd = (lp - lm) / (2.0 * step);
    const double an = analytic.data()[i];
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
    worst = std::max(worst, std::abs(fd - an) / denom);
  }
  return worst;
}

inline motionrag::nn::Mat<double> random_mat(motionrag::Rng& rng, int rows, int cols,
                                             double scale = 1.0) {
  motionrag::nn::Mat<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scale;
  return m;
}

}  // namespace testutil
