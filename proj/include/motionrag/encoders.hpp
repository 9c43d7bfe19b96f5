#pragma once

#include "motionrag/nn.hpp"
#include "motionrag/sinusoid.hpp"
#include "motionrag/video.hpp"

namespace motionrag::enc {

// Token layout helpers shared by the featurizers and the diffusion model.
// A frame of H x W splits into (H/P)*(W/P) patches; each patch flattens to
// P*P*3 values in (dy, dx, c) order. Token order is (t, py, px).

template <class S>
nn::Mat<S> frame_to_patches(const VideoTensor& v, int t, int patch) {
  require(v.height % patch == 0 && v.width % patch == 0, Err::ShapeMismatch,
          "frame dims must be divisible by the patch size");
  const int hp = v.height / patch, wp = v.width / patch;
  nn::Mat<S> out(hp * wp, patch * patch * 3);
  for (int py = 0; py < hp; ++py)
    for (int px = 0; px < wp; ++px) {
      const int row = py * wp + px;
      int k = 0;
      for (int dy = 0; dy < patch; ++dy)
        for (int dx = 0; dx < patch; ++dx)
          for (int c = 0; c < 3; ++c)
            out(row, k++) = static_cast<S>(v.at(t, py * patch + dy, px * patch + dx, c));
    }
  return out;
}

template <class S>
nn::Mat<S> video_to_patches(const VideoTensor& v, int patch) {
  const int hp = v.height / patch, wp = v.width / patch;
  nn::Mat<S> out(v.frames * hp * wp, patch * patch * 3);
  for (int t = 0; t < v.frames; ++t)
    out.middleRows(static_cast<Eigen::Index>(t) * hp * wp, hp * wp) =
        frame_to_patches<S>(v, t, patch);
  return out;
}

template <class S>
VideoTensor patches_to_video(const nn::Mat<S>& tokens, int frames, int height, int width,
                             int patch) {
  const int hp = height / patch, wp = width / patch;
  require(tokens.rows() == static_cast<Eigen::Index>(frames) * hp * wp &&
              tokens.cols() == static_cast<Eigen::Index>(patch) * patch * 3,
          Err::ShapeMismatch, "token block does not match the video shape");
  VideoTensor v(frames, height, width);
  for (int t = 0; t < frames; ++t)
    for (int py = 0; py < hp; ++py)
      for (int px = 0; px < wp; ++px) {
        const Eigen::Index row = (static_cast<Eigen::Index>(t) * hp + py) * wp + px;
        int k = 0;
        for (int dy = 0; dy < patch; ++dy)
          for (int dx = 0; dx < patch; ++dx)
            for (int c = 0; c < 3; ++c)
              v.at(t, py * patch + dy, px * patch + dx, c) = static_cast<float>(tokens(row, k++));
      }
  return v;
}

struct EncoderConfig {
  int patch = 8;
  int d_enc = 64;
  uint64_t seed = 1234;
};

// Frozen motion featurizer: consecutive-frame differences, patchified, sent
// through a fixed seeded random projection, plus sinusoidal (t, y, x)
// positions. Stands in for a pretrained video encoder; all the motion signal
// of the toy task lives in the difference patches.
template <class S>
class VideoEncoder {
 public:
  explicit VideoEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
    Rng rng = Rng::fork(cfg.seed, 0);
    proj_.resize(cfg.patch * cfg.patch * 3, cfg.d_enc);
    for (Eigen::Index i = 0; i < proj_.size(); ++i)
      proj_.data()[i] = static_cast<S>(rng.normal());
  }

  nn::Mat<S> encode(const VideoTensor& v) const {
    require(v.frames >= 2, Err::ShapeMismatch, "need at least 2 frames");
    require(v.height % cfg_.patch == 0 && v.width % cfg_.patch == 0, Err::ShapeMismatch,
            "frame dims must be divisible by the patch size");
    const int hp = v.height / cfg_.patch, wp = v.width / cfg_.patch;
    const int per_frame = hp * wp;
    nn::Mat<S> diffs((v.frames - 1) * per_frame, cfg_.patch * cfg_.patch * 3);
    for (int t = 0; t + 1 < v.frames; ++t)
      diffs.middleRows(static_cast<Eigen::Index>(t) * per_frame, per_frame) =
          frame_to_patches<S>(v, t + 1, cfg_.patch) - frame_to_patches<S>(v, t, cfg_.patch);

    nn::Mat<S> tokens = diffs * proj_;
    const int dt = cfg_.d_enc / 3;
    for (int t = 0; t + 1 < v.frames; ++t)
      for (int py = 0; py < hp; ++py)
        for (int px = 0; px < wp; ++px) {
          const int row = (t * hp + py) * wp + px;
          add_sinusoid_slice(tokens, row, 0, dt, t);
          add_sinusoid_slice(tokens, row, dt, dt, py);
          add_sinusoid_slice(tokens, row, 2 * dt, cfg_.d_enc - 2 * dt, px);
        }
    return tokens;
  }

  const EncoderConfig& config() const { return cfg_; }
  const nn::Mat<S>& projection() const { return proj_; }

 private:
  EncoderConfig cfg_;
  nn::Mat<S> proj_;
};

// Frozen appearance featurizer for single frames; independent projection,
// 2D sinusoidal positions.
template <class S>
class ImageEncoder {
 public:
  explicit ImageEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
    Rng rng = Rng::fork(cfg.seed, 1);
    proj_.resize(cfg.patch * cfg.patch * 3, cfg.d_enc);
    for (Eigen::Index i = 0; i < proj_.size(); ++i)
      proj_.data()[i] = static_cast<S>(rng.normal());
  }

  nn::Mat<S> encode(const VideoTensor& v, int frame = 0) const {
    require(frame >= 0 && frame < v.frames, Err::ShapeMismatch, "frame index out of range");
    require(v.height % cfg_.patch == 0 && v.width % cfg_.patch == 0, Err::ShapeMismatch,
            "frame dims must be divisible by the patch size");
    nn::Mat<S> tokens = frame_to_patches<S>(v, frame, cfg_.patch) * proj_;
    const int hp = v.height / cfg_.patch, wp = v.width / cfg_.patch;
    const int half = cfg_.d_enc / 2;
    for (int py = 0; py < hp; ++py)
      for (int px = 0; px < wp; ++px) {
        const int row = py * wp + px;
        add_sinusoid_slice(tokens, row, 0, half, py);
        add_sinusoid_slice(tokens, row, half, cfg_.d_enc - half, px);
      }
    return tokens;
  }

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  nn::Mat<S> proj_;
};

}  // namespace motionrag::enc
