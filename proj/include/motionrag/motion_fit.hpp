#pragma once

#include "motionrag/corpus.hpp"
#include "motionrag/video.hpp"

namespace motionrag::fit {

// Per-frame centroid of pixels whose mean-RGB luminance exceeds the
// threshold; frames with no foreground are dropped. Throws NoForeground when
// fewer than two frames survive.
struct CentroidTrack {
  std::vector<double> t, x, y;
};
CentroidTrack centroid_track(const VideoTensor& v, double lum_threshold = 0.1);

// Least-squares fit of each motion family's closed form to the centroid
// track; the best family wins (ties resolve toward Linear, and model
// complexity is charged via a BIC penalty so the richer families cannot win
// on absorbed noise alone). Fitted oscillation amplitude is signed: negative
// amplitude means the phase-flipped trajectory, which no corpus spec uses.
struct FittedMotion {
  corpus::MotionSpec spec;
  double x0 = 0.0, y0 = 0.0;  // fitted initial center
  double residual = 0.0;      // total squared residual of the winning family
  int used_frames = 0;
};

struct FitOptions {
  double lum_threshold = 0.1;
  // The periodic families degenerate into straight lines as omega/freq -> 0
  // (huge radius or amplitude), so the search floors sit well below the
  // corpus ranges but above the degenerate regime.
  double omega_min = 0.15, omega_max = 1.8;
  double freq_min = 0.04, freq_max = 0.49;
  // Fits whose radius/|amplitude| exceed this fraction of the frame are
  // discarded as non-physical.
  double extent_frac = 0.5;
  int grid = 180;
  int refine_iters = 60;
  // Residual per observation at or below which a track counts as exactly
  // linear (raster quantization floor); skips the model-selection contest.
  double linear_noise_floor = 0.04;
  // A periodic family must beat the linear residual by this factor (on top
  // of its BIC penalty); raster staircase noise is correlated, which lets
  // the extra parameters absorb more than white-noise accounting predicts.
  double periodic_margin = 0.5;
};

FittedMotion estimate_motion(const VideoTensor& v, const FitOptions& opt = {});

// Normalized parameter distance in [0,1]; family (or oscillation-axis)
// mismatch scores the maximum error 1.0.
double motion_error(const corpus::MotionSpec& truth, const corpus::MotionSpec& fitted,
                    const corpus::ParamRanges& ranges = {});

}  // namespace motionrag::fit
