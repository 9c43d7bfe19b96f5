#include <doctest.h>

#include "motionrag/errors.hpp"
#include "motionrag/motion_fit.hpp"
#include "motionrag/rng.hpp"

using namespace motionrag;
using namespace motionrag::corpus;
using namespace motionrag::fit;

TEST_CASE("estimate_motion: recovers family and parameters on rendered ground truth") {
  int checked = 0;
  for (int i = 0; i < 90; ++i) {
    const auto [app, motion] = sample_specs(31, i, 8, 32, 32);
    const VideoTensor v = render_video(app, motion, 8, 32, 32);
    const FittedMotion f = estimate_motion(v);
    REQUIRE(f.spec.kind == motion.kind);
    switch (motion.kind) {
      case MotionKind::Linear:
        CHECK(std::abs(f.spec.vx - motion.vx) <= std::max(0.05 * std::abs(motion.vx), 0.5));
        CHECK(std::abs(f.spec.vy - motion.vy) <= std::max(0.05 * std::abs(motion.vy), 0.5));
        break;
      case MotionKind::Circular:
        CHECK(std::abs(f.spec.radius - motion.radius) <= std::max(0.05 * motion.radius, 0.5));
        CHECK(std::abs(f.spec.omega - motion.omega) <= std::max(0.05 * std::abs(motion.omega), 0.05));
        break;
      case MotionKind::Oscillation:
        REQUIRE(f.spec.axis == motion.axis);
        CHECK(std::abs(f.spec.amplitude - motion.amplitude) <=
              std::max(0.05 * motion.amplitude, 0.5));
        CHECK(std::abs(f.spec.freq - motion.freq) <= std::max(0.05 * motion.freq, 0.02));
        break;
    }
    CHECK(std::abs(f.x0 - app.x0) <= 0.75);
    CHECK(std::abs(f.y0 - app.y0) <= 0.75);
    ++checked;
  }
  CHECK(checked == 90);
}

TEST_CASE("estimate_motion: static clip resolves to Linear (0,0)") {
  AppearanceSpec a;
  a.shape = ShapeKind::Disk;
  a.color = {0.9, 0.85, 0.1};
  a.size = 6;
  a.x0 = 14;
  a.y0 = 18;
  MotionSpec still;
  still.kind = MotionKind::Linear;
  const VideoTensor v = render_video(a, still, 8, 32, 32);
  const FittedMotion f = estimate_motion(v);
  CHECK(f.spec.kind == MotionKind::Linear);
  CHECK(std::abs(f.spec.vx) < 1e-9);
  CHECK(std::abs(f.spec.vy) < 1e-9);
  CHECK(f.x0 == doctest::Approx(14.0).epsilon(0.05));
}

TEST_CASE("estimate_motion: failure paths on noise") {
  SUBCASE("sub-threshold frames raise NoForeground") {
    VideoTensor dark(8, 16, 16);
    for (auto& x : dark.data) x = 0.05f;
    try {
      estimate_motion(dark);
      FAIL("expected NoForeground");
    } catch (const Error& e) {
      CHECK(e.code() == Err::NoForeground);
    }
  }
  SUBCASE("speckle noise fits with a large flagged residual") {
    // a few bright pixels jumping around per frame: the centroid track is
    // garbage and no family fits it cleanly
    VideoTensor noise(8, 16, 16);
    Rng rng(77);
    for (int t = 0; t < 8; ++t)
      for (int s = 0; s < 3; ++s) {
        const int y = static_cast<int>(rng.uniform_int(16));
        const int x = static_cast<int>(rng.uniform_int(16));
        for (int c = 0; c < 3; ++c) noise.at(t, y, x, c) = 1.0f;
      }
    const FittedMotion f = estimate_motion(noise);
    CHECK(f.residual > 0.32 * 2 * f.used_frames);  // well above the clean-track floor
  }
}

TEST_CASE("motion_error: pinned values") {
  MotionSpec truth;
  truth.kind = MotionKind::Linear;
  truth.vx = 1.0;
  truth.vy = -0.5;

  CHECK(motion_error(truth, truth) == 0.0);

  MotionSpec fitted = truth;
  fitted.vx = 1.44;  // |dvx| = 0.44 over width 4.4 -> 0.05 mean with dvy = 0
  CHECK(motion_error(truth, fitted) == doctest::Approx(0.05).epsilon(1e-9));

  MotionSpec circular;
  circular.kind = MotionKind::Circular;
  CHECK(motion_error(truth, circular) == 1.0);

  MotionSpec osc_a, osc_b;
  osc_a.kind = osc_b.kind = MotionKind::Oscillation;
  osc_a.axis = Axis::Horizontal;
  osc_b.axis = Axis::Vertical;
  osc_a.amplitude = osc_b.amplitude = 3.0;
  osc_a.freq = osc_b.freq = 0.1;
  CHECK(motion_error(osc_a, osc_b) == 1.0);
  CHECK(motion_error(osc_a, osc_a) == 0.0);

  // clipping at the maximum
  MotionSpec wild = truth;
  wild.vx = 100.0;
  CHECK(motion_error(truth, wild) == 1.0);
}
