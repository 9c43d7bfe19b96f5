#include "motionrag/motion_fit.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "motionrag/errors.hpp"

namespace motionrag::fit {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct LinearFit {
  double x0, vx, y0, vy, residual;
};

LinearFit fit_linear(const CentroidTrack& tr) {
  const size_t n = tr.t.size();
  double st = 0, stt = 0;
  for (double t : tr.t) {
    st += t;
    stt += t * t;
  }
  const double det = n * stt - st * st;
  LinearFit f{};
  auto solve = [&](const std::vector<double>& v, double& intercept, double& slope) {
    double sv = 0, stv = 0;
    for (size_t i = 0; i < n; ++i) {
      sv += v[i];
      stv += tr.t[i] * v[i];
    }
    if (det == 0.0) {
      intercept = sv / n;
      slope = 0.0;
      return;
    }
    slope = (n * stv - st * sv) / det;
    intercept = (sv - slope * st) / n;
  };
  solve(tr.x, f.x0, f.vx);
  solve(tr.y, f.y0, f.vy);
  f.residual = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double ex = tr.x[i] - (f.x0 + f.vx * tr.t[i]);
    const double ey = tr.y[i] - (f.y0 + f.vy * tr.t[i]);
    f.residual += ex * ex + ey * ey;
  }
  return f;
}

struct CircularFit {
  double cx, cy, a, b, omega, residual;  // x = cx + a cos - b sin, y = cy + a sin + b cos
};

// For fixed omega the model is linear in (cx, cy, a, b); both coordinates
// share (a, b) so they are solved jointly.
CircularFit circular_at_omega(const CentroidTrack& tr, double omega) {
  const size_t n = tr.t.size();
  Eigen::MatrixXd design(2 * n, 4);
  Eigen::VectorXd rhs(2 * n);
  for (size_t i = 0; i < n; ++i) {
    const double c = std::cos(omega * tr.t[i]);
    const double s = std::sin(omega * tr.t[i]);
    design.row(2 * i) << 1.0, 0.0, c, -s;
    rhs(2 * i) = tr.x[i];
    design.row(2 * i + 1) << 0.0, 1.0, s, c;
    rhs(2 * i + 1) = tr.y[i];
  }
  const Eigen::VectorXd sol = design.colPivHouseholderQr().solve(rhs);
  CircularFit f{sol(0), sol(1), sol(2), sol(3), omega, 0.0};
  f.residual = (design * sol - rhs).squaredNorm();
  return f;
}

CircularFit fit_circular(const CentroidTrack& tr, const FitOptions& opt) {
  CircularFit best{};
  best.residual = 1e300;
  for (int sign = 0; sign < 2; ++sign) {
    const double sgn = sign == 0 ? 1.0 : -1.0;
    double best_w = sgn * opt.omega_min;
    double best_r = 1e300;
    for (int g = 0; g < opt.grid; ++g) {
      const double w =
          sgn * (opt.omega_min + (opt.omega_max - opt.omega_min) * g / (opt.grid - 1));
      const double r = circular_at_omega(tr, w).residual;
      if (r < best_r) {
        best_r = r;
        best_w = w;
      }
    }
    // local ternary refinement around the grid winner
    const double step = (opt.omega_max - opt.omega_min) / (opt.grid - 1);
    double lo = best_w - sgn * step, hi = best_w + sgn * step;
    if (sgn < 0) std::swap(lo, hi);
    lo = std::clamp(lo, -opt.omega_max, opt.omega_max);
    hi = std::clamp(hi, -opt.omega_max, opt.omega_max);
    for (int it = 0; it < opt.refine_iters; ++it) {
      const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
      if (circular_at_omega(tr, m1).residual <= circular_at_omega(tr, m2).residual)
        hi = m2;
      else
        lo = m1;
    }
    const CircularFit f = circular_at_omega(tr, (lo + hi) / 2.0);
    if (f.residual < best.residual) best = f;
  }
  return best;
}

struct OscFit {
  corpus::Axis axis;
  double m0, amp, freq, other, residual;
};

OscFit osc_at_freq(const CentroidTrack& tr, corpus::Axis axis, double freq) {
  const size_t n = tr.t.size();
  const std::vector<double>& mv = axis == corpus::Axis::Horizontal ? tr.x : tr.y;
  const std::vector<double>& fx = axis == corpus::Axis::Horizontal ? tr.y : tr.x;
  double s1 = 0, ss = 0, sss = 0, sv = 0, ssv = 0;
  for (size_t i = 0; i < n; ++i) {
    const double s = std::sin(kTwoPi * freq * tr.t[i]);
    s1 += 1.0;
    ss += s;
    sss += s * s;
    sv += mv[i];
    ssv += s * mv[i];
  }
  const double det = s1 * sss - ss * ss;
  OscFit f{axis, 0, 0, freq, 0, 0};
  if (det == 0.0) {
    f.m0 = sv / n;
    f.amp = 0.0;
  } else {
    f.amp = (s1 * ssv - ss * sv) / det;
    f.m0 = (sv - f.amp * ss) / s1;
  }
  double mfix = 0;
  for (double v : fx) mfix += v;
  mfix /= n;
  f.other = mfix;
  for (size_t i = 0; i < n; ++i) {
    const double em = mv[i] - (f.m0 + f.amp * std::sin(kTwoPi * freq * tr.t[i]));
    const double ef = fx[i] - mfix;
    f.residual += em * em + ef * ef;
  }
  return f;
}

OscFit fit_osc(const CentroidTrack& tr, const FitOptions& opt) {
  OscFit best{};
  best.residual = 1e300;
  for (corpus::Axis axis : {corpus::Axis::Horizontal, corpus::Axis::Vertical}) {
    double best_f = opt.freq_min, best_r = 1e300;
    for (int g = 0; g < opt.grid; ++g) {
      const double fq = opt.freq_min + (opt.freq_max - opt.freq_min) * g / (opt.grid - 1);
      const double r = osc_at_freq(tr, axis, fq).residual;
      if (r < best_r) {
        best_r = r;
        best_f = fq;
      }
    }
    const double step = (opt.freq_max - opt.freq_min) / (opt.grid - 1);
    double lo = std::max(opt.freq_min, best_f - step);
    double hi = std::min(opt.freq_max, best_f + step);
    for (int it = 0; it < opt.refine_iters; ++it) {
      const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
      if (osc_at_freq(tr, axis, m1).residual <= osc_at_freq(tr, axis, m2).residual)
        hi = m2;
      else
        lo = m1;
    }
    const OscFit f = osc_at_freq(tr, axis, (lo + hi) / 2.0);
    if (f.residual < best.residual) best = f;
  }
  return best;
}

double bic(double rss, int n_obs, int k) {
  return n_obs * std::log(std::max(rss, 1e-12) / n_obs) + k * std::log(static_cast<double>(n_obs));
}

}  // namespace

CentroidTrack centroid_track(const VideoTensor& v, double lum_threshold) {
  CentroidTrack tr;
  for (int t = 0; t < v.frames; ++t) {
    double sx = 0, sy = 0;
    long count = 0;
    for (int y = 0; y < v.height; ++y)
      for (int x = 0; x < v.width; ++x) {
        const double lum =
            (v.at(t, y, x, 0) + v.at(t, y, x, 1) + v.at(t, y, x, 2)) / 3.0;
        if (lum > lum_threshold) {
          sx += x;
          sy += y;
          ++count;
        }
      }
    if (count > 0) {
      tr.t.push_back(t);
      tr.x.push_back(sx / count);
      tr.y.push_back(sy / count);
    }
  }
  if (tr.t.size() < 2)
    raise(Err::NoForeground, "only " + std::to_string(tr.t.size()) +
                                 " frames have pixels above the luminance threshold");
  return tr;
}

FittedMotion estimate_motion(const VideoTensor& v, const FitOptions& opt) {
  const CentroidTrack tr = centroid_track(v, opt.lum_threshold);
  const int n_obs = static_cast<int>(2 * tr.t.size());

  const LinearFit lf = fit_linear(tr);
  FittedMotion out;
  out.used_frames = static_cast<int>(tr.t.size());

  // A track at the raster quantization floor is linear by construction.
  if (lf.residual <= opt.linear_noise_floor * n_obs) {
    out.spec.kind = corpus::MotionKind::Linear;
    out.spec.vx = lf.vx;
    out.spec.vy = lf.vy;
    out.x0 = lf.x0;
    out.y0 = lf.y0;
    out.residual = lf.residual;
    return out;
  }

  CircularFit cf = fit_circular(tr, opt);
  OscFit of = fit_osc(tr, opt);
  const double max_extent = opt.extent_frac * std::min(v.height, v.width);
  if (std::hypot(cf.a, cf.b) > max_extent || cf.residual > opt.periodic_margin * lf.residual)
    cf.residual = 1e300;
  if (std::abs(of.amp) > max_extent || of.residual > opt.periodic_margin * lf.residual)
    of.residual = 1e300;
  const double scores[3] = {bic(lf.residual, n_obs, 4), bic(cf.residual, n_obs, 5),
                            bic(of.residual, n_obs, 4)};
  const double best = std::min({scores[0], scores[1], scores[2]});

  if (scores[0] <= best + 1e-9) {
    out.spec.kind = corpus::MotionKind::Linear;
    out.spec.vx = lf.vx;
    out.spec.vy = lf.vy;
    out.x0 = lf.x0;
    out.y0 = lf.y0;
    out.residual = lf.residual;
  } else if (scores[1] <= best + 1e-9) {
    out.spec.kind = corpus::MotionKind::Circular;
    out.spec.radius = std::hypot(cf.a, cf.b);
    out.spec.omega = cf.omega;
    out.spec.phase = std::atan2(cf.b, cf.a);
    out.x0 = cf.cx + cf.a;
    out.y0 = cf.cy + cf.b;
    out.residual = cf.residual;
  } else {
    out.spec.kind = corpus::MotionKind::Oscillation;
    out.spec.amplitude = of.amp;
    out.spec.freq = of.freq;
    out.spec.axis = of.axis;
    if (of.axis == corpus::Axis::Horizontal) {
      out.x0 = of.m0;
      out.y0 = of.other;
    } else {
      out.x0 = of.other;
      out.y0 = of.m0;
    }
    out.residual = of.residual;
  }
  return out;
}

double motion_error(const corpus::MotionSpec& truth, const corpus::MotionSpec& fitted,
                    const corpus::ParamRanges& r) {
  if (truth.kind != fitted.kind) return 1.0;
  double e = 1.0;
  switch (truth.kind) {
    case corpus::MotionKind::Linear: {
      const double width = 2.0 * r.speed_max;
      e = 0.5 * (std::abs(truth.vx - fitted.vx) + std::abs(truth.vy - fitted.vy)) / width;
      break;
    }
    case corpus::MotionKind::Circular: {
      e = 0.5 * (std::abs(truth.radius - fitted.radius) / (r.radius_max - r.radius_min) +
                 std::abs(truth.omega - fitted.omega) / (2.0 * r.omega_max));
      break;
    }
    case corpus::MotionKind::Oscillation: {
      if (truth.axis != fitted.axis) return 1.0;
      e = 0.5 * (std::abs(truth.amplitude - fitted.amplitude) / (r.amp_max - r.amp_min) +
                 std::abs(truth.freq - fitted.freq) / (r.freq_max - r.freq_min));
      break;
    }
  }
  return std::clamp(e, 0.0, 1.0);
}

}  // namespace motionrag::fit
