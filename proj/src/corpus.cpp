#include "motionrag/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "motionrag/binio.hpp"
#include "motionrag/errors.hpp"
#include "motionrag/parallel.hpp"
#include "motionrag/rng.hpp"

namespace motionrag::corpus {

using json = nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

struct NamedColor {
  const char* name;
  std::array<double, 3> rgb;
};

// All palette entries stay well above the 0.1 luminance threshold used by the
// motion estimator, so thresholding against the zero background is unambiguous.
constexpr int kPaletteSize = 8;
const NamedColor kPalette[kPaletteSize] = {
    {"red", {0.90, 0.10, 0.10}},    {"green", {0.10, 0.80, 0.15}},
    {"blue", {0.15, 0.25, 0.90}},   {"yellow", {0.90, 0.85, 0.10}},
    {"magenta", {0.85, 0.15, 0.80}}, {"cyan", {0.10, 0.80, 0.85}},
    {"orange", {0.95, 0.55, 0.10}}, {"white", {0.95, 0.95, 0.95}},
};

const PhraseVocab kDefaultVocab{
    "default",
    {"slowly", "steadily", "quickly"},
    {"right", "up-right", "up", "up-left", "left", "down-left", "down", "down-right"},
    "moving",
    "staying in place",
    "moving in circles",
    "bouncing side to side",
    "bobbing up and down",
};

// Shares no motion word with the default vocabulary (tokenized on
// non-alphanumerics), which makes cross-vocabulary retrieval blind to motion.
const PhraseVocab kAltVocab{
    "alt",
    {"gently", "evenly", "rapidly"},
    {"east", "north-east", "north", "north-west", "west", "south-west", "south", "south-east"},
    "gliding",
    "holding position",
    "tracing loops",
    "swaying sideways",
    "nodding vertically",
};

int speed_bin(double v, double lo, double hi) { return v < lo ? 0 : (v < hi ? 1 : 2); }

bool inside_shape(ShapeKind s, double dx, double dy, double size) {
  const double h = size / 2.0;
  switch (s) {
    case ShapeKind::Square:
      return std::abs(dx) <= h && std::abs(dy) <= h;
    case ShapeKind::Disk:
      return dx * dx + dy * dy <= h * h;
    case ShapeKind::Cross: {
      const double arm = size / 6.0;
      return (std::abs(dx) <= h && std::abs(dy) <= arm) ||
             (std::abs(dy) <= h && std::abs(dx) <= arm);
    }
  }
  return false;
}

// Analytic bounds on the shape center over the whole clip.
void center_bounds(const AppearanceSpec& app, const MotionSpec& m, int T, double& xmin,
                   double& xmax, double& ymin, double& ymax) {
  switch (m.kind) {
    case MotionKind::Linear: {
      const double xe = app.x0 + m.vx * (T - 1);
      const double ye = app.y0 + m.vy * (T - 1);
      xmin = std::min(app.x0, xe);
      xmax = std::max(app.x0, xe);
      ymin = std::min(app.y0, ye);
      ymax = std::max(app.y0, ye);
      break;
    }
    case MotionKind::Circular: {
      const double cx = app.x0 - m.radius * std::cos(m.phase);
      const double cy = app.y0 - m.radius * std::sin(m.phase);
      xmin = cx - m.radius;
      xmax = cx + m.radius;
      ymin = cy - m.radius;
      ymax = cy + m.radius;
      break;
    }
    case MotionKind::Oscillation: {
      xmin = xmax = app.x0;
      ymin = ymax = app.y0;
      if (m.axis == Axis::Horizontal) {
        xmin -= m.amplitude;
        xmax += m.amplitude;
      } else {
        ymin -= m.amplitude;
        ymax += m.amplitude;
      }
      break;
    }
  }
}

std::string motion_phrase(const MotionSpec& m, const PhraseVocab& v) {
  const SpeedBins bins;
  switch (m.kind) {
    case MotionKind::Linear: {
      const double speed = std::hypot(m.vx, m.vy);
      if (speed < 0.05) return v.still_phrase;
      // Screen y grows downward; "up" means negative vy.
      const double theta = std::atan2(-m.vy, m.vx);
      const int dir = (static_cast<int>(std::lround(theta / (kPi / 4.0))) % 8 + 8) % 8;
      return v.linear_verb + " " + v.directions[dir] + " " +
             v.adverbs[speed_bin(speed, bins.linear_lo, bins.linear_hi)];
    }
    case MotionKind::Circular:
      return v.circular_phrase + " " +
             v.adverbs[speed_bin(std::abs(m.omega), bins.omega_lo, bins.omega_hi)];
    case MotionKind::Oscillation: {
      const auto& phrase = m.axis == Axis::Horizontal ? v.osc_horizontal : v.osc_vertical;
      return phrase + " " + v.adverbs[speed_bin(m.freq, bins.freq_lo, bins.freq_hi)];
    }
  }
  return v.still_phrase;
}

const char* kind_str(MotionKind k) {
  switch (k) {
    case MotionKind::Linear: return "linear";
    case MotionKind::Circular: return "circular";
    case MotionKind::Oscillation: return "oscillation";
  }
  return "?";
}
const char* shape_str(ShapeKind s) {
  switch (s) {
    case ShapeKind::Square: return "square";
    case ShapeKind::Disk: return "disk";
    case ShapeKind::Cross: return "cross";
  }
  return "?";
}

MotionKind parse_kind(const std::string& s) {
  if (s == "linear") return MotionKind::Linear;
  if (s == "circular") return MotionKind::Circular;
  if (s == "oscillation") return MotionKind::Oscillation;
  raise(Err::ManifestCorrupt, "unknown motion kind '" + s + "'");
}
ShapeKind parse_shape(const std::string& s) {
  if (s == "square") return ShapeKind::Square;
  if (s == "disk") return ShapeKind::Disk;
  if (s == "cross") return ShapeKind::Cross;
  raise(Err::ManifestCorrupt, "unknown shape '" + s + "'");
}

json motion_to_json(const MotionSpec& m) {
  json j;
  j["kind"] = kind_str(m.kind);
  switch (m.kind) {
    case MotionKind::Linear:
      j["vx"] = m.vx;
      j["vy"] = m.vy;
      break;
    case MotionKind::Circular:
      j["radius"] = m.radius;
      j["omega"] = m.omega;
      j["phase"] = m.phase;
      break;
    case MotionKind::Oscillation:
      j["amplitude"] = m.amplitude;
      j["freq"] = m.freq;
      j["axis"] = m.axis == Axis::Horizontal ? "horizontal" : "vertical";
      break;
  }
  return j;
}

MotionSpec motion_from_json(const json& j) {
  MotionSpec m;
  m.kind = parse_kind(j.at("kind").get<std::string>());
  switch (m.kind) {
    case MotionKind::Linear:
      m.vx = j.at("vx").get<double>();
      m.vy = j.at("vy").get<double>();
      break;
    case MotionKind::Circular:
      m.radius = j.at("radius").get<double>();
      m.omega = j.at("omega").get<double>();
      m.phase = j.at("phase").get<double>();
      break;
    case MotionKind::Oscillation:
      m.amplitude = j.at("amplitude").get<double>();
      m.freq = j.at("freq").get<double>();
      m.axis = j.at("axis").get<std::string>() == "vertical" ? Axis::Vertical : Axis::Horizontal;
      break;
  }
  return m;
}

json appearance_to_json(const AppearanceSpec& a) {
  return json{{"shape", shape_str(a.shape)},
              {"color", a.color},
              {"size", a.size},
              {"x0", a.x0},
              {"y0", a.y0}};
}

AppearanceSpec appearance_from_json(const json& j) {
  AppearanceSpec a;
  a.shape = parse_shape(j.at("shape").get<std::string>());
  const auto c = j.at("color");
  if (!c.is_array() || c.size() != 3) raise(Err::ManifestCorrupt, "color must have 3 components");
  for (int i = 0; i < 3; ++i) a.color[i] = c[i].get<double>();
  a.size = j.at("size").get<double>();
  a.x0 = j.at("x0").get<double>();
  a.y0 = j.at("y0").get<double>();
  return a;
}

}  // namespace

const PhraseVocab& vocab(const std::string& name) {
  if (name == "default") return kDefaultVocab;
  if (name == "alt") return kAltVocab;
  raise(Err::ConfigInvalid, "unknown vocabulary '" + name + "'");
}

std::string color_name(const std::array<double, 3>& rgb) {
  int best = 0;
  double best_d = 1e300;
  for (int i = 0; i < kPaletteSize; ++i) {
    double d = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double e = rgb[c] - kPalette[i].rgb[c];
      d += e * e;
    }
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return kPalette[best].name;
}

std::string shape_name(ShapeKind s) { return shape_str(s); }

std::string make_caption(const AppearanceSpec& app, const MotionSpec& motion,
                         const std::string& vocab_name) {
  const PhraseVocab& v = vocab(vocab_name);
  return "a " + color_name(app.color) + " " + shape_name(app.shape) + " " +
         motion_phrase(motion, v);
}

std::pair<double, double> position_at(const AppearanceSpec& app, const MotionSpec& m, double t) {
  switch (m.kind) {
    case MotionKind::Linear:
      return {app.x0 + m.vx * t, app.y0 + m.vy * t};
    case MotionKind::Circular: {
      const double cx = app.x0 - m.radius * std::cos(m.phase);
      const double cy = app.y0 - m.radius * std::sin(m.phase);
      return {cx + m.radius * std::cos(m.omega * t + m.phase),
              cy + m.radius * std::sin(m.omega * t + m.phase)};
    }
    case MotionKind::Oscillation: {
      const double off = m.amplitude * std::sin(kTwoPi * m.freq * t);
      if (m.axis == Axis::Horizontal) return {app.x0 + off, app.y0};
      return {app.x0, app.y0 + off};
    }
  }
  return {app.x0, app.y0};
}

VideoTensor render_video(const AppearanceSpec& app, const MotionSpec& motion, int T, int H,
                         int W) {
  require(T >= 2, Err::ConfigInvalid, "need at least 2 frames");
  require(app.size >= 3.0, Err::ConfigInvalid, "shape size must be >= 3");
  for (double v : {motion.vx, motion.vy, motion.radius, motion.omega, motion.phase,
                   motion.amplitude, motion.freq})
    require(std::isfinite(v), Err::ConfigInvalid, "motion parameters must be finite");

  double xmin, xmax, ymin, ymax;
  center_bounds(app, motion, T, xmin, xmax, ymin, ymax);
  const double h = app.size / 2.0;
  if (xmin - h < 0.0 || xmax + h > W - 1 || ymin - h < 0.0 || ymax + h > H - 1) {
    std::ostringstream os;
    os << "center range x [" << xmin << ", " << xmax << "] y [" << ymin << ", " << ymax
       << "] with half-size " << h << " exceeds " << W << "x" << H;
    raise(Err::EnvelopeOutOfBounds, os.str());
  }

  VideoTensor v(T, H, W);
  for (int t = 0; t < T; ++t) {
    const auto [cx, cy] = position_at(app, motion, t);
    const int x_lo = std::max(0, static_cast<int>(std::floor(cx - h)));
    const int x_hi = std::min(W - 1, static_cast<int>(std::ceil(cx + h)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(cy - h)));
    const int y_hi = std::min(H - 1, static_cast<int>(std::ceil(cy + h)));
    for (int y = y_lo; y <= y_hi; ++y)
      for (int x = x_lo; x <= x_hi; ++x)
        if (inside_shape(app.shape, x - cx, y - cy, app.size))
          for (int c = 0; c < 3; ++c) v.at(t, y, x, c) = static_cast<float>(app.color[c]);
  }
  return v;
}

std::pair<AppearanceSpec, MotionSpec> sample_specs(uint64_t seed, uint64_t item, int T, int H,
                                                   int W, const ParamRanges& base) {
  // Pixel-valued ranges are calibrated for 32x32 frames; rescale with the
  // frame so the envelope always fits (no-op at the default resolution).
  const double scale = std::min(H, W) / 32.0;
  ParamRanges r = base;
  r.size_min = std::max(3.0, base.size_min * scale);
  r.size_max = std::max(r.size_min + 0.5, base.size_max * scale);
  r.speed_min = base.speed_min * scale;
  r.speed_max = base.speed_max * scale;
  r.radius_min = base.radius_min * scale;
  r.radius_max = base.radius_max * scale;
  r.amp_min = base.amp_min * scale;
  r.amp_max = base.amp_max * scale;

  Rng rng = Rng::fork(seed, item);
  AppearanceSpec app;
  app.shape = static_cast<ShapeKind>(rng.uniform_int(3));
  app.color = kPalette[rng.uniform_int(kPaletteSize)].rgb;
  app.size = rng.uniform(r.size_min, r.size_max);

  MotionSpec m;
  m.kind = static_cast<MotionKind>(rng.uniform_int(3));
  const double h = app.size / 2.0;
  const double lo_x = h + r.margin, hi_x = (W - 1) - h - r.margin;
  const double lo_y = h + r.margin, hi_y = (H - 1) - h - r.margin;

  switch (m.kind) {
    case MotionKind::Linear: {
      const double speed = rng.uniform(r.speed_min, r.speed_max);
      const double theta = rng.uniform(0.0, kTwoPi);
      m.vx = speed * std::cos(theta);
      m.vy = speed * std::sin(theta);
      const double sx = m.vx * (T - 1), sy = m.vy * (T - 1);
      app.x0 = rng.uniform(lo_x + std::max(0.0, -sx), hi_x - std::max(0.0, sx));
      app.y0 = rng.uniform(lo_y + std::max(0.0, -sy), hi_y - std::max(0.0, sy));
      break;
    }
    case MotionKind::Circular: {
      m.radius = rng.uniform(r.radius_min, r.radius_max);
      m.omega = rng.uniform(r.omega_min, r.omega_max) * (rng.uniform_int(2) == 0 ? 1.0 : -1.0);
      m.phase = rng.uniform(0.0, kTwoPi);
      const double cx = rng.uniform(lo_x + m.radius, hi_x - m.radius);
      const double cy = rng.uniform(lo_y + m.radius, hi_y - m.radius);
      app.x0 = cx + m.radius * std::cos(m.phase);
      app.y0 = cy + m.radius * std::sin(m.phase);
      break;
    }
    case MotionKind::Oscillation: {
      m.amplitude = rng.uniform(r.amp_min, r.amp_max);
      m.freq = rng.uniform(r.freq_min, r.freq_max);
      m.axis = rng.uniform_int(2) == 0 ? Axis::Horizontal : Axis::Vertical;
      if (m.axis == Axis::Horizontal) {
        app.x0 = rng.uniform(lo_x + m.amplitude, hi_x - m.amplitude);
        app.y0 = rng.uniform(lo_y, hi_y);
      } else {
        app.x0 = rng.uniform(lo_x, hi_x);
        app.y0 = rng.uniform(lo_y + m.amplitude, hi_y - m.amplitude);
      }
      break;
    }
  }
  return {app, m};
}

CorpusManifest generate_corpus(uint64_t seed, int n, int T, int H, int W,
                               const std::filesystem::path& out_dir,
                               const std::string& vocab_name, int threads) {
  require(n >= 1, Err::ConfigInvalid, "corpus size must be >= 1");
  require(T >= 2, Err::ConfigInvalid, "need at least 2 frames");
  const PhraseVocab& v = vocab(vocab_name);

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "frames", ec);
  if (ec) raise(Err::IoFailure, "cannot create " + (out_dir / "frames").string());

  CorpusManifest m;
  m.seed = seed;
  m.frames = T;
  m.height = H;
  m.width = W;
  m.vocab_name = vocab_name;
  m.entries.resize(n);

  std::vector<std::string> failures(n);
  parallel_for(n, threads, [&](int i) {
    try {
      const auto [app, motion] = sample_specs(seed, static_cast<uint64_t>(i), T, H, W);
      char id[16];
      std::snprintf(id, sizeof(id), "v%06d", i);
      CorpusEntry e;
      e.id = id;
      e.caption = make_caption(app, motion, v.name);
      e.motion = motion;
      e.appearance = app;
      e.frames_path = std::string("frames/") + id + ".mrv";
      write_mrv(out_dir / e.frames_path, render_video(app, motion, T, H, W));
      m.entries[i] = std::move(e);
    } catch (const std::exception& ex) {
      failures[i] = ex.what();
    }
  });
  for (int i = 0; i < n; ++i)
    if (!failures[i].empty())
      raise(Err::IoFailure, "item " + std::to_string(i) + " under " + out_dir.string() + ": " +
                                failures[i]);

  save_manifest(m, out_dir);
  return m;
}

void save_manifest(const CorpusManifest& m, const std::filesystem::path& dir) {
  const auto path = dir / "manifest.jsonl";
  std::ofstream os(path, std::ios::trunc);
  if (!os) raise(Err::IoFailure, "cannot open " + path.string());
  json header{{"type", "header"},   {"version", 1},
              {"seed", m.seed},     {"frames", m.frames},
              {"height", m.height}, {"width", m.width},
              {"vocab", m.vocab_name}, {"count", m.entries.size()}};
  os << header.dump() << "\n";
  for (const auto& e : m.entries) {
    json j{{"id", e.id},
           {"caption", e.caption},
           {"motion", motion_to_json(e.motion)},
           {"appearance", appearance_to_json(e.appearance)},
           {"frames", e.frames_path}};
    os << j.dump() << "\n";
  }
  if (!os) raise(Err::IoFailure, "write failed: " + path.string());
}

CorpusManifest parse_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.jsonl";
  std::ifstream is(path);
  if (!is) raise(Err::IoFailure, "cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) raise(Err::ManifestCorrupt, "empty manifest: " + path.string());

  CorpusManifest m;
  try {
    const json h = json::parse(line);
    if (h.at("type") != "header" || h.at("version") != 1)
      raise(Err::ManifestCorrupt, "bad header in " + path.string());
    m.seed = h.at("seed").get<uint64_t>();
    m.frames = h.at("frames").get<int>();
    m.height = h.at("height").get<int>();
    m.width = h.at("width").get<int>();
    m.vocab_name = h.at("vocab").get<std::string>();
    const size_t count = h.at("count").get<size_t>();
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      CorpusEntry e;
      e.id = j.at("id").get<std::string>();
      e.caption = j.at("caption").get<std::string>();
      e.motion = motion_from_json(j.at("motion"));
      e.appearance = appearance_from_json(j.at("appearance"));
      e.frames_path = j.at("frames").get<std::string>();
      m.entries.push_back(std::move(e));
    }
    if (m.entries.size() != count)
      raise(Err::ManifestCorrupt, path.string() + ": header count " + std::to_string(count) +
                                      " but " + std::to_string(m.entries.size()) + " entries");
  } catch (const Error&) {
    throw;
  } catch (const std::exception& ex) {
    raise(Err::ManifestCorrupt, path.string() + ": " + ex.what());
  }

  std::vector<std::string> ids;
  ids.reserve(m.entries.size());
  for (const auto& e : m.entries) ids.push_back(e.id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    raise(Err::ManifestCorrupt, "duplicate id in " + path.string());
  return m;
}

Corpus::Corpus(CorpusManifest manifest, std::filesystem::path dir)
    : manifest_(std::move(manifest)), dir_(std::move(dir)) {
  order_.resize(manifest_.entries.size());
  for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  std::sort(order_.begin(), order_.end(), [this](size_t a, size_t b) {
    return manifest_.entries[a].id < manifest_.entries[b].id;
  });
}

const CorpusEntry& Corpus::entry(const std::string& id) const {
  auto it = std::lower_bound(order_.begin(), order_.end(), id, [this](size_t i, const std::string& s) {
    return manifest_.entries[i].id < s;
  });
  if (it == order_.end() || manifest_.entries[*it].id != id)
    raise(Err::ManifestCorrupt, "unknown video id '" + id + "'");
  return manifest_.entries[*it];
}

VideoTensor Corpus::frames(const std::string& id) const {
  const CorpusEntry& e = entry(id);
  VideoTensor v = read_mrv(dir_ / e.frames_path);
  if (v.frames != manifest_.frames || v.height != manifest_.height || v.width != manifest_.width)
    raise(Err::FrameShapeMismatch, "video '" + id + "' has shape " + std::to_string(v.frames) +
                                       "x" + std::to_string(v.height) + "x" +
                                       std::to_string(v.width) + ", manifest says " +
                                       std::to_string(manifest_.frames) + "x" +
                                       std::to_string(manifest_.height) + "x" +
                                       std::to_string(manifest_.width));
  return v;
}

Corpus load_corpus(const std::filesystem::path& dir) {
  CorpusManifest m = parse_manifest(dir);
  for (const auto& e : m.entries) {
    const auto fp = dir / e.frames_path;
    if (!std::filesystem::exists(fp))
      raise(Err::ManifestCorrupt, "missing frames file for '" + e.id + "': " + fp.string());
    const MrvHeader h = read_mrv_header(fp);
    const uint64_t expect = static_cast<uint64_t>(m.frames) * m.height * m.width * 3 * sizeof(float);
    if (h.frames != m.frames || h.height != m.height || h.width != m.width ||
        h.payload_bytes != expect)
      raise(Err::FrameShapeMismatch, "video '" + e.id + "': " + fp.string());
  }
  return Corpus(std::move(m), dir);
}

}  // namespace motionrag::corpus
