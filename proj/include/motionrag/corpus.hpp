#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "motionrag/video.hpp"

namespace motionrag::corpus {

enum class MotionKind { Linear, Circular, Oscillation };
enum class Axis { Horizontal, Vertical };
enum class ShapeKind { Square, Disk, Cross };

struct MotionSpec {
  MotionKind kind = MotionKind::Linear;
  // Linear
  double vx = 0.0, vy = 0.0;  // pixels/frame
  // Circular
  double radius = 0.0;  // pixels
  double omega = 0.0;   // radians/frame, signed
  double phase = 0.0;   // radians
  // Oscillation
  double amplitude = 0.0;  // pixels
  double freq = 0.0;       // cycles/frame
  Axis axis = Axis::Horizontal;

  bool operator==(const MotionSpec&) const = default;
};

struct AppearanceSpec {
  ShapeKind shape = ShapeKind::Square;
  std::array<double, 3> color = {1.0, 1.0, 1.0};  // RGB in [0,1]
  double size = 4.0;                              // pixels
  double x0 = 0.0, y0 = 0.0;                      // initial center

  bool operator==(const AppearanceSpec&) const = default;
};

// Closed-form center of the shape at frame t.
std::pair<double, double> position_at(const AppearanceSpec& app, const MotionSpec& motion,
                                      double t);

// Hard-edged raster of the motion law over T frames; throws EnvelopeOutOfBounds
// if any frame would clip the shape (margin of one pixel from the border).
VideoTensor render_video(const AppearanceSpec& app, const MotionSpec& motion, int T, int H, int W);

// ---- captions ----------------------------------------------------------

// Fixed phrase table: "a <color> <shape> <motion-phrase>". Motion phrases are
// binned by magnitude; equal bins produce equal phrases. The "alt" vocabulary
// shares no motion word with the default one (used for the database-swap demo).
struct PhraseVocab {
  std::string name;
  std::array<std::string, 3> adverbs;      // slow / medium / fast
  std::array<std::string, 8> directions;   // 45-degree sectors, index 0 = +x
  std::string linear_verb;                 // "moving <dir> <adverb>"
  std::string still_phrase;                // near-zero linear speed
  std::string circular_phrase;             // "<phrase> <adverb>"
  std::string osc_horizontal;              // "<phrase> <adverb>"
  std::string osc_vertical;
};

const PhraseVocab& vocab(const std::string& name);  // "default" | "alt"

// Bin edges (lower third / upper third of the sampled parameter ranges).
struct SpeedBins {
  double linear_lo = 0.9333333333333333;   // |v| in px/frame
  double linear_hi = 1.5666666666666667;
  double omega_lo = 0.610865238198015;     // |omega| in rad/frame
  double omega_hi = 0.829031394333791;
  double freq_lo = 0.13333333333333333;    // cycles/frame
  double freq_hi = 0.20666666666666667;
};

std::string color_name(const std::array<double, 3>& rgb);
std::string shape_name(ShapeKind s);
std::string make_caption(const AppearanceSpec& app, const MotionSpec& motion,
                         const std::string& vocab_name = "default");

// ---- corpus ------------------------------------------------------------

struct CorpusEntry {
  std::string id;
  std::string caption;
  MotionSpec motion;
  AppearanceSpec appearance;
  std::string frames_path;  // relative to the corpus directory

  bool operator==(const CorpusEntry&) const = default;
};

struct CorpusManifest {
  uint64_t seed = 0;
  int frames = 0, height = 0, width = 0;
  std::string vocab_name = "default";
  std::vector<CorpusEntry> entries;

  bool operator==(const CorpusManifest&) const = default;
};

// Legal parameter ranges used by generate_corpus; evaluation normalizes
// parameter errors by the same widths.
struct ParamRanges {
  double size_min = 4.0, size_max = 8.0;
  double speed_min = 0.3, speed_max = 2.2;        // linear |v|
  double radius_min = 2.0, radius_max = 6.0;
  double omega_min = 0.39269908169872414;         // pi/8
  double omega_max = 1.0471975511965976;          // pi/3
  double amp_min = 2.0, amp_max = 6.0;
  double freq_min = 0.06, freq_max = 0.28;
  double margin = 1.0;                            // border clearance in px
};

// Draw one (appearance, motion) pair; reproducible from (seed, item) alone.
std::pair<AppearanceSpec, MotionSpec> sample_specs(uint64_t seed, uint64_t item, int T, int H,
                                                   int W, const ParamRanges& ranges = {});

// Writes manifest.jsonl plus frames/<id>.mrv under out_dir.
CorpusManifest generate_corpus(uint64_t seed, int n, int T, int H, int W,
                               const std::filesystem::path& out_dir,
                               const std::string& vocab_name = "default", int threads = 1);

// Manifest + lazy frame access; loading validates ids, shapes and file sizes.
class Corpus {
 public:
  Corpus() = default;
  Corpus(CorpusManifest manifest, std::filesystem::path dir);

  const CorpusManifest& manifest() const { return manifest_; }
  const std::filesystem::path& dir() const { return dir_; }
  const CorpusEntry& entry(const std::string& id) const;
  const CorpusEntry& entry_at(size_t i) const { return manifest_.entries.at(i); }
  size_t size() const { return manifest_.entries.size(); }
  VideoTensor frames(const std::string& id) const;

 private:
  CorpusManifest manifest_;
  std::filesystem::path dir_;
  std::vector<size_t> order_;  // entry index sorted by id for lookup
};

void save_manifest(const CorpusManifest& m, const std::filesystem::path& dir);
CorpusManifest parse_manifest(const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace motionrag::corpus
