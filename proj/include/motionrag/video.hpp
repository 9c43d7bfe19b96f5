#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace motionrag {

// Dense T x H x W x 3 clip, float32 values in [0,1], index order (t, y, x, c).
struct VideoTensor {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  VideoTensor() = default;
  VideoTensor(int t, int h, int w)
      : frames(t), height(h), width(w), data(static_cast<size_t>(t) * h * w * 3, 0.0f) {}

  float& at(int t, int y, int x, int c) {
    return data[((static_cast<size_t>(t) * height + y) * width + x) * 3 + c];
  }
  float at(int t, int y, int x, int c) const {
    return data[((static_cast<size_t>(t) * height + y) * width + x) * 3 + c];
  }

  size_t size() const { return data.size(); }

  bool operator==(const VideoTensor& o) const {
    return frames == o.frames && height == o.height && width == o.width && data == o.data;
  }
};

// .mrv container: 16-byte header (magic "MRV1", u32 T, H, W) followed by
// T*H*W*3 little-endian float32 samples.
void write_mrv(const std::filesystem::path& path, const VideoTensor& v);
VideoTensor read_mrv(const std::filesystem::path& path);

// Header-only peek used for cheap shape validation.
struct MrvHeader {
  int frames, height, width;
  uint64_t payload_bytes;
};
MrvHeader read_mrv_header(const std::filesystem::path& path);

double pixel_mse(const VideoTensor& a, const VideoTensor& b);

}  // namespace motionrag
