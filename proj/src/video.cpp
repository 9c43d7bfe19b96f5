#include "motionrag/video.hpp"

#include <cstring>

#include "motionrag/binio.hpp"
#include "motionrag/errors.hpp"

namespace motionrag {

namespace {
constexpr char kMagic[4] = {'M', 'R', 'V', '1'};
}

void write_mrv(const std::filesystem::path& path, const VideoTensor& v) {
  auto os = binio::open_out(path);
  binio::write_bytes(os, kMagic, 4);
  binio::write_le<uint32_t>(os, static_cast<uint32_t>(v.frames));
  binio::write_le<uint32_t>(os, static_cast<uint32_t>(v.height));
  binio::write_le<uint32_t>(os, static_cast<uint32_t>(v.width));
  binio::write_bytes(os, v.data.data(), v.data.size() * sizeof(float));
  if (!os) raise(Err::IoFailure, "write failed: " + path.string());
}

MrvHeader read_mrv_header(const std::filesystem::path& path) {
  auto is = binio::open_in(path);
  char magic[4];
  binio::read_bytes(is, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    raise(Err::FrameShapeMismatch, "bad magic in " + path.string());
  MrvHeader h{};
  h.frames = static_cast<int>(binio::read_le<uint32_t>(is));
  h.height = static_cast<int>(binio::read_le<uint32_t>(is));
  h.width = static_cast<int>(binio::read_le<uint32_t>(is));
  std::error_code ec;
  const auto total = std::filesystem::file_size(path, ec);
  if (ec) raise(Err::IoFailure, "stat failed: " + path.string());
  h.payload_bytes = total - 16;
  return h;
}

VideoTensor read_mrv(const std::filesystem::path& path) {
  const MrvHeader h = read_mrv_header(path);
  VideoTensor v(h.frames, h.height, h.width);
  const uint64_t expect = v.data.size() * sizeof(float);
  if (h.payload_bytes != expect)
    raise(Err::FrameShapeMismatch,
          path.string() + ": payload " + std::to_string(h.payload_bytes) + " bytes, expected " +
              std::to_string(expect));
  auto is = binio::open_in(path);
  is.seekg(16);
  binio::read_bytes(is, v.data.data(), expect);
  return v;
}

double pixel_mse(const VideoTensor& a, const VideoTensor& b) {
  require(a.frames == b.frames && a.height == b.height && a.width == b.width,
          Err::ShapeMismatch, "pixel_mse on mismatched clips");
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

}  // namespace motionrag
