#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>

#include "motionrag/binio.hpp"
#include "motionrag/nn.hpp"

namespace motionrag::ckpt {

// Checkpoint container: magic "MRC1", u32 version, u8 scalar width, u64 JSON
// manifest length, manifest bytes, then raw little-endian row-major arrays in
// manifest order.

inline constexpr char kMagic[4] = {'M', 'R', 'C', '1'};
inline constexpr uint32_t kVersion = 1;

template <class S>
void save_checkpoint(const std::filesystem::path& path, const nn::ParamList<S>& params,
                     nlohmann::json meta) {
  nlohmann::json plist = nlohmann::json::array();
  for (const auto* p : params)
    plist.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  meta["params"] = std::move(plist);

  auto os = binio::open_out(path);
  binio::write_bytes(os, kMagic, 4);
  binio::write_le<uint32_t>(os, kVersion);
  binio::write_le<uint8_t>(os, static_cast<uint8_t>(sizeof(S)));
  const std::string manifest = meta.dump();
  binio::write_le<uint64_t>(os, manifest.size());
  binio::write_bytes(os, manifest.data(), manifest.size());
  for (const auto* p : params)
    binio::write_bytes(os, p->value.data(), sizeof(S) * p->value.size());
  if (!os) raise(Err::IoFailure, "write failed: " + path.string());
}

inline nlohmann::json read_checkpoint_meta(std::istream& is, const std::string& what) {
  char magic[4];
  binio::read_bytes(is, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) raise(Err::CheckpointMismatch, "bad magic: " + what);
  const uint32_t version = binio::read_le<uint32_t>(is);
  if (version != kVersion)
    raise(Err::CheckpointMismatch, what + ": container version " + std::to_string(version));
  const uint8_t width = binio::read_le<uint8_t>(is);
  const uint64_t len = binio::read_le<uint64_t>(is);
  std::string manifest(len, '\0');
  binio::read_bytes(is, manifest.data(), len);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(manifest);
  } catch (const std::exception& ex) {
    raise(Err::CheckpointMismatch, what + ": manifest parse error: " + ex.what());
  }
  meta["scalar_bytes"] = width;
  return meta;
}

inline nlohmann::json peek_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) raise(Err::CheckpointMismatch, "missing file: " + path.string());
  auto is = binio::open_in(path);
  return read_checkpoint_meta(is, path.string());
}

// Loads values into an already-constructed parameter list; names and shapes
// must match position by position.
template <class S>
nlohmann::json load_checkpoint(const std::filesystem::path& path, const nn::ParamList<S>& params) {
  if (!std::filesystem::exists(path)) raise(Err::CheckpointMismatch, "missing file: " + path.string());
  auto is = binio::open_in(path);
  nlohmann::json meta = read_checkpoint_meta(is, path.string());
  if (meta["scalar_bytes"].get<int>() != static_cast<int>(sizeof(S)))
    raise(Err::CheckpointMismatch,
          path.string() + ": stored scalar width " + meta["scalar_bytes"].dump() +
              " does not match the configured precision");
  const auto& plist = meta.at("params");
  if (plist.size() != params.size())
    raise(Err::CheckpointMismatch, path.string() + ": expected " +
                                       std::to_string(params.size()) + " parameters, file has " +
                                       std::to_string(plist.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& e = plist[i];
    auto* p = params[i];
    if (e.at("name").get<std::string>() != p->name ||
        e.at("rows").get<Eigen::Index>() != p->value.rows() ||
        e.at("cols").get<Eigen::Index>() != p->value.cols())
      raise(Err::CheckpointMismatch, path.string() + ": parameter " + std::to_string(i) +
                                         " is " + e.at("name").get<std::string>() +
                                         ", expected " + p->name + " with matching shape");
    binio::read_bytes(is, p->value.data(), sizeof(S) * p->value.size());
  }
  return meta;
}

}  // namespace motionrag::ckpt
