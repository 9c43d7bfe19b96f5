#include "motionrag/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_set>

#include "motionrag/binio.hpp"
#include "motionrag/errors.hpp"

namespace motionrag::retrieval {

namespace {
constexpr char kMagic[4] = {'M', 'R', 'I', '1'};
constexpr uint32_t kVersion = 1;
}  // namespace

Embedding embed_caption(const std::string& text, int d_e) {
  require(d_e >= 1, Err::ConfigInvalid, "embedding dimension must be >= 1");
  std::vector<double> acc(d_e, 0.0);
  size_t i = 0;
  bool any = false;
  while (i < text.size()) {
    while (i < text.size() && !std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
    size_t j = i;
    uint64_t h = 0xcbf29ce484222325ull;
    while (j < text.size() && std::isalnum(static_cast<unsigned char>(text[j]))) {
      const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(text[j])));
      h = binio::fnv1a64(&c, 1, h);
      ++j;
    }
    if (j > i) {
      any = true;
      const uint64_t idx = h % static_cast<uint64_t>(d_e);
      acc[idx] += ((h >> 32) & 1) ? 1.0 : -1.0;
    }
    i = j;
  }

  Embedding e;
  e.values.assign(d_e, 0.0f);
  if (!any) return e;
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) return e;  // signs can cancel exactly
  for (int k = 0; k < d_e; ++k) e.values[k] = static_cast<float>(acc[k] / norm);
  return e;
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  require(a.dim() == b.dim(), Err::DimensionMismatch,
          "embedding dims " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int i = 0; i < a.dim(); ++i) {
    const double x = a.values[i], y = b.values[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

RetrievalIndex build_index(std::vector<RetrievalRecord> records) {
  require(!records.empty(), Err::EmptyDatabase, "cannot build an index from zero records");
  const int d_e = records.front().embedding.dim();
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    require(r.embedding.dim() == d_e, Err::DimensionMismatch,
            "record '" + r.id + "' has dim " + std::to_string(r.embedding.dim()) +
                ", index uses " + std::to_string(d_e));
    if (!seen.insert(r.id).second) raise(Err::CorruptIndex, "duplicate id '" + r.id + "'");
  }
  RetrievalIndex idx;
  idx.version = kVersion;
  idx.d_e = d_e;
  idx.records = std::move(records);
  return idx;
}

void save_index(const RetrievalIndex& index, const std::filesystem::path& path) {
  require(!index.records.empty(), Err::EmptyDatabase, "refusing to save an empty index");
  auto os = binio::open_out(path);
  binio::write_bytes(os, kMagic, 4);
  binio::write_le<uint32_t>(os, index.version);
  binio::write_le<uint32_t>(os, static_cast<uint32_t>(index.d_e));
  binio::write_le<uint64_t>(os, index.records.size());
  for (const auto& r : index.records) {
    binio::write_le<uint32_t>(os, static_cast<uint32_t>(r.id.size()));
    binio::write_bytes(os, r.id.data(), r.id.size());
    binio::write_bytes(os, r.embedding.values.data(), r.embedding.values.size() * sizeof(float));
  }
  if (!os) raise(Err::IoFailure, "write failed: " + path.string());
}

RetrievalIndex load_index(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) raise(Err::IndexMissing, path.string());
  auto is = binio::open_in(path);
  char magic[4];
  binio::read_bytes(is, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) raise(Err::CorruptIndex, "bad magic: " + path.string());
  const uint32_t version = binio::read_le<uint32_t>(is);
  if (version != kVersion)
    raise(Err::VersionMismatch,
          path.string() + ": version " + std::to_string(version) + ", expected " +
              std::to_string(kVersion));
  const auto d_e = static_cast<int>(binio::read_le<uint32_t>(is));
  const uint64_t count = binio::read_le<uint64_t>(is);
  if (d_e < 1 || count == 0) raise(Err::CorruptIndex, "bad header: " + path.string());

  RetrievalIndex idx;
  idx.version = version;
  idx.d_e = d_e;
  idx.records.resize(count);
  try {
    for (auto& r : idx.records) {
      const uint32_t len = binio::read_le<uint32_t>(is);
      if (len > 4096) raise(Err::CorruptIndex, "unreasonable id length in " + path.string());
      r.id.resize(len);
      binio::read_bytes(is, r.id.data(), len);
      r.embedding.values.resize(d_e);
      binio::read_bytes(is, r.embedding.values.data(), sizeof(float) * d_e);
    }
  } catch (const Error& e) {
    if (e.code() == Err::IoFailure) raise(Err::CorruptIndex, "truncated index: " + path.string());
    throw;
  }
  std::unordered_set<std::string> seen;
  for (const auto& r : idx.records)
    if (!seen.insert(r.id).second)
      raise(Err::CorruptIndex, "duplicate id '" + r.id + "' in " + path.string());
  return idx;
}

std::vector<ScoredRecord> retrieve_top_k(const RetrievalIndex& index, const Query& query,
                                         const std::set<std::string>* exclude) {
  require(!index.records.empty(), Err::EmptyDatabase, "query against an empty index");
  require(query.k >= 1, Err::ConfigInvalid, "k must be >= 1");
  const Embedding q = embed_caption(query.text, index.d_e);

  std::vector<ScoredRecord> scored;
  scored.reserve(index.records.size());
  for (const auto& r : index.records) {
    if (exclude && exclude->count(r.id)) continue;
    scored.push_back({&r, cosine_similarity(r.embedding, q)});
  }
  if (scored.empty()) raise(Err::EmptyAfterExclusion, "no candidates left after exclusion");

  const size_t m = std::min<size_t>(query.k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + m, scored.end(),
                    [](const ScoredRecord& a, const ScoredRecord& b) {
                      if (a.similarity != b.similarity) return a.similarity > b.similarity;
                      return a.record->id < b.record->id;
                    });
  scored.resize(m);
  return scored;
}

}  // namespace motionrag::retrieval
