#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace motionrag::retrieval {

// Unit-norm caption embedding (or the zero vector for token-free text).
// Components are stored as float32 so that index persistence is lossless.
struct Embedding {
  std::vector<float> values;

  int dim() const { return static_cast<int>(values.size()); }
  bool operator==(const Embedding&) const = default;
};

// Deterministic signed-hash bag-of-words embedder: lowercase, split on
// non-alphanumerics, FNV-1a each token to a (dimension, sign) pair,
// accumulate, L2-normalize.
Embedding embed_caption(const std::string& text, int d_e = 256);

double cosine_similarity(const Embedding& a, const Embedding& b);

struct RetrievalRecord {
  std::string id;
  Embedding embedding;
  std::string caption;  // kept in memory; not part of the index file
};

struct RetrievalIndex {
  uint32_t version = 1;
  int d_e = 0;
  std::vector<RetrievalRecord> records;

  size_t size() const { return records.size(); }
};

RetrievalIndex build_index(std::vector<RetrievalRecord> records);
void save_index(const RetrievalIndex& index, const std::filesystem::path& path);
RetrievalIndex load_index(const std::filesystem::path& path);

struct Query {
  std::string text;
  int k = 9;
};

struct ScoredRecord {
  const RetrievalRecord* record = nullptr;
  double similarity = 0.0;
};

// Exact top-k scan: min(k, candidates) results ordered by descending
// similarity, ties broken by ascending id.
std::vector<ScoredRecord> retrieve_top_k(const RetrievalIndex& index, const Query& query,
                                         const std::set<std::string>* exclude = nullptr);

}  // namespace motionrag::retrieval
