#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "leakprobe/corpus.hpp"

namespace leakprobe {

struct EmbeddingVector {
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
  // Throws unless dim >= 1 and every value is finite.
  void validate() const;

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

// Euclidean norm of a - b, accumulated in double.
double l2_distance(const EmbeddingVector& a, const EmbeddingVector& b);

// Non-owning view of something to embed.
struct ContentRef {
  Modality modality = Modality::text;
  std::string_view text;
  const ImageBuffer* image = nullptr;
  const AudioBuffer* audio = nullptr;

  static ContentRef of_text(std::string_view t) { return {Modality::text, t, nullptr, nullptr}; }
  static ContentRef of_image(const ImageBuffer& img) { return {Modality::image, {}, &img, nullptr}; }
  static ContentRef of_audio(const AudioBuffer& a) { return {Modality::audio, {}, nullptr, &a}; }
};

// Stable byte serialization of content: UTF-8 for text, dims + RGB for
// images, PCM16 little-endian for audio.
std::vector<std::uint8_t> canonical_bytes(const ContentRef& content);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual EmbeddingVector embed(const ContentRef& content) const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string name() const = 0;
};

// Hashes the canonical bytes and expands the hash into a unit vector.
// Deterministic per (seed, content); distinct content collides with
// negligible probability.
class MockEmbedder final : public Embedder {
 public:
  explicit MockEmbedder(std::size_t dim = 64, std::uint64_t seed = 0);

  EmbeddingVector embed(const ContentRef& content) const override;
  std::size_t dim() const override { return dim_; }
  std::string name() const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// Embeds and checks the result against `expected_dim` (0 = backend's dim).
EmbeddingVector embed(const Embedder& backend, const ContentRef& content,
                      std::size_t expected_dim = 0);

enum class StoragePolicy : std::uint8_t { unimodal = 0, paired = 1 };

std::string_view to_string(StoragePolicy policy) noexcept;
StoragePolicy parse_policy(std::string_view name);

// Modalities of `entry` that get a row under `policy`. Unimodal stores the
// entry's main content (image, else audio, else text); paired stores every
// component present.
std::vector<Modality> stored_modalities(const CorpusEntry& entry, StoragePolicy policy);

struct IndexRow {
  std::string entry_id;
  Modality modality = Modality::text;
  EmbeddingVector vector;
};

struct RetrievalHit {
  std::string entry_id;
  double distance = 0.0;
  std::size_t rank = 0;

  friend bool operator==(const RetrievalHit&, const RetrievalHit&) = default;
};

// Exact flat L2 index. Immutable once built; retrieve() is safe to call from
// many threads.
class IndexedDatabase {
 public:
  IndexedDatabase(std::size_t dim, StoragePolicy policy);

  void add(IndexRow row);

  std::size_t dim() const { return dim_; }
  StoragePolicy policy() const { return policy_; }
  std::size_t row_count() const { return rows_.size(); }
  std::size_t entry_count() const { return entry_ids_.size(); }
  bool empty() const { return rows_.empty(); }
  const std::vector<IndexRow>& rows() const { return rows_; }

  // Top-k distinct entries by their nearest row. Ties at equal distance go
  // to the lexicographically smaller entry id. Fewer than k distinct
  // entries returns all of them.
  std::vector<RetrievalHit> retrieve(const EmbeddingVector& query, std::size_t k) const;

  void save(const std::filesystem::path& path) const;
  static IndexedDatabase load(const std::filesystem::path& path);

 private:
  std::size_t dim_;
  StoragePolicy policy_;
  std::vector<IndexRow> rows_;
  std::vector<std::uint32_t> row_entry_;  // row -> position in entry_ids_
  std::vector<std::string> entry_ids_;
  std::unordered_map<std::string, std::uint32_t> entry_pos_;
};

inline std::vector<RetrievalHit> retrieve(const IndexedDatabase& index,
                                          const EmbeddingVector& query, std::size_t k) {
  return index.retrieve(query, k);
}

IndexedDatabase build_index(const Corpus& corpus, const Embedder& backend,
                            StoragePolicy policy, std::size_t parallelism = 4);

}  // namespace leakprobe
