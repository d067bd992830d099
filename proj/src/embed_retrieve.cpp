#include "leakprobe/embed_retrieve.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "leakprobe/error.hpp"
#include "leakprobe/util.hpp"

namespace leakprobe {

void EmbeddingVector::validate() const {
  if (values.empty()) throw Error(ErrorKind::invalid_argument, "embedding has dimension 0");
  for (float v : values)
    if (!std::isfinite(v)) throw Error(ErrorKind::invalid_argument, "embedding has a non-finite value");
}

double l2_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim())
    throw Error(ErrorKind::dim_mismatch,
                "l2_distance on " + std::to_string(a.dim()) + "-d vs " + std::to_string(b.dim()) + "-d");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

std::vector<std::uint8_t> canonical_bytes(const ContentRef& content) {
  std::vector<std::uint8_t> out;
  out.push_back(static_cast<std::uint8_t>(content.modality));
  switch (content.modality) {
    case Modality::text:
      out.insert(out.end(), content.text.begin(), content.text.end());
      break;
    case Modality::image: {
      if (!content.image) throw Error(ErrorKind::invalid_argument, "image content without buffer");
      const auto& img = *content.image;
      for (int v : {img.width, img.height})
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
      out.insert(out.end(), img.data.begin(), img.data.end());
      break;
    }
    case Modality::audio: {
      if (!content.audio) throw Error(ErrorKind::invalid_argument, "audio content without buffer");
      out.reserve(out.size() + 2 * content.audio->samples.size());
      for (double s : content.audio->samples) {
        const auto v = static_cast<std::uint16_t>(to_pcm16(s));
        out.push_back(static_cast<std::uint8_t>(v));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
      }
      break;
    }
  }
  return out;
}

MockEmbedder::MockEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim_ == 0) throw Error(ErrorKind::invalid_argument, "mock embedder dim must be >= 1");
}

std::string MockEmbedder::name() const {
  return "mock:" + std::to_string(dim_) + ":" + std::to_string(seed_);
}

EmbeddingVector MockEmbedder::embed(const ContentRef& content) const {
  const auto bytes = canonical_bytes(content);
  Rng rng(derive_seed(fnv1a64(bytes, seed_), seed_));
  EmbeddingVector out;
  out.values.resize(dim_);
  double norm = 0.0;
  std::vector<double> raw(dim_);
  for (auto& v : raw) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (std::size_t i = 0; i < dim_; ++i) out.values[i] = static_cast<float>(raw[i] / norm);
  return out;
}

EmbeddingVector embed(const Embedder& backend, const ContentRef& content, std::size_t expected_dim) {
  auto v = backend.embed(content);
  v.validate();
  const std::size_t want = expected_dim ? expected_dim : backend.dim();
  if (v.dim() != want)
    throw Error(ErrorKind::dim_mismatch, "backend returned " + std::to_string(v.dim()) +
                                             "-d vector, expected " + std::to_string(want));
  return v;
}

std::string_view to_string(StoragePolicy policy) noexcept {
  return policy == StoragePolicy::paired ? "paired" : "unimodal";
}

StoragePolicy parse_policy(std::string_view name) {
  if (name == "unimodal") return StoragePolicy::unimodal;
  if (name == "paired") return StoragePolicy::paired;
  throw Error(ErrorKind::invalid_argument, "unknown storage policy", std::string(name));
}

std::vector<Modality> stored_modalities(const CorpusEntry& entry, StoragePolicy policy) {
  std::vector<Modality> out;
  if (policy == StoragePolicy::paired) {
    if (entry.has_image()) out.push_back(Modality::image);
    if (entry.has_audio()) out.push_back(Modality::audio);
    if (entry.has_text()) out.push_back(Modality::text);
  } else if (entry.has_image()) {
    out.push_back(Modality::image);
  } else if (entry.has_audio()) {
    out.push_back(Modality::audio);
  } else if (entry.has_text()) {
    out.push_back(Modality::text);
  }
  return out;
}

IndexedDatabase::IndexedDatabase(std::size_t dim, StoragePolicy policy) : dim_(dim), policy_(policy) {
  if (dim_ == 0) throw Error(ErrorKind::invalid_argument, "index dim must be >= 1");
}

void IndexedDatabase::add(IndexRow row) {
  if (row.vector.dim() != dim_)
    throw Error(ErrorKind::dim_mismatch,
                "row has dim " + std::to_string(row.vector.dim()) + ", index dim " + std::to_string(dim_),
                row.entry_id);
  row.vector.validate();
  auto [it, inserted] =
      entry_pos_.try_emplace(row.entry_id, static_cast<std::uint32_t>(entry_ids_.size()));
  if (inserted) entry_ids_.push_back(row.entry_id);
  const std::uint32_t entry = it->second;
  row_entry_.push_back(entry);
  rows_.push_back(std::move(row));
}

std::vector<RetrievalHit> IndexedDatabase::retrieve(const EmbeddingVector& query, std::size_t k) const {
  if (rows_.empty()) throw Error(ErrorKind::empty_index, "retrieve on an empty index");
  if (k == 0) throw Error(ErrorKind::invalid_argument, "k must be >= 1");
  if (query.dim() != dim_)
    throw Error(ErrorKind::dim_mismatch,
                "query dim " + std::to_string(query.dim()) + " vs index dim " + std::to_string(dim_));

  std::vector<double> best(entry_ids_.size(), std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    const double d = l2_distance(query, rows_[r].vector);
    auto& slot = best[row_entry_[r]];
    if (d < slot) slot = d;
  }
  std::vector<std::uint32_t> order(entry_ids_.size());
  std::iota(order.begin(), order.end(), 0u);
  const std::size_t take = std::min(k, order.size());
  auto less = [&](std::uint32_t a, std::uint32_t b) {
    if (best[a] != best[b]) return best[a] < best[b];
    return entry_ids_[a] < entry_ids_[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), less);

  std::vector<RetrievalHit> hits;
  hits.reserve(take);
  for (std::size_t i = 0; i < take; ++i)
    hits.push_back({entry_ids_[order[i]], best[order[i]], i + 1});
  return hits;
}

// File layout (little-endian):
//   "LPIX" | u32 version | u32 dim | u64 rows | u8 policy
//   rows: u32 id_len | id bytes | u8 modality | dim x f32
namespace {

constexpr char kMagic[4] = {'L', 'P', 'I', 'X'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

  template <typename T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorKind::decode, "truncated index file", path_);
  }
  const std::vector<std::uint8_t>& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void IndexedDatabase::save(const std::filesystem::path& path) const {
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  put_le<std::uint64_t>(out, rows_.size());
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(policy_));
  for (const auto& row : rows_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(row.entry_id.size()));
    out += row.entry_id;
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(row.modality));
    for (float f : row.vector.values) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      put_le<std::uint32_t>(out, bits);
    }
  }
  write_file(path, out);
}

IndexedDatabase IndexedDatabase::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  Reader in(bytes, path.string());
  if (in.str(4) != std::string(kMagic, 4)) throw Error(ErrorKind::decode, "bad index magic", path.string());
  if (in.le<std::uint32_t>() != kVersion) throw Error(ErrorKind::decode, "unsupported index version", path.string());
  const auto dim = in.le<std::uint32_t>();
  const auto count = in.le<std::uint64_t>();
  const auto policy = in.le<std::uint8_t>();
  if (policy > 1) throw Error(ErrorKind::decode, "bad policy byte", path.string());
  IndexedDatabase db(dim, static_cast<StoragePolicy>(policy));
  for (std::uint64_t r = 0; r < count; ++r) {
    IndexRow row;
    row.entry_id = in.str(in.le<std::uint32_t>());
    const auto modality = in.le<std::uint8_t>();
    if (modality > 2) throw Error(ErrorKind::decode, "bad modality byte", path.string());
    row.modality = static_cast<Modality>(modality);
    row.vector.values.resize(dim);
    for (auto& f : row.vector.values) {
      const auto bits = in.le<std::uint32_t>();
      std::memcpy(&f, &bits, sizeof f);
    }
    db.add(std::move(row));
  }
  if (!in.done()) throw Error(ErrorKind::decode, "trailing bytes in index file", path.string());
  return db;
}

IndexedDatabase build_index(const Corpus& corpus, const Embedder& backend, StoragePolicy policy,
                            std::size_t parallelism) {
  if (corpus.empty()) throw Error(ErrorKind::empty_index, "cannot build an index over an empty corpus");
  struct Job {
    const CorpusEntry* entry;
    Modality modality;
  };
  std::vector<Job> jobs;
  for (const auto& e : corpus.entries())
    for (Modality m : stored_modalities(e, policy)) jobs.push_back({&e, m});
  if (jobs.empty()) throw Error(ErrorKind::empty_index, "corpus yields no rows under this policy");

  std::vector<EmbeddingVector> vectors(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const auto& job = jobs[i];
      try {
        ContentRef content;
        switch (job.modality) {
          case Modality::text: content = ContentRef::of_text(*job.entry->text); break;
          case Modality::image: content = ContentRef::of_image(*job.entry->image); break;
          case Modality::audio: content = ContentRef::of_audio(*job.entry->audio); break;
        }
        vectors[i] = embed(backend, content);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(parallelism, 1, jobs.size());
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  IndexedDatabase db(backend.dim(), policy);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (errors[i]) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const Error& e) {
        throw Error(e.kind(), "embedding failed: " + e.reason(), jobs[i].entry->id);
      }
    }
    db.add({jobs[i].entry->id, jobs[i].modality, std::move(vectors[i])});
  }
  return db;
}

}  // namespace leakprobe
