#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "leakprobe/corpus.hpp"
#include "leakprobe/embed_retrieve.hpp"

namespace leakprobe {

// "AQ3" -> {AQ, 3}; single-command families such as "ORIGIN-AUDIO" use index 1.
struct CommandId {
  std::string family;
  int index = 1;

  std::string str() const;
  static CommandId parse(std::string_view text);

  friend bool operator==(const CommandId&, const CommandId&) = default;
};

// Command strings per family, 1-based within a family.
class CommandCatalog {
 public:
  static const CommandCatalog& builtin();

  // Families present in `overrides` replace the built-in lists.
  static CommandCatalog with_overrides(const nlohmann::json& overrides);
  static CommandCatalog from_file(const std::filesystem::path& path);

  const std::string& command(const CommandId& id) const;
  bool contains(const CommandId& id) const;
  const std::map<std::string, std::vector<std::string>>& families() const { return families_; }
  nlohmann::json to_json() const;
  static CommandCatalog from_json(const nlohmann::json& doc);

  // Every command id in catalog order, e.g. AQ1..AQ5.
  std::vector<CommandId> ids(std::string_view family) const;

  friend bool operator==(const CommandCatalog&, const CommandCatalog&) = default;

 private:
  std::map<std::string, std::vector<std::string>> families_;
};

// Whitespace-delimited tokens the information component is drawn from.
class FragmentSource {
 public:
  explicit FragmentSource(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {}
  static FragmentSource from_text(std::string_view text);
  static FragmentSource from_file(const std::filesystem::path& path);

  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }

 private:
  std::vector<std::string> tokens_;
};

inline constexpr std::size_t kDefaultFragments = 15;

// n distinct token positions drawn uniformly without replacement, joined by
// single spaces. Deterministic per seed.
std::string sample_information(const FragmentSource& source, std::uint64_t seed,
                               std::size_t n_fragments = kDefaultFragments);

struct AttackPrompt {
  std::string information;
  CommandId command;
  std::string command_text;
  Modality modality = Modality::text;
  std::string q;
  std::uint64_t rng_seed = 0;

  friend bool operator==(const AttackPrompt&, const AttackPrompt&) = default;
};

AttackPrompt compose_attack(std::string information, const CommandId& command, Modality modality,
                            const CommandCatalog& catalog = CommandCatalog::builtin(),
                            std::uint64_t rng_seed = 0);

// Retrieved binary content handed to a target. Buffers are shared with the
// corpus.
struct Payload {
  Modality modality = Modality::image;
  std::string entry_id;
  std::shared_ptr<const ImageBuffer> image;
  std::shared_ptr<const AudioBuffer> audio;
};

struct FusedPrompt {
  AttackPrompt query;
  std::vector<RetrievalHit> hits;
  std::string rendered_text;
  std::vector<Payload> payloads;  // in slot order
};

// Slot marker written into rendered text for the n-th (1-based) payload of a
// modality, e.g. "<audio_1>".
std::string slot_marker(Modality modality, std::size_t n);

FusedPrompt fuse_context(const AttackPrompt& query, std::vector<RetrievalHit> hits,
                         const Corpus& corpus, StoragePolicy policy);

}  // namespace leakprobe
