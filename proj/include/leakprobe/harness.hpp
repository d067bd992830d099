#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "leakprobe/attack.hpp"
#include "leakprobe/corpus.hpp"
#include "leakprobe/embed_retrieve.hpp"
#include "leakprobe/gateway.hpp"
#include "leakprobe/metrics_audio.hpp"
#include "leakprobe/metrics_text.hpp"
#include "leakprobe/metrics_vision.hpp"

namespace leakprobe {

enum class LeakageMode { direct, indirect, pair };

std::string_view to_string(LeakageMode mode) noexcept;
LeakageMode parse_leakage_mode(std::string_view name);

// "mock", "mock:<dim>", "mock:<dim>:<seed>" or an http(s) URL.
std::shared_ptr<const Embedder> make_embedder(const std::string& spec, const RetryPolicy& retry = {},
                                              const HttpClientOptions& http = {});

struct EndpointSpec {
  // Targets: "mock" or "http". Judges: "none", "mock" (fixed reply),
  // "mock-audio" (audio equality) or "http".
  std::string kind = "mock";
  MockTargetConfig mock;
  std::string reply;
  std::string url;
  HttpClientOptions http;
  std::chrono::milliseconds timeout{60000};
};

inline EndpointSpec judge_none() {
  EndpointSpec e;
  e.kind = "none";
  return e;
}

struct Thresholds {
  VisualThresholds visual;
  TextThresholds text;
  AudioThresholds audio;
};

struct ExperimentConfig {
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> index;  // built in memory when absent
  std::string embedder = "mock";
  StoragePolicy policy = StoragePolicy::unimodal;
  EndpointSpec target;
  EndpointSpec judge = judge_none();
  std::size_t n_prompts = 500;
  std::size_t k = 1;
  CommandId command{"AQ", 1};
  std::optional<std::filesystem::path> commands;   // catalog override file
  std::optional<std::filesystem::path> fragments;  // information source
  std::size_t n_fragments = kDefaultFragments;
  Modality modality = Modality::audio;
  LeakageMode mode = LeakageMode::indirect;
  GenerationParams params;  // output_modality is derived from mode and modality
  Thresholds thresholds;
  std::string pair_text_metric = "words_copied";
  std::string pair_image_metric = "mse";
  std::vector<std::string> refusal_patterns;
  int retry_attempts = 5;
  std::chrono::milliseconds retry_interval{2000};
  SlidingParams sliding;
  SiftParams sift;
  std::uint64_t seed = 0;
  std::size_t concurrency = 4;
  std::optional<std::filesystem::path> output;

  // Throws Error{config}.
  void validate() const;
  // Relative paths resolve against `base_dir`.
  static ExperimentConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  Modality output_modality() const;
  RetryPolicy retry() const;
};

// Metric names by mode, in report order.
std::vector<std::string> metric_names(const ExperimentConfig& config, bool with_judge);

struct HitVerdict {
  RetrievalHit hit;
  std::optional<TextVerdict> text;
  std::optional<VisualVerdict> visual;
  std::optional<AudioVerdict> audio;
  std::map<std::string, bool> pass;
  std::string note;  // why a verdict is missing, if it is
};

struct AttackRecord {
  std::size_t index = 0;
  AttackPrompt prompt;
  std::vector<RetrievalHit> hits;
  TargetResponse response;
  std::optional<std::string> error;  // transport exhaustion or contract failure
  std::vector<HitVerdict> verdicts;  // one per hit
  std::map<std::string, bool> success;
  std::map<std::string, std::string> credited;  // metric -> entry credited with the success
};

struct MetricTally {
  std::size_t total = 0;
  std::size_t unique = 0;
  std::map<std::string, std::size_t> per_entry;
  std::optional<double> mean_score;  // mean of per-prompt best score over scored prompts
  std::size_t scored = 0;
};

struct AggregateReport {
  std::string label;
  std::string axis;
  std::string axis_value;
  std::size_t n_prompts = 0;
  std::size_t k = 0;
  std::size_t retrieval_unique = 0;
  std::size_t refusals = 0;
  std::size_t failures = 0;
  std::vector<std::string> metric_order;
  std::map<std::string, MetricTally> metrics;

  nlohmann::json to_json() const;
  static AggregateReport from_json(const nlohmann::json& doc);
};

struct RunResult {
  ExperimentConfig config;
  AggregateReport aggregate;
  std::vector<AttackRecord> records;
  double wall_ms = 0.0;
};

struct SpeakerSweepResult {
  std::vector<std::size_t> top_k;
  std::vector<std::size_t> counts;  // records whose rank <= top_k[i]
  std::size_t records = 0;
  std::vector<std::size_t> ranks;   // per evaluated record, in record order
  std::vector<std::size_t> record_index;
  FeatureKind kind = FeatureKind::mfcc;

  nlohmann::json to_json() const;
  static SpeakerSweepResult from_json(const nlohmann::json& doc);
};

struct ReportBundle {
  std::vector<RunResult> runs;
  std::string axis;  // empty for a single run
  std::optional<SpeakerSweepResult> speaker;
};

// Loaded corpus, catalog, information source and index cache shared by the
// runs of one sweep.
class Workspace {
 public:
  explicit Workspace(const ExperimentConfig& base);
  // Uses an in-memory corpus instead of loading base.corpus.
  Workspace(const ExperimentConfig& base, std::shared_ptr<const Corpus> corpus);

  std::shared_ptr<const Corpus> corpus() const { return corpus_; }
  const CommandCatalog& catalog() const { return catalog_; }
  const FragmentSource& fragments() const { return fragments_; }
  std::shared_ptr<const Embedder> embedder(const std::string& spec, const ExperimentConfig& config);
  // Index for `config` (loaded or built once per embedder and policy).
  std::shared_ptr<const IndexedDatabase> index(const ExperimentConfig& config);

 private:
  std::shared_ptr<const Corpus> corpus_;
  CommandCatalog catalog_;
  FragmentSource fragments_;
  std::map<std::string, std::shared_ptr<const Embedder>> embedders_;
  std::map<std::string, std::shared_ptr<const IndexedDatabase>> indexes_;
};

// Ready-made backends; overriding them lets tests wire custom mocks.
struct Backends {
  std::shared_ptr<Target> target;
  std::shared_ptr<Target> judge;  // may be null
};

Backends make_backends(const ExperimentConfig& config, std::shared_ptr<const Corpus> corpus);

RunResult run_experiment(const ExperimentConfig& config);
RunResult run_experiment(const ExperimentConfig& config, Workspace& workspace, const Backends& backends);

// True iff one hit passes both `text_metric` and `image_metric`.
bool judge_pair(const AttackRecord& record, const std::string& text_metric, const std::string& image_metric);
bool judge_pair(const HitVerdict& verdict, const std::string& text_metric, const std::string& image_metric);

inline const std::vector<std::string> kAblationAxes = {"k", "command", "embedder", "temperature", "cfg"};

// Applies one axis value to a copy of `base`.
ExperimentConfig with_axis_value(const ExperimentConfig& base, const std::string& axis, const std::string& value);

ReportBundle ablate(const ExperimentConfig& base, const std::string& axis, const std::vector<std::string>& values);
ReportBundle ablate(const ExperimentConfig& base, const std::string& axis, const std::vector<std::string>& values,
                    Workspace& workspace, const Backends& backends);

// Ranks the generated audio of each direct-leakage record against the
// pool's speakers. Pool entries must not share ids with any retrieved
// entry, and every true speaker must be present in the pool.
// The true speaker of a record is the speaker of its top-ranked hit in
// `corpus`.
SpeakerSweepResult speaker_sweep(const RunResult& run, const Corpus& corpus, const Corpus& pool,
                                 const std::vector<std::size_t>& top_k, FeatureKind kind = FeatureKind::mfcc);

// ---------------------------------------------------------------- reports

nlohmann::json record_to_json(const AttackRecord& record);
nlohmann::json bundle_to_json(const ReportBundle& bundle);

// Writes report.json, summary.csv, ablation_<axis>.csv (sweeps),
// speaker.csv (speaker sweeps) and meta.json (timings) into `dir`.
// `formats` selects among "json" and "csv"; meta.json is always written.
void emit_report(const ReportBundle& bundle, const std::filesystem::path& dir,
                 const std::vector<std::string>& formats = {"json", "csv"});

std::string summary_csv(const nlohmann::json& bundle);
std::string ablation_csv(const nlohmann::json& bundle);
std::string speaker_csv(const nlohmann::json& bundle);

// Re-emits the tables of an existing report directory from its report.json.
void reemit_report(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir,
                   const std::vector<std::string>& formats);

}  // namespace leakprobe
