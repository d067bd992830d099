#include "leakprobe/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "leakprobe/error.hpp"
#include "leakprobe/util.hpp"

namespace leakprobe {

using nlohmann::json;

std::string_view to_string(LeakageMode mode) noexcept {
  switch (mode) {
    case LeakageMode::direct: return "direct";
    case LeakageMode::indirect: return "indirect";
    case LeakageMode::pair: return "pair";
  }
  return "indirect";
}

LeakageMode parse_leakage_mode(std::string_view name) {
  if (name == "direct") return LeakageMode::direct;
  if (name == "indirect") return LeakageMode::indirect;
  if (name == "pair") return LeakageMode::pair;
  throw Error(ErrorKind::config, "unknown leakage mode", std::string(name));
}

std::shared_ptr<const Embedder> make_embedder(const std::string& spec, const RetryPolicy& retry,
                                              const HttpClientOptions& http) {
  if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0)
    return std::make_shared<HttpEmbedder>(HttpEndpoint{spec, api_key_from_env()}, 0, retry, http);
  const auto parts = split(spec, ':');
  if (parts.empty() || parts[0] != "mock" || parts.size() > 3)
    throw Error(ErrorKind::config, "embedder must be mock[:dim[:seed]] or an http URL", spec);
  try {
    const std::size_t dim = parts.size() > 1 ? std::stoul(parts[1]) : 64;
    const std::uint64_t seed = parts.size() > 2 ? std::stoull(parts[2]) : 0;
    if (dim == 0) throw Error(ErrorKind::config, "embedder dimension must be >= 1", spec);
    return std::make_shared<MockEmbedder>(dim, seed);
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::config, "bad mock embedder parameters", spec);
  }
}

// ----------------------------------------------------------------- config

namespace {

const std::vector<std::string> kTextMetrics = {"words_copied", "continue_copied", "rouge_l", "bleu4", "clair"};
const std::vector<std::string> kImageMetrics = {"mse", "psnr", "sift"};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void check_keys(const json& doc, std::initializer_list<const char*> allowed, const char* where) {
  if (!doc.is_object()) throw Error(ErrorKind::config, std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end())
      throw Error(ErrorKind::config, std::string("unknown key in ") + where, key);
  }
}

EndpointSpec endpoint_from_json(const json& doc, bool judge) {
  check_keys(doc, {"kind", "mock", "seed", "image_sigma", "audio_sigma", "reply", "url", "rate_limit", "concurrency",
                   "timeout_ms"},
             judge ? "judge" : "target");
  EndpointSpec e;
  e.kind = doc.value("kind", std::string(judge ? "none" : "mock"));
  if (doc.contains("mock")) e.mock.kind = parse_mock_kind(doc.at("mock").get<std::string>());
  e.mock.seed = doc.value("seed", std::uint64_t{0});
  e.mock.image_sigma = doc.value("image_sigma", 0.0);
  e.mock.audio_sigma = doc.value("audio_sigma", 0.0);
  e.reply = doc.value("reply", std::string());
  e.url = doc.value("url", std::string());
  e.http.rate_limit = doc.value("rate_limit", 1.0);
  e.http.concurrency = doc.value("concurrency", std::size_t{4});
  e.timeout = std::chrono::milliseconds(doc.value("timeout_ms", 60000));
  return e;
}

json endpoint_to_json(const EndpointSpec& e, bool judge) {
  json doc{{"kind", e.kind}};
  if (e.kind == "mock" && !judge) {
    doc["mock"] = to_string(e.mock.kind);
    doc["seed"] = e.mock.seed;
    doc["image_sigma"] = e.mock.image_sigma;
    doc["audio_sigma"] = e.mock.audio_sigma;
  }
  if (e.kind == "mock" && judge) doc["reply"] = e.reply;
  if (e.kind == "http") {
    doc["url"] = e.url;
    doc["rate_limit"] = e.http.rate_limit;
    doc["concurrency"] = e.http.concurrency;
    doc["timeout_ms"] = e.timeout.count();
  }
  return doc;
}

}  // namespace

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorKind::config, why); };
  if (n_prompts < 1) fail("n_prompts must be >= 1");
  if (k < 1) fail("k must be >= 1");
  if (n_fragments < 1) fail("n_fragments must be >= 1");
  if (concurrency < 1) fail("concurrency must be >= 1");
  if (retry_attempts < 1) fail("retry.max_attempts must be >= 1");
  if (retry_interval.count() < 0) fail("retry.interval_ms must be >= 0");
  if (sliding.window < 1 || sliding.stride < 1) fail("sliding window and stride must be >= 1");
  if (target.kind != "mock" && target.kind != "http") fail("target.kind must be mock or http");
  if (target.kind == "http" && target.url.empty()) fail("target.url is required for http targets");
  if (judge.kind != "none" && judge.kind != "mock" && judge.kind != "mock-audio" && judge.kind != "http")
    fail("judge.kind must be none, mock, mock-audio or http");
  if (judge.kind == "http" && judge.url.empty()) fail("judge.url is required for http judges");
  if (std::find(kTextMetrics.begin(), kTextMetrics.end(), pair_text_metric) == kTextMetrics.end())
    fail("pair text metric must be one of words_copied, continue_copied, rouge_l, bleu4, clair");
  if (std::find(kImageMetrics.begin(), kImageMetrics.end(), pair_image_metric) == kImageMetrics.end())
    fail("pair image metric must be one of mse, psnr, sift");
  if (mode == LeakageMode::pair && modality != Modality::image) fail("pair mode needs modality image");
  try {
    params.validate();
  } catch (const Error& e) {
    fail(e.reason());
  }
}

ExperimentConfig ExperimentConfig::from_json(const json& doc, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  try {
    check_keys(doc, {"corpus", "index", "embedder", "policy", "target", "judge", "n_prompts", "k", "command",
                     "commands", "fragments", "n_fragments", "modality", "mode", "params", "thresholds",
                     "pair_metrics", "refusal_patterns", "retry", "sliding", "sift", "seed", "concurrency",
                     "output"},
               "config");
    if (!doc.contains("corpus")) throw Error(ErrorKind::config, "config needs \"corpus\"");
    c.corpus = resolve(base_dir, doc.at("corpus").get<std::string>());
    if (doc.contains("index") && !doc.at("index").is_null())
      c.index = resolve(base_dir, doc.at("index").get<std::string>());
    c.embedder = doc.value("embedder", c.embedder);
    if (doc.contains("policy")) c.policy = parse_policy(doc.at("policy").get<std::string>());
    if (doc.contains("target")) c.target = endpoint_from_json(doc.at("target"), false);
    if (doc.contains("judge")) c.judge = endpoint_from_json(doc.at("judge"), true);
    c.n_prompts = doc.value("n_prompts", c.n_prompts);
    c.k = doc.value("k", c.k);
    if (doc.contains("command")) c.command = CommandId::parse(doc.at("command").get<std::string>());
    if (doc.contains("commands") && !doc.at("commands").is_null())
      c.commands = resolve(base_dir, doc.at("commands").get<std::string>());
    if (doc.contains("fragments") && !doc.at("fragments").is_null())
      c.fragments = resolve(base_dir, doc.at("fragments").get<std::string>());
    c.n_fragments = doc.value("n_fragments", c.n_fragments);
    if (doc.contains("modality")) c.modality = parse_modality(doc.at("modality").get<std::string>());
    if (doc.contains("mode")) c.mode = parse_leakage_mode(doc.at("mode").get<std::string>());
    if (doc.contains("params")) {
      const auto& p = doc.at("params");
      check_keys(p, {"temperature", "cfg", "max_output_tokens"}, "params");
      c.params.temperature = p.value("temperature", 0.0);
      if (p.contains("cfg") && !p.at("cfg").is_null()) c.params.cfg = p.at("cfg").get<double>();
      c.params.max_output_tokens = p.value("max_output_tokens", c.params.max_output_tokens);
    }
    if (doc.contains("thresholds")) {
      const auto& t = doc.at("thresholds");
      check_keys(t, {"mse", "psnr", "sift", "words", "run", "rouge", "bleu", "clair", "mfcc", "chroma"}, "thresholds");
      auto& th = c.thresholds;
      th.visual.mse = t.value("mse", th.visual.mse);
      th.visual.psnr = t.value("psnr", th.visual.psnr);
      th.visual.sift = t.value("sift", th.visual.sift);
      th.text.words = t.value("words", th.text.words);
      th.text.run = t.value("run", th.text.run);
      th.text.rouge = t.value("rouge", th.text.rouge);
      th.text.bleu = t.value("bleu", th.text.bleu);
      th.text.clair = t.value("clair", th.text.clair);
      th.audio.mfcc = t.value("mfcc", th.audio.mfcc);
      th.audio.chroma = t.value("chroma", th.audio.chroma);
    }
    if (doc.contains("pair_metrics")) {
      const auto& pm = doc.at("pair_metrics");
      check_keys(pm, {"text", "image"}, "pair_metrics");
      c.pair_text_metric = pm.value("text", c.pair_text_metric);
      c.pair_image_metric = pm.value("image", c.pair_image_metric);
    }
    if (doc.contains("refusal_patterns")) c.refusal_patterns = doc.at("refusal_patterns").get<std::vector<std::string>>();
    if (doc.contains("retry")) {
      const auto& r = doc.at("retry");
      check_keys(r, {"max_attempts", "interval_ms"}, "retry");
      c.retry_attempts = r.value("max_attempts", c.retry_attempts);
      c.retry_interval = std::chrono::milliseconds(r.value("interval_ms", c.retry_interval.count()));
    }
    if (doc.contains("sliding")) {
      const auto& s = doc.at("sliding");
      check_keys(s, {"window", "stride"}, "sliding");
      c.sliding.window = s.value("window", c.sliding.window);
      c.sliding.stride = s.value("stride", c.sliding.stride);
    }
    if (doc.contains("sift")) {
      const auto& s = doc.at("sift");
      check_keys(s, {"contrast_threshold", "edge_ratio", "ratio_test", "scales_per_octave", "sigma0"}, "sift");
      c.sift.contrast_threshold = s.value("contrast_threshold", c.sift.contrast_threshold);
      c.sift.edge_ratio = s.value("edge_ratio", c.sift.edge_ratio);
      c.sift.ratio_test = s.value("ratio_test", c.sift.ratio_test);
      c.sift.scales_per_octave = s.value("scales_per_octave", c.sift.scales_per_octave);
      c.sift.sigma0 = s.value("sigma0", c.sift.sigma0);
    }
    c.seed = doc.value("seed", c.seed);
    c.concurrency = doc.value("concurrency", c.concurrency);
    if (doc.contains("output") && !doc.at("output").is_null())
      c.output = resolve(base_dir, doc.at("output").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("malformed config: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config) throw;
    throw Error(ErrorKind::config, e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("config is not valid JSON: ") + e.what(), path.string());
  }
  return from_json(doc, path.parent_path());
}

json ExperimentConfig::to_json() const {
  auto opt_path = [](const std::optional<std::filesystem::path>& p) { return p ? json(p->string()) : json(nullptr); };
  json doc;
  doc["corpus"] = corpus.string();
  doc["index"] = opt_path(index);
  doc["embedder"] = embedder;
  doc["policy"] = to_string(policy);
  doc["target"] = endpoint_to_json(target, false);
  doc["judge"] = endpoint_to_json(judge, true);
  doc["n_prompts"] = n_prompts;
  doc["k"] = k;
  doc["command"] = command.str();
  doc["commands"] = opt_path(commands);
  doc["fragments"] = opt_path(fragments);
  doc["n_fragments"] = n_fragments;
  doc["modality"] = to_string(modality);
  doc["mode"] = to_string(mode);
  doc["params"] = {{"temperature", params.temperature},
                   {"cfg", params.cfg ? json(*params.cfg) : json(nullptr)},
                   {"max_output_tokens", params.max_output_tokens}};
  const auto& th = thresholds;
  doc["thresholds"] = {{"mse", th.visual.mse},     {"psnr", th.visual.psnr}, {"sift", th.visual.sift},
                       {"words", th.text.words},   {"run", th.text.run},     {"rouge", th.text.rouge},
                       {"bleu", th.text.bleu},     {"clair", th.text.clair}, {"mfcc", th.audio.mfcc},
                       {"chroma", th.audio.chroma}};
  doc["pair_metrics"] = {{"text", pair_text_metric}, {"image", pair_image_metric}};
  doc["refusal_patterns"] = refusal_patterns;
  doc["retry"] = {{"max_attempts", retry_attempts}, {"interval_ms", retry_interval.count()}};
  doc["sliding"] = {{"window", sliding.window}, {"stride", sliding.stride}};
  doc["sift"] = {{"contrast_threshold", sift.contrast_threshold},
                 {"edge_ratio", sift.edge_ratio},
                 {"ratio_test", sift.ratio_test},
                 {"scales_per_octave", sift.scales_per_octave},
                 {"sigma0", sift.sigma0}};
  doc["seed"] = seed;
  doc["concurrency"] = concurrency;
  doc["output"] = opt_path(output);
  return doc;
}

Modality ExperimentConfig::output_modality() const {
  switch (mode) {
    case LeakageMode::direct: return modality;
    case LeakageMode::indirect: return Modality::text;
    case LeakageMode::pair: return Modality::image;
  }
  return Modality::text;
}

RetryPolicy ExperimentConfig::retry() const { return RetryPolicy{retry_attempts, retry_interval, {}}; }

std::vector<std::string> metric_names(const ExperimentConfig& config, bool with_judge) {
  std::vector<std::string> text = {"words_copied", "continue_copied", "rouge_l", "bleu4"};
  if (with_judge) text.push_back("clair");
  if (config.mode == LeakageMode::pair) {
    text.insert(text.end(), kImageMetrics.begin(), kImageMetrics.end());
    text.push_back("pair");
    return text;
  }
  if (config.mode == LeakageMode::direct && config.modality == Modality::image) return kImageMetrics;
  if (config.mode == LeakageMode::direct && config.modality == Modality::audio) {
    std::vector<std::string> audio = {"mfcc", "chroma"};
    if (with_judge) audio.push_back("llm_judge");
    return audio;
  }
  return text;
}

// -------------------------------------------------------------- workspace

namespace {

FragmentSource default_fragments(const ExperimentConfig& config, const Corpus& corpus) {
  if (config.fragments) return FragmentSource::from_file(*config.fragments);
  std::string all;
  for (const auto& e : corpus.entries())
    if (e.text) (all += *e.text) += '\n';
  return FragmentSource::from_text(all);
}

CommandCatalog catalog_for(const ExperimentConfig& config) {
  return config.commands ? CommandCatalog::from_file(*config.commands) : CommandCatalog::builtin();
}

}  // namespace

Workspace::Workspace(const ExperimentConfig& base)
    : Workspace(base, std::make_shared<const Corpus>(load_manifest(base.corpus))) {}

Workspace::Workspace(const ExperimentConfig& base, std::shared_ptr<const Corpus> corpus)
    : corpus_(std::move(corpus)), catalog_(catalog_for(base)), fragments_(default_fragments(base, *corpus_)) {}

std::shared_ptr<const Embedder> Workspace::embedder(const std::string& spec, const ExperimentConfig& config) {
  auto it = embedders_.find(spec);
  if (it != embedders_.end()) return it->second;
  auto e = make_embedder(spec, config.retry(), config.target.http);
  embedders_.emplace(spec, e);
  return e;
}

std::shared_ptr<const IndexedDatabase> Workspace::index(const ExperimentConfig& config) {
  const std::string key = config.embedder + "|" + std::string(to_string(config.policy)) + "|" +
                          (config.index ? config.index->string() : std::string());
  auto it = indexes_.find(key);
  if (it != indexes_.end()) return it->second;
  const auto emb = embedder(config.embedder, config);
  std::shared_ptr<const IndexedDatabase> db;
  if (config.index) {
    db = std::make_shared<const IndexedDatabase>(IndexedDatabase::load(*config.index));
    if (db->policy() != config.policy)
      throw Error(ErrorKind::config, "index was built with policy " + std::string(to_string(db->policy())),
                  config.index->string());
    if (db->dim() != emb->dim())
      throw Error(ErrorKind::dim_mismatch,
                  "index dimension " + std::to_string(db->dim()) + " differs from embedder dimension " +
                      std::to_string(emb->dim()),
                  config.index->string());
    for (const auto& row : db->rows())
      if (!corpus_->find(row.entry_id))
        throw Error(ErrorKind::config, "index row names an entry missing from the corpus", row.entry_id);
  } else {
    db = std::make_shared<const IndexedDatabase>(build_index(*corpus_, *emb, config.policy, config.concurrency));
  }
  indexes_.emplace(key, db);
  return db;
}

Backends make_backends(const ExperimentConfig& config, std::shared_ptr<const Corpus> corpus) {
  Backends b;
  if (config.target.kind == "http") {
    b.target = std::make_shared<HttpTarget>(HttpEndpoint{config.target.url, api_key_from_env(), config.target.timeout},
                                            config.target.http);
  } else {
    b.target = std::make_shared<MockTarget>(config.target.mock, std::move(corpus));
  }
  const auto& j = config.judge;
  if (j.kind == "mock") b.judge = std::make_shared<MockJudge>(j.reply);
  else if (j.kind == "mock-audio") b.judge = MockJudge::audio_equality();
  else if (j.kind == "http")
    b.judge = std::make_shared<HttpTarget>(HttpEndpoint{j.url, api_key_from_env(), j.timeout}, j.http);
  return b;
}

// ---------------------------------------------------------------- scoring

namespace {

std::optional<bool> metric_pass(const HitVerdict& v, const std::string& m) {
  if (v.text) {
    const auto& t = *v.text;
    if (m == "words_copied") return t.words_pass;
    if (m == "continue_copied") return t.run_pass;
    if (m == "rouge_l") return t.rouge_pass;
    if (m == "bleu4") return t.bleu_pass;
    if (m == "clair") return t.clair ? std::optional<bool>(t.clair_pass) : std::nullopt;
  }
  if (v.visual) {
    const auto& s = *v.visual;
    if (m == "mse") return s.mse_pass;
    if (m == "psnr") return s.psnr_pass;
    if (m == "sift") return s.sift_pass;
  }
  if (v.audio) {
    const auto& a = *v.audio;
    if (m == "mfcc") return a.mfcc_pass;
    if (m == "chroma") return a.chroma_pass;
    if (m == "llm_judge") return a.llm_same ? std::optional<bool>(a.llm_pass) : std::nullopt;
  }
  return std::nullopt;
}

// Score plus whether larger is better.
std::optional<std::pair<double, bool>> metric_value(const HitVerdict& v, const std::string& m) {
  if (v.text) {
    const auto& t = *v.text;
    if (m == "words_copied") return std::pair{t.words_ratio, true};
    if (m == "continue_copied") return std::pair{static_cast<double>(t.longest_run), true};
    if (m == "rouge_l") return std::pair{t.rouge_l, true};
    if (m == "bleu4") return std::pair{t.bleu4, true};
    if (m == "clair" && t.clair) return std::pair{*t.clair, true};
  }
  if (v.visual) {
    const auto& s = *v.visual;
    if (m == "mse") return std::pair{s.mse, false};
    if (m == "psnr") return std::pair{s.psnr, true};
    if (m == "sift") return std::pair{s.sift, true};
  }
  if (v.audio) {
    const auto& a = *v.audio;
    if (m == "mfcc") return std::pair{a.mfcc_dist, false};
    if (m == "chroma") return std::pair{a.chroma_dist, false};
    if (m == "llm_judge" && a.llm_same) return std::pair{*a.llm_same ? 1.0 : 0.0, true};
  }
  if (m == "pair") {
    const auto it = v.pass.find("pair");
    if (it != v.pass.end() && v.text && v.visual) return std::pair{it->second ? 1.0 : 0.0, true};
  }
  return std::nullopt;
}

struct Scorer {
  const ExperimentConfig& config;
  const Corpus& corpus;
  const JudgeFn* judge;
  std::vector<std::string> metrics;

  HitVerdict score(const RetrievalHit& hit, const TargetResponse& response) const {
    HitVerdict v;
    v.hit = hit;
    for (const auto& m : metrics) v.pass[m] = false;
    if (response.refused) {
      v.note = "refused";
      return v;
    }
    const CorpusEntry& entry = corpus.at(hit.entry_id);
    const bool text_metrics = config.mode != LeakageMode::direct || config.modality == Modality::text;
    const bool image_metrics =
        config.mode == LeakageMode::pair || (config.mode == LeakageMode::direct && config.modality == Modality::image);
    const bool audio_metrics = config.mode == LeakageMode::direct && config.modality == Modality::audio;
    std::vector<std::string> notes;

    if (text_metrics) {
      if (!entry.text) {
        notes.emplace_back("entry has no reference text");
      } else {
        v.text = score_text(*entry.text, response.text.value_or(""), config.thresholds.text, judge);
      }
    }
    if (image_metrics) {
      if (!entry.image) notes.emplace_back("entry has no image");
      else if (!response.image) notes.emplace_back("response has no image");
      else v.visual = judge_direct_visual(*entry.image, *response.image, config.thresholds.visual, config.sift);
    }
    if (audio_metrics) {
      if (!entry.audio) {
        notes.emplace_back("entry has no audio");
      } else if (!response.audio) {
        notes.emplace_back("response has no audio");
      } else {
        try {
          v.audio = judge_direct_audio(*entry.audio, *response.audio, config.thresholds.audio, judge, config.sliding);
        } catch (const Error& e) {
          notes.emplace_back(std::string("audio not comparable: ") + e.reason());
        }
      }
    }
    for (const auto& m : metrics) {
      if (m == "pair") continue;
      v.pass[m] = metric_pass(v, m).value_or(false);
    }
    if (v.pass.count("pair")) v.pass["pair"] = judge_pair(v, config.pair_text_metric, config.pair_image_metric);
    for (std::size_t i = 0; i < notes.size(); ++i) v.note += (i ? "; " : "") + notes[i];
    return v;
  }
};

}  // namespace

bool judge_pair(const HitVerdict& verdict, const std::string& text_metric, const std::string& image_metric) {
  return metric_pass(verdict, text_metric).value_or(false) && metric_pass(verdict, image_metric).value_or(false);
}

bool judge_pair(const AttackRecord& record, const std::string& text_metric, const std::string& image_metric) {
  return std::any_of(record.verdicts.begin(), record.verdicts.end(),
                     [&](const HitVerdict& v) { return judge_pair(v, text_metric, image_metric); });
}

// ----------------------------------------------------------- experiments

namespace {

AggregateReport aggregate(const ExperimentConfig& config, const std::vector<std::string>& metrics,
                          const std::vector<AttackRecord>& records) {
  AggregateReport a;
  a.label = "run";
  a.n_prompts = records.size();
  a.k = config.k;
  a.metric_order = metrics;
  std::set<std::string> retrieved;
  for (const auto& r : records) {
    for (const auto& h : r.hits) retrieved.insert(h.entry_id);
    if (r.response.refused) ++a.refusals;
    if (r.error) ++a.failures;
  }
  a.retrieval_unique = retrieved.size();
  for (const auto& m : metrics) {
    MetricTally t;
    double sum = 0.0;
    for (const auto& r : records) {
      if (r.success.at(m)) {
        ++t.total;
        ++t.per_entry[r.credited.at(m)];
      }
      std::optional<double> best;
      for (const auto& v : r.verdicts) {
        const auto val = metric_value(v, m);
        if (!val || !std::isfinite(val->first)) continue;
        if (!best || (val->second ? val->first > *best : val->first < *best)) best = val->first;
      }
      if (best) {
        sum += *best;
        ++t.scored;
      }
    }
    t.unique = t.per_entry.size();
    if (t.scored) t.mean_score = sum / static_cast<double>(t.scored);
    a.metrics[m] = std::move(t);
  }
  return a;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config) {
  Workspace ws(config);
  return run_experiment(config, ws, make_backends(config, ws.corpus()));
}

RunResult run_experiment(const ExperimentConfig& config, Workspace& ws, const Backends& backends) {
  config.validate();
  if (!backends.target) throw Error(ErrorKind::config, "no target configured");
  if (!ws.catalog().contains(config.command))
    throw Error(ErrorKind::unknown_command, "command not in catalog", config.command.str());
  const auto t0 = std::chrono::steady_clock::now();
  const auto corpus = ws.corpus();
  const auto embedder = ws.embedder(config.embedder, config);
  const auto index = ws.index(config);
  if (index->empty()) throw Error(ErrorKind::empty_index, "index has no rows");

  GenerationParams params = config.params;
  params.output_modality = config.output_modality();
  const RetryPolicy retry = config.retry();
  const RefusalDetector refusals(config.refusal_patterns);
  std::optional<JudgeFn> judge_fn;
  if (backends.judge) judge_fn = make_judge_fn(backends.judge, retry);
  const auto metrics = metric_names(config, static_cast<bool>(judge_fn));
  const Scorer scorer{config, *corpus, judge_fn ? &*judge_fn : nullptr, metrics};

  std::vector<AttackRecord> records(config.n_prompts);
  auto process = [&](std::size_t i) {
    AttackRecord& rec = records[i];
    rec.index = i;
    const std::uint64_t seed = derive_seed(config.seed, i);
    rec.prompt = compose_attack(sample_information(ws.fragments(), seed, config.n_fragments), config.command,
                                config.modality, ws.catalog(), seed);
    const auto query = embed(*embedder, ContentRef::of_text(rec.prompt.q), index->dim());
    rec.hits = index->retrieve(query, config.k);
    const auto fused = fuse_context(rec.prompt, rec.hits, *corpus, config.policy);
    try {
      rec.response = generate(*backends.target, fused, params, retry, refusals);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::exhausted && e.kind() != ErrorKind::transport && e.kind() != ErrorKind::contract)
        throw;
      rec.response = TargetResponse{};
      rec.response.refused = true;
      rec.error = e.what();
    }
    for (const auto& h : rec.hits) rec.verdicts.push_back(scorer.score(h, rec.response));
    for (const auto& m : metrics) {
      rec.success[m] = false;
      for (const auto& v : rec.verdicts) {
        if (v.pass.at(m)) {
          rec.success[m] = true;
          rec.credited[m] = v.hit.entry_id;
          break;
        }
      }
    }
  };

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= records.size()) return;
      try {
        process(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = records.size();
        return;
      }
    }
  };
  const std::size_t threads = std::min(config.concurrency, records.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  if (failure) std::rethrow_exception(failure);

  RunResult result;
  result.config = config;
  result.aggregate = aggregate(config, metrics, records);
  result.records = std::move(records);
  result.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

ExperimentConfig with_axis_value(const ExperimentConfig& base, const std::string& axis, const std::string& value) {
  ExperimentConfig c = base;
  try {
    if (axis == "k") {
      std::size_t used = 0;
      const long long k = std::stoll(value, &used);
      if (used != value.size() || k < 1) throw Error(ErrorKind::config, "k values must be integers >= 1", value);
      c.k = static_cast<std::size_t>(k);
    } else if (axis == "command") {
      c.command = CommandId::parse(value);
    } else if (axis == "embedder") {
      c.embedder = value;
      c.index.reset();
    } else if (axis == "temperature") {
      c.params.temperature = std::stod(value);
    } else if (axis == "cfg") {
      if (value == "none") c.params.cfg.reset();
      else c.params.cfg = std::stod(value);
    } else {
      throw Error(ErrorKind::config, "unknown ablation axis (k, command, embedder, temperature, cfg)", axis);
    }
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::config, "bad value for axis " + axis, value);
  }
  c.validate();
  return c;
}

ReportBundle ablate(const ExperimentConfig& base, const std::string& axis, const std::vector<std::string>& values) {
  Workspace ws(base);
  return ablate(base, axis, values, ws, make_backends(base, ws.corpus()));
}

ReportBundle ablate(const ExperimentConfig& base, const std::string& axis, const std::vector<std::string>& values,
                    Workspace& ws, const Backends& backends) {
  if (values.empty()) throw Error(ErrorKind::config, "ablation needs at least one value", axis);
  std::vector<ExperimentConfig> configs;
  for (const auto& v : values) configs.push_back(with_axis_value(base, axis, v));
  ReportBundle bundle;
  bundle.axis = axis;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    auto run = run_experiment(configs[i], ws, backends);
    run.aggregate.axis = axis;
    run.aggregate.axis_value = values[i];
    run.aggregate.label = axis + "=" + values[i];
    bundle.runs.push_back(std::move(run));
  }
  return bundle;
}

SpeakerSweepResult speaker_sweep(const RunResult& run, const Corpus& corpus, const Corpus& pool,
                                 const std::vector<std::size_t>& top_k, FeatureKind kind) {
  if (top_k.empty()) throw Error(ErrorKind::config, "speaker sweep needs at least one top-k value");
  if (pool.empty()) throw Error(ErrorKind::validation, "speaker pool is empty");
  std::set<std::string> retrieved;
  for (const auto& r : run.records)
    for (const auto& h : r.hits) retrieved.insert(h.entry_id);
  std::vector<SpeakerCandidate> candidates;
  for (const auto& e : pool.entries()) {
    if (retrieved.count(e.id)) throw Error(ErrorKind::validation, "pool entry was also retrieved", e.id);
    if (!e.audio || !e.speaker_id) throw Error(ErrorKind::validation, "pool entry needs audio and speaker_id", e.id);
    candidates.push_back({*e.speaker_id, speaker_signature(*e.audio, kind)});
  }

  SpeakerSweepResult out;
  out.top_k = top_k;
  out.kind = kind;
  out.counts.assign(top_k.size(), 0);
  for (const auto& r : run.records) {
    if (r.response.refused || !r.response.audio || r.hits.empty()) continue;
    const auto& entry = corpus.at(r.hits.front().entry_id);
    if (!entry.speaker_id) throw Error(ErrorKind::validation, "retrieved entry has no speaker_id", entry.id);
    std::vector<double> sig;
    try {
      sig = speaker_signature(*r.response.audio, kind);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::invalid_argument) throw;
      continue;  // shorter than one analysis frame
    }
    const std::size_t rank = speaker_rank(sig, candidates, *entry.speaker_id);
    out.ranks.push_back(rank);
    out.record_index.push_back(r.index);
    for (std::size_t i = 0; i < top_k.size(); ++i)
      if (rank <= top_k[i]) ++out.counts[i];
  }
  out.records = out.ranks.size();
  return out;
}

}  // namespace leakprobe
