#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <sstream>

#include "leakprobe/error.hpp"
#include "leakprobe/harness.hpp"
#include "leakprobe/util.hpp"

namespace leakprobe {

using nlohmann::json;

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

json text_verdict_json(const TextVerdict& t) {
  json doc{{"words_ratio", num(t.words_ratio)},
           {"longest_run", t.longest_run},
           {"rouge_l", num(t.rouge_l)},
           {"bleu4", num(t.bleu4)},
           {"bleu_smoothing", kBleuSmoothing}};
  doc["clair"] = t.clair ? num(*t.clair) : json(nullptr);
  if (t.clair_error) doc["clair_error"] = *t.clair_error;
  return doc;
}

json visual_verdict_json(const VisualVerdict& v) {
  return {{"mse", num(v.mse)}, {"psnr", num(v.psnr)}, {"sift", num(v.sift)}};
}

json audio_verdict_json(const AudioVerdict& a) {
  json doc{{"mfcc_dist", num(a.mfcc_dist)}, {"chroma_dist", num(a.chroma_dist)}};
  doc["llm_same"] = a.llm_same ? json(*a.llm_same) : json(nullptr);
  if (a.llm_error) doc["llm_error"] = *a.llm_error;
  return doc;
}

json response_json(const TargetResponse& r) {
  json doc{{"refused", r.refused}, {"attempts", r.attempts}};
  doc["text"] = r.text ? json(*r.text) : json(nullptr);
  if (r.image) {
    doc["image"] = {{"width", r.image->width},
                    {"height", r.image->height},
                    {"fnv1a64", hex64(fnv1a64(canonical_bytes(ContentRef::of_image(*r.image))))}};
  } else {
    doc["image"] = nullptr;
  }
  if (r.audio) {
    doc["audio"] = {{"sample_rate", r.audio->sample_rate},
                    {"samples", r.audio->samples.size()},
                    {"fnv1a64", hex64(fnv1a64(canonical_bytes(ContentRef::of_audio(*r.audio))))}};
  } else {
    doc["audio"] = nullptr;
  }
  return doc;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

const json& runs_of(const json& bundle) {
  if (!bundle.contains("runs") || !bundle.at("runs").is_array())
    throw Error(ErrorKind::parse, "report has no \"runs\" array");
  return bundle.at("runs");
}

}  // namespace

json AggregateReport::to_json() const {
  json doc{{"label", label},
           {"axis", axis},
           {"value", axis_value},
           {"n_prompts", n_prompts},
           {"k", k},
           {"retrieval_unique", retrieval_unique},
           {"refusals", refusals},
           {"failures", failures},
           {"metric_order", metric_order}};
  json ms = json::object();
  for (const auto& [name, t] : metrics) {
    json m{{"total", t.total}, {"unique", t.unique}, {"scored", t.scored}, {"per_entry", t.per_entry}};
    m["mean_score"] = t.mean_score ? num(*t.mean_score) : json(nullptr);
    ms[name] = std::move(m);
  }
  doc["metrics"] = std::move(ms);
  return doc;
}

AggregateReport AggregateReport::from_json(const json& doc) {
  AggregateReport a;
  try {
    a.label = doc.at("label").get<std::string>();
    a.axis = doc.value("axis", std::string());
    a.axis_value = doc.value("value", std::string());
    a.n_prompts = doc.at("n_prompts").get<std::size_t>();
    a.k = doc.at("k").get<std::size_t>();
    a.retrieval_unique = doc.at("retrieval_unique").get<std::size_t>();
    a.refusals = doc.at("refusals").get<std::size_t>();
    a.failures = doc.value("failures", std::size_t{0});
    a.metric_order = doc.at("metric_order").get<std::vector<std::string>>();
    for (const auto& [name, m] : doc.at("metrics").items()) {
      MetricTally t;
      t.total = m.at("total").get<std::size_t>();
      t.unique = m.at("unique").get<std::size_t>();
      t.scored = m.value("scored", std::size_t{0});
      if (m.contains("per_entry")) t.per_entry = m.at("per_entry").get<std::map<std::string, std::size_t>>();
      if (m.contains("mean_score") && !m.at("mean_score").is_null()) t.mean_score = m.at("mean_score").get<double>();
      a.metrics[name] = std::move(t);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed aggregate: ") + e.what());
  }
  return a;
}

json SpeakerSweepResult::to_json() const {
  return {{"feature", to_string(kind)}, {"top_k", top_k},   {"counts", counts},
          {"records", records},         {"ranks", ranks},   {"record_index", record_index}};
}

SpeakerSweepResult SpeakerSweepResult::from_json(const json& doc) {
  SpeakerSweepResult s;
  try {
    s.kind = parse_feature_kind(doc.at("feature").get<std::string>());
    s.top_k = doc.at("top_k").get<std::vector<std::size_t>>();
    s.counts = doc.at("counts").get<std::vector<std::size_t>>();
    s.records = doc.at("records").get<std::size_t>();
    s.ranks = doc.value("ranks", std::vector<std::size_t>{});
    s.record_index = doc.value("record_index", std::vector<std::size_t>{});
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed speaker sweep: ") + e.what());
  }
  return s;
}

json record_to_json(const AttackRecord& r) {
  json doc;
  doc["index"] = r.index;
  doc["prompt"] = {{"information", r.prompt.information},
                   {"command", r.prompt.command.str()},
                   {"command_text", r.prompt.command_text},
                   {"modality", to_string(r.prompt.modality)},
                   {"q", r.prompt.q},
                   {"seed", r.prompt.rng_seed}};
  json hits = json::array();
  for (const auto& h : r.hits) hits.push_back({{"entry_id", h.entry_id}, {"distance", num(h.distance)}, {"rank", h.rank}});
  doc["hits"] = std::move(hits);
  doc["response"] = response_json(r.response);
  doc["error"] = r.error ? json(*r.error) : json(nullptr);
  json verdicts = json::array();
  for (const auto& v : r.verdicts) {
    json jv{{"entry_id", v.hit.entry_id}, {"rank", v.hit.rank}, {"pass", v.pass}};
    if (!v.note.empty()) jv["note"] = v.note;
    if (v.text) jv["text"] = text_verdict_json(*v.text);
    if (v.visual) jv["visual"] = visual_verdict_json(*v.visual);
    if (v.audio) jv["audio"] = audio_verdict_json(*v.audio);
    verdicts.push_back(std::move(jv));
  }
  doc["verdicts"] = std::move(verdicts);
  doc["success"] = r.success;
  doc["credited"] = r.credited;
  return doc;
}

json bundle_to_json(const ReportBundle& bundle) {
  json doc{{"format", "leakprobe-report"}, {"version", 1}, {"axis", bundle.axis}};
  json runs = json::array();
  for (const auto& run : bundle.runs) {
    json records = json::array();
    for (const auto& r : run.records) records.push_back(record_to_json(r));
    runs.push_back({{"config", run.config.to_json()},
                    {"aggregate", run.aggregate.to_json()},
                    {"records", std::move(records)}});
  }
  doc["runs"] = std::move(runs);
  doc["speaker"] = bundle.speaker ? bundle.speaker->to_json() : json(nullptr);
  return doc;
}

std::string summary_csv(const json& bundle) {
  std::string out = "run,axis,value,metric,total,unique,retrieval_unique,refusals\n";
  for (const auto& run : runs_of(bundle)) {
    const auto a = AggregateReport::from_json(run.at("aggregate"));
    for (const auto& m : a.metric_order) {
      const auto& t = a.metrics.at(m);
      out += csv_field(a.label) + ',' + csv_field(a.axis) + ',' + csv_field(a.axis_value) + ',' + m + ',' +
             std::to_string(t.total) + ',' + std::to_string(t.unique) + ',' + std::to_string(a.retrieval_unique) +
             ',' + std::to_string(a.refusals) + '\n';
    }
  }
  return out;
}

std::string ablation_csv(const json& bundle) {
  const auto& runs = runs_of(bundle);
  if (runs.empty()) return {};
  const auto first = AggregateReport::from_json(runs.front().at("aggregate"));
  std::string out = "value,retrieval_unique,refusals";
  for (const auto& m : first.metric_order) out += ',' + m + "_total," + m + "_unique";
  out += '\n';
  for (const auto& run : runs) {
    const auto a = AggregateReport::from_json(run.at("aggregate"));
    out += csv_field(a.axis_value) + ',' + std::to_string(a.retrieval_unique) + ',' + std::to_string(a.refusals);
    for (const auto& m : first.metric_order) {
      const auto it = a.metrics.find(m);
      out += ',' + (it == a.metrics.end() ? std::string() : std::to_string(it->second.total));
      out += ',' + (it == a.metrics.end() ? std::string() : std::to_string(it->second.unique));
    }
    out += '\n';
  }
  return out;
}

std::string speaker_csv(const json& bundle) {
  if (!bundle.contains("speaker") || bundle.at("speaker").is_null()) return {};
  const auto s = SpeakerSweepResult::from_json(bundle.at("speaker"));
  std::string out = "top_k,count,records\n";
  for (std::size_t i = 0; i < s.top_k.size(); ++i)
    out += std::to_string(s.top_k[i]) + ',' + std::to_string(s.counts[i]) + ',' + std::to_string(s.records) + '\n';
  return out;
}

namespace {

void write_tables(const json& doc, const std::filesystem::path& dir, const std::vector<std::string>& formats) {
  for (const auto& f : formats)
    if (f != "json" && f != "csv") throw Error(ErrorKind::config, "report format must be json or csv", f);
  auto wants = [&](const char* f) { return std::find(formats.begin(), formats.end(), f) != formats.end(); };
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create output directory: " + ec.message(), dir.string());
  if (wants("json")) write_file(dir / "report.json", doc.dump(2) + "\n");
  if (wants("csv")) {
    write_file(dir / "summary.csv", summary_csv(doc));
    const auto axis = doc.value("axis", std::string());
    if (!axis.empty()) write_file(dir / ("ablation_" + axis + ".csv"), ablation_csv(doc));
    if (doc.contains("speaker") && !doc.at("speaker").is_null()) write_file(dir / "speaker.csv", speaker_csv(doc));
  }
}

}  // namespace

void emit_report(const ReportBundle& bundle, const std::filesystem::path& dir, const std::vector<std::string>& formats) {
  write_tables(bundle_to_json(bundle), dir, formats);
  json meta{{"generated_at", utc_now()}};
  json runs = json::array();
  for (const auto& run : bundle.runs) {
    double total_latency = 0.0, max_latency = 0.0;
    std::size_t attempts = 0;
    for (const auto& r : run.records) {
      total_latency += r.response.latency_ms;
      max_latency = std::max(max_latency, r.response.latency_ms);
      attempts += static_cast<std::size_t>(r.response.attempts);
    }
    const double n = run.records.empty() ? 1.0 : static_cast<double>(run.records.size());
    runs.push_back({{"label", run.aggregate.label},
                    {"wall_ms", run.wall_ms},
                    {"latency_ms_mean", total_latency / n},
                    {"latency_ms_max", max_latency},
                    {"attempts_total", attempts}});
  }
  meta["runs"] = std::move(runs);
  write_file(dir / "meta.json", meta.dump(2) + "\n");
}

void reemit_report(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir,
                   const std::vector<std::string>& formats) {
  json doc;
  try {
    doc = json::parse(read_text_file(in_dir / "report.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("report.json is not valid JSON: ") + e.what(), in_dir.string());
  }
  if (doc.value("format", std::string()) != "leakprobe-report")
    throw Error(ErrorKind::parse, "not a leakprobe report", (in_dir / "report.json").string());
  write_tables(doc, out_dir, formats);
}

}  // namespace leakprobe
