#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "leakprobe/error.hpp"
#include "leakprobe/harness.hpp"
#include "leakprobe/synthetic.hpp"
#include "leakprobe/util.hpp"

using namespace leakprobe;
namespace fs = std::filesystem;

namespace {

std::vector<std::size_t> parse_sizes(const std::string& csv) {
  std::vector<std::size_t> out;
  for (const auto& s : split(csv, ',')) {
    if (s.empty()) continue;
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      out.push_back(v);
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::config, "expected a comma-separated list of integers", csv);
    }
  }
  if (out.empty()) throw Error(ErrorKind::config, "empty list", csv);
  return out;
}

std::vector<std::string> parse_list(const std::string& csv) {
  std::vector<std::string> out;
  for (auto& s : split(csv, ','))
    if (!s.empty()) out.push_back(s);
  if (out.empty()) throw Error(ErrorKind::config, "empty list", csv);
  return out;
}

fs::path output_dir(const ExperimentConfig& config, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (config.output) return *config.output;
  return "leakprobe-out";
}

void print_aggregate(const AggregateReport& a) {
  std::cout << a.label << ": prompts=" << a.n_prompts << " k=" << a.k << " retrieval_unique=" << a.retrieval_unique
            << " refusals=" << a.refusals << " failures=" << a.failures << "\n";
  for (const auto& m : a.metric_order) {
    const auto& t = a.metrics.at(m);
    std::cout << "  " << m << " " << t.total << "(" << t.unique << ")\n";
  }
}

MockServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box privacy red-teaming harness for multimodal RAG"};
  app.require_subcommand(1);

  // index build
  auto* index_cmd = app.add_subcommand("index", "Embedding index tools");
  index_cmd->require_subcommand(1);
  auto* build_cmd = index_cmd->add_subcommand("build", "Embed a corpus and write an index file");
  std::string idx_corpus, idx_backend = "mock", idx_out, idx_policy = "unimodal";
  build_cmd->add_option("--corpus", idx_corpus, "Corpus manifest")->required();
  build_cmd->add_option("--backend", idx_backend, "Embedding backend: mock[:dim[:seed]] or http(s) URL");
  build_cmd->add_option("--out", idx_out, "Index output path")->required();
  build_cmd->add_option("--policy", idx_policy, "Storage policy: unimodal or paired");

  // attack run
  auto* attack_cmd = app.add_subcommand("attack", "Attack campaigns");
  attack_cmd->require_subcommand(1);
  auto* run_cmd = attack_cmd->add_subcommand("run", "Run one campaign");
  std::string run_config, run_out;
  run_cmd->add_option("--config", run_config, "Experiment config JSON")->required();
  run_cmd->add_option("--out", run_out, "Output directory (overrides the config)");

  auto* ablate_cmd = app.add_subcommand("ablate", "Sweep one axis of a campaign");
  std::string ab_config, ab_axis, ab_values, ab_out;
  ablate_cmd->add_option("--config", ab_config, "Experiment config JSON")->required();
  ablate_cmd->add_option("--axis", ab_axis, "k, command, embedder, temperature or cfg")->required();
  ablate_cmd->add_option("--values", ab_values, "Comma-separated axis values")->required();
  ablate_cmd->add_option("--out", ab_out, "Output directory (overrides the config)");

  auto* speaker_cmd = app.add_subcommand("speaker-id", "Direct audio campaign plus speaker re-identification");
  std::string sp_config, sp_pool, sp_topk = "3,10,100", sp_kind = "mfcc", sp_out;
  speaker_cmd->add_option("--config", sp_config, "Experiment config JSON")->required();
  speaker_cmd->add_option("--pool", sp_pool, "Candidate pool manifest")->required();
  speaker_cmd->add_option("--topk", sp_topk, "Comma-separated top-k cut-offs");
  speaker_cmd->add_option("--kind", sp_kind, "Signature feature: mfcc or chroma");
  speaker_cmd->add_option("--out", sp_out, "Output directory (overrides the config)");

  auto* report_cmd = app.add_subcommand("report", "Re-emit tables from an existing report directory");
  std::string rp_in, rp_format = "csv,json", rp_out;
  report_cmd->add_option("--in", rp_in, "Directory holding report.json")->required();
  report_cmd->add_option("--format", rp_format, "Comma-separated: csv, json");
  report_cmd->add_option("--out", rp_out, "Output directory (defaults to --in)");

  auto* serve_cmd = app.add_subcommand("serve", "Serve mock /generate and /embed endpoints over HTTP");
  std::string sv_corpus, sv_mock = "echo", sv_embedder = "mock", sv_host = "127.0.0.1";
  int sv_port = 8080;
  std::uint64_t sv_seed = 0;
  double sv_image_sigma = 0.0, sv_audio_sigma = 0.0;
  serve_cmd->add_option("--corpus", sv_corpus, "Corpus manifest used for transcript lookup")->required();
  serve_cmd->add_option("--mock", sv_mock, "echo, paraphrase, noiser or refusal");
  serve_cmd->add_option("--embedder", sv_embedder, "mock[:dim[:seed]]");
  serve_cmd->add_option("--host", sv_host);
  serve_cmd->add_option("--port", sv_port);
  serve_cmd->add_option("--seed", sv_seed);
  serve_cmd->add_option("--image-sigma", sv_image_sigma);
  serve_cmd->add_option("--audio-sigma", sv_audio_sigma);

  auto* synth_cmd = app.add_subcommand("synth", "Write a seeded synthetic corpus manifest");
  std::string sy_kind = "audio", sy_out, sy_prefix;
  std::size_t sy_entries = 200, sy_speakers = 50, sy_words = 20;
  std::uint64_t sy_seed = 0;
  synth_cmd->add_option("--kind", sy_kind, "audio, image or text");
  synth_cmd->add_option("--out", sy_out, "Manifest path; payloads are written next to it")->required();
  synth_cmd->add_option("--entries", sy_entries);
  synth_cmd->add_option("--speakers", sy_speakers);
  synth_cmd->add_option("--words", sy_words);
  synth_cmd->add_option("--seed", sy_seed);
  synth_cmd->add_option("--id-prefix", sy_prefix);

  CLI11_PARSE(app, argc, argv);

  try {
    if (build_cmd->parsed()) {
      const auto corpus = load_manifest(idx_corpus);
      const auto embedder = make_embedder(idx_backend);
      const auto index = build_index(corpus, *embedder, parse_policy(idx_policy));
      index.save(idx_out);
      std::cout << "indexed " << index.entry_count() << " entries (" << index.row_count() << " rows, dim "
                << index.dim() << ") -> " << idx_out << "\n";
    } else if (run_cmd->parsed()) {
      const auto config = ExperimentConfig::load(run_config);
      ReportBundle bundle;
      bundle.runs.push_back(run_experiment(config));
      print_aggregate(bundle.runs.back().aggregate);
      const auto dir = output_dir(config, run_out);
      emit_report(bundle, dir);
      std::cout << "report -> " << dir.string() << "\n";
    } else if (ablate_cmd->parsed()) {
      const auto config = ExperimentConfig::load(ab_config);
      const auto bundle = ablate(config, ab_axis, parse_list(ab_values));
      for (const auto& run : bundle.runs) print_aggregate(run.aggregate);
      const auto dir = output_dir(config, ab_out);
      emit_report(bundle, dir);
      std::cout << "report -> " << dir.string() << "\n";
    } else if (speaker_cmd->parsed()) {
      const auto config = ExperimentConfig::load(sp_config);
      const auto pool = load_manifest(sp_pool);
      Workspace ws(config);
      ReportBundle bundle;
      bundle.runs.push_back(run_experiment(config, ws, make_backends(config, ws.corpus())));
      bundle.speaker =
          speaker_sweep(bundle.runs.back(), *ws.corpus(), pool, parse_sizes(sp_topk), parse_feature_kind(sp_kind));
      print_aggregate(bundle.runs.back().aggregate);
      for (std::size_t i = 0; i < bundle.speaker->top_k.size(); ++i)
        std::cout << "  top-" << bundle.speaker->top_k[i] << ": " << bundle.speaker->counts[i] << "/"
                  << bundle.speaker->records << "\n";
      const auto dir = output_dir(config, sp_out);
      emit_report(bundle, dir);
      std::cout << "report -> " << dir.string() << "\n";
    } else if (report_cmd->parsed()) {
      const fs::path out = rp_out.empty() ? fs::path(rp_in) : fs::path(rp_out);
      reemit_report(rp_in, out, parse_list(rp_format));
      std::cout << "tables -> " << out.string() << "\n";
    } else if (serve_cmd->parsed()) {
      auto corpus = std::make_shared<const Corpus>(load_manifest(sv_corpus));
      MockTargetConfig mc;
      mc.kind = parse_mock_kind(sv_mock);
      mc.seed = sv_seed;
      mc.image_sigma = sv_image_sigma;
      mc.audio_sigma = sv_audio_sigma;
      MockServer server(std::make_shared<MockTarget>(mc, corpus), make_embedder(sv_embedder));
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "serving " << sv_mock << " on http://" << sv_host << ":" << sv_port << std::endl;
      server.listen_blocking(sv_host, sv_port);
      g_server = nullptr;
    } else if (synth_cmd->parsed()) {
      std::vector<CorpusEntry> entries;
      if (sy_kind == "audio") {
        SyntheticAudioOptions o;
        o.entries = sy_entries;
        o.speakers = sy_speakers;
        o.words = sy_words;
        o.seed = sy_seed;
        if (!sy_prefix.empty()) o.id_prefix = sy_prefix;
        entries = synthetic_audio_entries(o);
      } else if (sy_kind == "image") {
        SyntheticImageOptions o;
        o.entries = sy_entries;
        o.words = sy_words;
        o.seed = sy_seed;
        if (!sy_prefix.empty()) o.id_prefix = sy_prefix;
        entries = synthetic_image_entries(o);
      } else if (sy_kind == "text") {
        entries = synthetic_text_entries(sy_entries, sy_words, sy_seed, sy_prefix.empty() ? "t" : sy_prefix);
      } else {
        throw Error(ErrorKind::config, "synth kind must be audio, image or text", sy_kind);
      }
      write_manifest(sy_out, entries);
      std::cout << "wrote " << entries.size() << " entries -> " << sy_out << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "leakprobe: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "leakprobe: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
