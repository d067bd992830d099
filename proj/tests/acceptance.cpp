// End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "leakprobe/dsp.hpp"
#include "leakprobe/error.hpp"
#include "leakprobe/harness.hpp"
#include "leakprobe/synthetic.hpp"
#include "leakprobe/util.hpp"
#include "reference_mfcc.hpp"
#include "test_support.hpp"

using namespace leakprobe;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("FAILED " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ------------------------------------------------------------------ AC1

Outcome ac1_retrieval_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(101);
  constexpr std::size_t rows = 1000, dim = 64, queries = 100;
  IndexedDatabase db(dim, StoragePolicy::unimodal);
  std::vector<std::vector<float>> data;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < rows; ++i) {
    EmbeddingVector v;
    for (std::size_t j = 0; j < dim; ++j) v.values.push_back(static_cast<float>(rng.normal()));
    data.push_back(v.values);
    ids.push_back(fmt("r%04zu", i));
    db.add({ids.back(), Modality::text, std::move(v)});
  }
  std::size_t mismatches = 0;
  for (std::size_t q = 0; q < queries; ++q) {
    EmbeddingVector query;
    for (std::size_t j = 0; j < dim; ++j) query.values.push_back(static_cast<float>(rng.normal()));
    // Full sort of every row by (distance, id).
    std::vector<std::pair<long double, std::string>> all;
    for (std::size_t i = 0; i < rows; ++i) {
      long double s = 0;
      for (std::size_t j = 0; j < dim; ++j) {
        const long double d = static_cast<long double>(data[i][j]) - query.values[j];
        s += d * d;
      }
      all.emplace_back(std::sqrt(s), ids[i]);
    }
    std::sort(all.begin(), all.end());
    for (std::size_t k = 1; k <= 4; ++k) {
      const auto hits = db.retrieve(query, k);
      bool same = hits.size() == k;
      for (std::size_t r = 0; same && r < k; ++r)
        same = hits[r].entry_id == all[r].second && hits[r].rank == r + 1 &&
               std::abs(hits[r].distance - static_cast<double>(all[r].first)) < 1e-9;
      if (!same) ++mismatches;
    }
  }
  const double secs = seconds_since(t0);
  o.check(mismatches == 0, fmt("%zu of 400 queries differ from the full sort", mismatches));
  o.check(secs < 5.0, fmt("runtime %.2f s >= 5 s", secs));
  o.note(fmt("0/400 mismatches required, got %zu; %.2f s", mismatches, secs));
  return o;
}

// ------------------------------------------------------------------ AC2

using Tokens = std::vector<std::string>;

std::size_t brute_run(const Tokens& a, const Tokens& b) {
  std::size_t best = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      std::size_t len = 0;
      while (i + len < a.size() && j + len < b.size() && a[i + len] == b[j + len]) ++len;
      best = std::max(best, len);
    }
  return best;
}

ImageBuffer noise_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  ImageBuffer img(w, h);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

Outcome ac2_metric_oracles() {
  Outcome o;
  double worst_mse = 0, worst_psnr = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto a = noise_image(32, 32, 7000 + 2 * s), b = noise_image(32, 32, 7001 + 2 * s);
    double sum = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      const double d = static_cast<double>(a.data[i]) - b.data[i];
      sum += d * d;
    }
    const double want = sum / static_cast<double>(a.data.size());
    const double want_psnr = 10.0 * std::log10(255.0 * 255.0 / want);
    worst_mse = std::max(worst_mse, std::abs(mse(a, b) - want) / want);
    worst_psnr = std::max(worst_psnr, std::abs(psnr(a, b) - want_psnr) / want_psnr);
  }
  o.check(worst_mse <= 1e-9, fmt("MSE relative error %.3g", worst_mse));
  o.check(worst_psnr <= 1e-9, fmt("PSNR relative error %.3g", worst_psnr));
  o.check(psnr_from_mse(65025.0) == 0.0, "PSNR(65025) is not exactly 0");
  o.check(psnr(ImageBuffer(4, 4, 0), ImageBuffer(4, 4, 255)) == 0.0, "PSNR(black, white) is not exactly 0");

  Rng rng(31);
  std::size_t run_mismatch = 0;
  for (int t = 0; t < 100; ++t) {
    Tokens a, b;
    for (int i = 0; i < 200; ++i) a.push_back("v" + std::to_string(rng.below(6)));
    for (int i = 0; i < 200; ++i) b.push_back("v" + std::to_string(rng.below(6)));
    if (longest_consecutive_overlap(a, b) != brute_run(a, b)) ++run_mismatch;
  }
  o.check(run_mismatch == 0, fmt("%zu longest-run mismatches", run_mismatch));

  // Hand-computed fixtures.
  const std::string ref = "a b c d e f a b c x y z", cand = "a b c d q f a b x y z w";
  const double bleu_want =
      std::exp((std::log(10.0 / 12) + std::log(7.0 / 11) + std::log(4.0 / 10) + std::log(1.0 / 9)) / 4.0);
  const double smooth_want =
      std::exp((std::log(4.0 / 5) + std::log(2.0 / 4) + std::log(1.0 / 3) + std::log(1.0 / 3)) / 4.0);
  const std::vector<std::tuple<const char*, double, double>> fixtures = {
      {"ROUGE-L 4/7", rouge_l("a b c d", "a x c"), 4.0 / 7.0},
      {"ROUGE-L 10/12", rouge_l(ref, cand), 10.0 / 12.0},
      {"BLEU-4 table", bleu4(ref, cand), bleu_want},
      {"BLEU-4 brevity", bleu4("one two three four five six", "one two three four"), std::exp(1.0 - 6.0 / 4.0)},
      {"BLEU-4 smoothing", bleu4("a b c d e", "a b c x e"), smooth_want},
  };
  for (const auto& [name, got, want] : fixtures)
    o.check(std::abs(got - want) <= 1e-9, fmt("%s: %.12f vs %.12f", name, got, want));
  o.note(fmt("mse rel %.2g, psnr rel %.2g, run mismatches %zu, %zu text fixtures", worst_mse, worst_psnr,
             run_mismatch, fixtures.size()));
  return o;
}

// ------------------------------------------------------------------ AC3

Outcome ac3_sift() {
  Outcome o;
  const auto tex = synthetic_texture(128, 128, 7);
  const double self = sift_match_score(tex, tex);
  o.check(self >= 0.9, fmt("self-match %.3f < 0.9", self));
  double worst = 0;
  for (std::uint64_t s = 0; s < 100; ++s) worst = std::max(worst, sift_match_score(tex, noise_image(128, 128, 9000 + s)));
  o.check(worst < 0.05, fmt("noise score %.3f >= 0.05", worst));
  const ImageBuffer flat(128, 128, 128);
  const double f1 = sift_match_score(flat, tex), f2 = sift_match_score(tex, flat), f3 = sift_match_score(flat, flat);
  o.check(f1 == 0.0 && f2 == 0.0 && f3 == 0.0, "flat image score is not exactly 0");
  o.note(fmt("self %.3f (%zu keypoints), worst noise %.3f, flat %.1f", self, detect_sift(tex).keypoints.size(),
             worst, std::max({f1, f2, f3})));
  return o;
}

// ------------------------------------------------------------------ AC4

AudioBuffer tone(double hz, double seconds) {
  AudioBuffer a;
  a.samples.resize(static_cast<std::size_t>(seconds * 16000));
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    a.samples[i] = 0.5 * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / 16000.0);
  return a;
}

Outcome ac4_audio_features() {
  Outcome o;
  AudioBuffer chirp;
  chirp.samples = reference::chirp_fixture();
  const auto got = mfcc(chirp);
  const auto want = reference::naive_mfcc(chirp.samples);
  double worst = 0;
  if (got.frames != want.frames) {
    o.check(false, fmt("frame count %zu vs %zu", got.frames, want.frames));
  } else {
    for (std::size_t t = 0; t < got.frames; ++t)
      for (std::size_t c = 0; c < 13; ++c) worst = std::max(worst, std::abs(got.at(t, c) - want.rows[t][c]));
    o.check(worst <= 1e-6, fmt("MFCC cell error %.3g", worst));
  }

  const auto ch = chroma(tone(440.0, 1.0));
  double least = 1.0;
  for (std::size_t t = 0; t < ch.frames; ++t) {
    double total = 0;
    for (std::size_t j = 0; j < 12; ++j) total += ch.at(t, j);
    least = std::min(least, total > 0 ? ch.at(t, 9) / total : 0.0);
  }
  o.check(least >= 0.8, fmt("A share %.3f < 0.8", least));

  Rng rng(44);
  double self_worst = 0;
  for (int i = 0; i < 50; ++i) {
    FeatureMatrix m;
    m.frames = 20 + rng.below(300);
    m.dim = 13;
    for (std::size_t j = 0; j < m.frames * m.dim; ++j) m.values.push_back(rng.normal());
    self_worst = std::max(self_worst, sliding_min_distance(m, m));
  }
  o.check(self_worst == 0.0, fmt("self distance %.3g", self_worst));

  // 0.5 s of silence = 50 frames at a 10 ms hop.
  Rng nr(8);
  AudioBuffer clip;
  double phase = 0;
  for (std::size_t i = 0; i < 48000; ++i) {
    const double t = static_cast<double>(i) / 16000.0;
    phase += 2.0 * std::numbers::pi * (200.0 + 1500.0 * t) / 16000.0;
    clip.samples.push_back(0.4 * std::sin(phase) * (0.6 + 0.4 * std::sin(7.0 * t)) + 0.05 * nr.normal());
  }
  AudioBuffer shifted;
  shifted.samples.assign(8000, 0.0);
  shifted.samples.insert(shifted.samples.end(), clip.samples.begin(), clip.samples.end());
  std::string detail;
  for (auto kind : {FeatureKind::mfcc, FeatureKind::chroma}) {
    const auto r = sliding_window_match(extract(kind, clip), extract(kind, shifted));
    const long long shift = static_cast<long long>(r.cand_offset) - static_cast<long long>(r.ref_offset);
    o.check(r.distance < 0.05, fmt("%s prefixed distance %.4f", std::string(to_string(kind)).c_str(), r.distance));
    o.check(shift == 50, fmt("%s offset %lld != 50", std::string(to_string(kind)).c_str(), shift));
    detail += fmt(", %s prefix d=%.2g shift=%lld", std::string(to_string(kind)).c_str(), r.distance, shift);
  }
  o.note(fmt("mfcc max err %.2g, A share >= %.3f, self max %.1g", worst, least, self_worst) + detail);
  return o;
}

// ----------------------------------------------------------- campaigns

std::shared_ptr<const Corpus> audio_corpus(std::size_t entries, std::size_t speakers, std::uint64_t seed = 0,
                                           const std::string& prefix = "a") {
  SyntheticAudioOptions opt;
  opt.entries = entries;
  opt.speakers = speakers;
  opt.seed = seed;
  opt.id_prefix = prefix;
  return std::make_shared<const Corpus>(synthetic_audio_entries(opt));
}

ExperimentConfig campaign(MockKind kind, std::size_t n_prompts, LeakageMode mode) {
  ExperimentConfig c;
  c.corpus = "synthetic";
  c.target.mock.kind = kind;
  c.n_prompts = n_prompts;
  c.k = 1;
  c.modality = Modality::audio;
  c.mode = mode;
  c.command = mode == LeakageMode::direct ? CommandId{"AQ", 5} : CommandId{"AQ", 1};
  c.seed = 2025;
  return c;
}

RunResult run_on(const ExperimentConfig& c, std::shared_ptr<const Corpus> corpus) {
  Workspace ws(c, corpus);
  return run_experiment(c, ws, make_backends(c, corpus));
}

// ------------------------------------------------------------------ AC5

Outcome ac5_echo() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto corpus = audio_corpus(200, 50);
  const auto ind = run_on(campaign(MockKind::echo, 500, LeakageMode::indirect), corpus);
  const auto& wc = ind.aggregate.metrics.at("words_copied");
  o.check(wc.total == 500, fmt("words_copied total %zu != 500", wc.total));
  o.check(wc.unique == ind.aggregate.retrieval_unique,
          fmt("unique %zu != retrieval_unique %zu", wc.unique, ind.aggregate.retrieval_unique));
  o.check(ind.aggregate.refusals == 0, "echo campaign had refusals");

  const auto dir = run_on(campaign(MockKind::echo, 500, LeakageMode::direct), corpus);
  double worst = 0;
  std::size_t scored = 0;
  for (const auto& r : dir.records)
    for (const auto& v : r.verdicts) {
      if (!v.audio) continue;
      ++scored;
      worst = std::max({worst, v.audio->mfcc_dist, v.audio->chroma_dist});
    }
  o.check(scored == 500, fmt("%zu of 500 direct records scored", scored));
  o.check(worst == 0.0, fmt("largest direct distance %.3g", worst));
  const double secs = seconds_since(t0);
  o.check(secs < 120.0, fmt("runtime %.1f s >= 120 s", secs));
  o.note(fmt("words_copied %zu(%zu), retrieval_unique %zu, direct max distance %.1g over %zu, %.1f s", wc.total,
             wc.unique, ind.aggregate.retrieval_unique, worst, scored, secs));
  return o;
}

// ------------------------------------------------------------------ AC6

Outcome ac6_refusal() {
  Outcome o;
  const auto corpus = audio_corpus(200, 50);
  std::size_t nonzero = 0;
  std::string detail;
  for (auto mode : {LeakageMode::indirect, LeakageMode::direct}) {
    const auto r = run_on(campaign(MockKind::refusal, 500, mode), corpus);
    for (const auto& [m, t] : r.aggregate.metrics)
      if (t.total != 0) ++nonzero;
    o.check(r.aggregate.refusals == 500, fmt("refusals %zu != 500", r.aggregate.refusals));
    detail += fmt("%s refusals %zu; ", std::string(to_string(mode)).c_str(), r.aggregate.refusals);
  }
  o.check(nonzero == 0, fmt("%zu metrics with nonzero totals", nonzero));
  o.note(detail + fmt("nonzero metric totals %zu", nonzero));
  return o;
}

// ------------------------------------------------------------------ AC7

Outcome ac7_paraphrase() {
  Outcome o;
  const auto corpus = audio_corpus(200, 50);
  std::string detail;
  for (double r : {0.1, 0.3, 0.5}) {
    auto c = campaign(MockKind::paraphrase, 500, LeakageMode::indirect);
    c.params.temperature = r;
    const auto run = run_on(c, corpus);
    double sum = 0;
    std::size_t n = 0;
    for (const auto& rec : run.records)
      for (const auto& v : rec.verdicts)
        if (v.text) {
          sum += v.text->words_ratio;
          ++n;
        }
    const double mean = sum / static_cast<double>(n);
    // 20 distinct words per transcript, each kept with probability 1 - r.
    const double sigma = std::sqrt(r * (1.0 - r) / (20.0 * static_cast<double>(n)));
    const double z = (mean - (1.0 - r)) / sigma;
    o.check(n == 500, fmt("r=%.1f: %zu scored prompts", r, n));
    o.check(std::abs(z) <= 3.0, fmt("r=%.1f: mean %.4f is %.2f sigma from %.1f", r, mean, z, 1.0 - r));
    detail += fmt("r=%.1f mean %.4f (z=%+.2f) ", r, mean, z);
  }
  o.note(detail);
  return o;
}

// ------------------------------------------------------------------ AC8

Outcome ac8_ablation() {
  Outcome o;
  const auto corpus = audio_corpus(200, 50);
  const auto base = campaign(MockKind::echo, 200, LeakageMode::indirect);
  const std::vector<std::string> ks = {"1", "2", "3", "4"};
  auto sweep = [&] {
    Workspace ws(base, corpus);
    return ablate(base, "k", ks, ws, make_backends(base, corpus));
  };
  const auto a = sweep();
  std::string series;
  std::size_t seed_mismatch = 0;
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    series += (i ? "," : "") + std::to_string(a.runs[i].aggregate.retrieval_unique);
    if (i > 0) {
      o.check(a.runs[i].aggregate.retrieval_unique >= a.runs[i - 1].aggregate.retrieval_unique,
              "retrieval_unique decreased at k=" + ks[i]);
      for (std::size_t p = 0; p < a.runs[i].records.size(); ++p) {
        const auto& x = a.runs[i].records[p].prompt;
        const auto& y = a.runs[0].records[p].prompt;
        if (!(x == y) || x.rng_seed != derive_seed(base.seed, p)) ++seed_mismatch;
      }
    }
  }
  o.check(seed_mismatch == 0, fmt("%zu prompts differ across sweep values", seed_mismatch));

  const auto root = test::scratch_dir("acceptance_ac8");
  emit_report(a, root / "first");
  emit_report(sweep(), root / "second");
  for (const char* f : {"report.json", "summary.csv", "ablation_k.csv"}) {
    const bool same = read_text_file(root / "first" / f) == read_text_file(root / "second" / f);
    o.check(same, std::string(f) + " differs between reruns");
  }
  o.note("retrieval_unique by k: " + series + fmt("; prompt mismatches %zu; rerun files compared", seed_mismatch));
  return o;
}

// ------------------------------------------------------------------ AC9

Outcome ac9_speaker() {
  Outcome o;
  // Retrieved corpus: 2 clips for each of 50 speakers. Pool: one further
  // clip per speaker, rendered from other seeds under other ids.
  const auto corpus = audio_corpus(100, 50, 0, "a");
  const auto pool = audio_corpus(50, 50, 1, "p");
  auto c = campaign(MockKind::noiser, 100, LeakageMode::direct);
  c.target.mock.audio_sigma = 0.003;
  const auto run = run_on(c, corpus);
  const auto s = speaker_sweep(run, *corpus, *pool, {3, 10, 100});
  o.check(s.records == 100, fmt("%zu of 100 trials produced audio", s.records));
  const std::size_t top3 = s.counts[0];
  o.check(top3 * 100 >= 90 * std::max<std::size_t>(s.records, 100), fmt("top-3 %zu < 90%%", top3));
  o.check(s.counts[0] <= s.counts[1] && s.counts[1] <= s.counts[2], "counts not monotone in top-k");
  o.note(fmt("top-3 %zu, top-10 %zu, top-100 %zu of %zu trials (sigma 0.003)", s.counts[0], s.counts[1],
             s.counts[2], s.records));
  return o;
}

// ----------------------------------------------------------------- AC10

GenerateRequest fuzz_request(Rng& rng, const Corpus& corpus) {
  static const std::vector<std::string> words = {"copy",  "the",   "retrieved", "audio", "café",  "naïve",
                                                 "猫",    "données", "7.48",      "x-ray", "\"q\"", "line\nbreak"};
  GenerateRequest req;
  const std::size_t n_words = rng.below(30);
  for (std::size_t i = 0; i < n_words; ++i) req.text += (i ? " " : "") + words[rng.below(words.size())];
  const std::size_t n_payloads = rng.below(3);
  for (std::size_t i = 0; i < n_payloads; ++i) {
    Payload p;
    const bool from_corpus = rng.below(2) == 0;
    p.modality = rng.below(2) == 0 ? Modality::image : Modality::audio;
    if (from_corpus) {
      const auto& e = corpus.entries()[rng.below(corpus.size())];
      p.entry_id = e.id;
      if (e.image) p.modality = Modality::image, p.image = e.image;
      else p.modality = Modality::audio, p.audio = e.audio;
    } else if (p.modality == Modality::image) {
      p.image = std::make_shared<const ImageBuffer>(
          noise_image(4 + static_cast<int>(rng.below(30)), 4 + static_cast<int>(rng.below(30)), rng.next()));
    } else {
      AudioBuffer a;
      a.samples.resize(400 + rng.below(8000));
      for (auto& s : a.samples) s = std::clamp(0.3 * rng.normal(), -1.0, 1.0);
      p.audio = std::make_shared<const AudioBuffer>(quantize_pcm16(std::move(a)));
    }
    req.payloads.push_back(std::move(p));
  }
  req.params.temperature = std::round(rng.uniform() * 1000.0) / 1000.0 * (rng.below(4) == 0 ? 0.0 : 1.0);
  if (rng.below(2)) req.params.cfg = 1.0 + 3.0 * rng.uniform();
  const Modality outs[] = {Modality::text, Modality::image, Modality::audio};
  req.params.output_modality = outs[rng.below(3)];
  req.params.max_output_tokens = 1 + static_cast<int>(rng.below(4096));
  return req;
}

Outcome ac10_wire() {
  Outcome o;
  auto entries = synthetic_audio_entries([] {
    SyntheticAudioOptions a;
    a.entries = 10;
    a.speakers = 5;
    a.seconds = 0.6;
    return a;
  }());
  SyntheticImageOptions io;
  io.entries = 10;
  io.width = 24;
  io.height = 24;
  for (auto& e : synthetic_image_entries(io)) entries.push_back(std::move(e));
  const auto corpus = std::make_shared<const Corpus>(std::move(entries));
  const auto embedder = std::make_shared<MockEmbedder>(32);

  Rng rng(424242);
  std::size_t differ = 0, compared = 0;
  HttpClientOptions opts;
  opts.rate_limit = 0;
  for (auto kind : {MockKind::echo, MockKind::paraphrase, MockKind::noiser, MockKind::refusal}) {
    const MockTargetConfig mc{kind, 17, 4.0, 0.01};
    auto local = std::make_shared<MockTarget>(mc, corpus);
    MockServer server(std::make_shared<MockTarget>(mc, corpus), embedder);
    server.start();
    HttpTarget remote({server.url(), ""}, opts);
    for (int i = 0; i < 25; ++i) {
      const auto req = fuzz_request(rng, *corpus);
      ++compared;
      try {
        if (!local->call(req).same_content(remote.call(req))) ++differ;
      } catch (const std::exception&) {
        ++differ;
      }
    }
    server.stop();
  }
  o.check(compared == 100 && differ == 0, fmt("%zu of %zu fuzzed requests differ", differ, compared));

  MockServer failing(std::make_shared<MockTarget>(MockTargetConfig{}, corpus), embedder);
  failing.start();
  failing.set_always_fail(true);
  HttpTarget target({failing.url(), ""}, opts);
  std::vector<std::chrono::milliseconds> waits;
  RetryPolicy policy{5, std::chrono::milliseconds(2000), [&](std::chrono::milliseconds d) { waits.push_back(d); }};
  bool exhausted = false;
  try {
    invoke_with_retry([&] { return target.call(fuzz_request(rng, *corpus)); }, policy);
  } catch (const Error& e) {
    exhausted = e.kind() == ErrorKind::exhausted;
  }
  const std::size_t requests = failing.request_count();
  failing.stop();
  o.check(exhausted, "permanent failure did not end in exhaustion");
  o.check(requests == 5, fmt("server saw %zu attempts, want 5", requests));
  o.check(waits == std::vector<std::chrono::milliseconds>(4, std::chrono::milliseconds(2000)),
          fmt("%zu waits recorded, want 4 x 2000 ms", waits.size()));
  o.note(fmt("%zu/%zu fuzzed responses identical; %zu attempts, %zu waits of 2000 ms", compared - differ, compared,
             requests, waits.size()));
  return o;
}

}  // namespace

int main() {
  const std::vector<std::tuple<const char*, const char*, std::function<Outcome()>>> criteria = {
      {"AC1", "retrieval oracle", ac1_retrieval_oracle},
      {"AC2", "metric oracles", ac2_metric_oracles},
      {"AC3", "SIFT separation", ac3_sift},
      {"AC4", "audio features", ac4_audio_features},
      {"AC5", "echo campaign", ac5_echo},
      {"AC6", "refusal campaign", ac6_refusal},
      {"AC7", "paraphrase calibration", ac7_paraphrase},
      {"AC8", "ablation invariants", ac8_ablation},
      {"AC9", "speaker re-identification", ac9_speaker},
      {"AC10", "wire contract", ac10_wire},
  };
  int failed = 0;
  for (const auto& [id, name, fn] : criteria) {
    Outcome out;
    try {
      out = fn();
    } catch (const std::exception& e) {
      out.pass = false;
      out.notes.push_back(std::string("threw: ") + e.what());
    }
    std::string line = std::string(id) + (out.pass ? " PASS " : " FAIL ") + name;
    for (std::size_t i = 0; i < out.notes.size(); ++i) line += (i ? "; " : " | ") + out.notes[i];
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failed;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
