#include <gtest/gtest.h>
#include <png.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "leakprobe/corpus.hpp"
#include "leakprobe/error.hpp"
#include "leakprobe/util.hpp"
#include "test_support.hpp"

using namespace leakprobe;

namespace {

std::vector<std::uint8_t> gray_png(int w, int h, std::uint8_t v) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = w;
  img.height = h;
  img.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(w) * h, v);
  png_alloc_size_t size = 0;
  png_image_write_to_memory(&img, nullptr, &size, 0, pixels.data(), 0, nullptr);
  std::vector<std::uint8_t> out(size);
  EXPECT_TRUE(png_image_write_to_memory(&img, out.data(), &size, 0, pixels.data(), 0, nullptr));
  out.resize(size);
  return out;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorKind::validation;
}

}  // namespace

TEST(Manifest, LoadsMixedEntries) {
  const auto dir = test::scratch_dir("corpus_mixed");
  ImageBuffer img(4, 3, 10);
  write_file(dir / "a.png", encode_png(img));
  AudioBuffer audio;
  audio.samples.assign(1600, 0.25);
  write_file(dir / "b.wav", encode_wav(audio));
  write_file(dir / "m.json", std::string_view(R"([
    {"id": "e1", "text": "caption one", "image": "a.png"},
    {"id": "e2", "audio": "b.wav", "speaker_id": "s1"}
  ])"));
  const auto corpus = load_manifest(dir / "m.json");
  ASSERT_EQ(corpus.size(), 2u);
  EXPECT_EQ(corpus.entries()[0].id, "e1");
  EXPECT_EQ(*corpus.at("e1").image, img);
  EXPECT_EQ(corpus.at("e1").text, "caption one");
  EXPECT_EQ(corpus.at("e2").audio->samples.size(), 1600u);
  EXPECT_DOUBLE_EQ(corpus.at("e2").audio->samples[10], 0.25);
  EXPECT_EQ(corpus.at("e2").speaker_id, "s1");
  EXPECT_EQ(corpus.find("zz"), nullptr);
}

TEST(Manifest, DuplicateIdNamesTheEntry) {
  const auto dir = test::scratch_dir("corpus_dup");
  write_file(dir / "m.json", std::string_view(R"([{"id":"e1","text":"a"},{"id":"e1","text":"b"}])"));
  try {
    load_manifest(dir / "m.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::duplicate_id);
    EXPECT_EQ(e.subject(), "e1");
  }
}

TEST(Manifest, MissingPayload) {
  const auto dir = test::scratch_dir("corpus_missing");
  write_file(dir / "m.json", std::string_view(R"([{"id":"e1","image":"img/x.png"}])"));
  EXPECT_EQ(kind_of([&] { load_manifest(dir / "m.json"); }), ErrorKind::missing_payload);
}

TEST(Manifest, InvariantViolations) {
  const auto dir = test::scratch_dir("corpus_bad");
  write_file(dir / "empty.json", std::string_view(R"([{"id":"e1"}])"));
  EXPECT_EQ(kind_of([&] { load_manifest(dir / "empty.json"); }), ErrorKind::manifest);
  write_file(dir / "spk.json", std::string_view(R"([{"id":"e1","text":"t","speaker_id":"s"}])"));
  EXPECT_EQ(kind_of([&] { load_manifest(dir / "spk.json"); }), ErrorKind::manifest);
  write_file(dir / "obj.json", std::string_view(R"({"id":"e1"})"));
  EXPECT_EQ(kind_of([&] { load_manifest(dir / "obj.json"); }), ErrorKind::manifest);
  write_file(dir / "bad.json", std::string_view("[{"));
  EXPECT_EQ(kind_of([&] { load_manifest(dir / "bad.json"); }), ErrorKind::manifest);
  EXPECT_EQ(kind_of([&] { load_manifest(dir / "none.json"); }), ErrorKind::io);
}

TEST(Manifest, WriteThenLoadRoundTrips) {
  const auto dir = test::scratch_dir("corpus_roundtrip");
  CorpusEntry a;
  a.id = "x";
  a.text = "hello";
  ImageBuffer img(5, 2);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<std::uint8_t>(i * 7);
  a.image = std::make_shared<const ImageBuffer>(img);
  CorpusEntry b;
  b.id = "y";
  AudioBuffer au;
  for (int i = 0; i < 800; ++i) au.samples.push_back(std::sin(i * 0.01) * 0.5);
  au = quantize_pcm16(au);
  b.audio = std::make_shared<const AudioBuffer>(au);
  b.speaker_id = "s";
  write_manifest(dir / "m.json", {a, b});
  const auto c = load_manifest(dir / "m.json");
  EXPECT_EQ(*c.at("x").image, img);
  EXPECT_EQ(*c.at("y").audio, au);
}

TEST(Png, OnePixelWhite) {
  const auto img = decode_image(encode_png(ImageBuffer(1, 1, 255)));
  EXPECT_EQ(img.width, 1);
  EXPECT_EQ(img.data, (std::vector<std::uint8_t>{255, 255, 255}));
}

TEST(Png, GrayscaleExpandsToRgb) {
  const auto img = decode_image(gray_png(2, 2, 128));
  ASSERT_EQ(img.width, 2);
  ASSERT_EQ(img.height, 2);
  ASSERT_EQ(img.data.size(), 12u);
  for (auto v : img.data) EXPECT_EQ(v, 128);
}

TEST(Png, TruncatedIsDecodeError) {
  auto bytes = encode_png(ImageBuffer(8, 8, 40));
  bytes.resize(bytes.size() / 2);
  EXPECT_EQ(kind_of([&] { decode_image(bytes); }), ErrorKind::decode);
  EXPECT_EQ(kind_of([&] { decode_image(std::vector<std::uint8_t>{1, 2, 3}); }), ErrorKind::decode);
}

TEST(Wav, SilenceAtAnalysisRate) {
  AudioBuffer z;
  z.samples.assign(16000, 0.0);
  const auto a = decode_audio(encode_wav(z));
  EXPECT_EQ(a.sample_rate, 16000);
  ASSERT_EQ(a.samples.size(), 16000u);
  for (double s : a.samples) EXPECT_EQ(s, 0.0);
}

TEST(Wav, StereoIsAveraged) {
  std::vector<double> inter;
  for (int i = 0; i < 1000; ++i) {
    inter.push_back(0.5);
    inter.push_back(-0.5);
  }
  const auto a = decode_audio(encode_wav(inter, 2, 16000));
  ASSERT_EQ(a.samples.size(), 1000u);
  for (double s : a.samples) EXPECT_EQ(s, 0.0);
}

TEST(Wav, EightKilohertzSineResampledAgainstAnalyticSignal) {
  // The independent reference is the continuous 100 Hz sine itself.
  std::vector<double> src(8000);
  for (int i = 0; i < 8000; ++i) src[i] = 0.8 * std::sin(2.0 * std::numbers::pi * 100.0 * i / 8000.0);
  const auto a = decode_audio(encode_wav(src, 1, 8000));
  EXPECT_EQ(a.sample_rate, 16000);
  ASSERT_EQ(a.samples.size(), 16000u);
  double worst = 0.0;
  for (std::size_t i = 0; i + 2 < a.samples.size(); ++i) {
    const double expect = 0.8 * std::sin(2.0 * std::numbers::pi * 100.0 * static_cast<double>(i) / 16000.0);
    worst = std::max(worst, std::abs(a.samples[i] - expect));
  }
  EXPECT_LT(worst, 0.02);
}

TEST(Wav, RejectsGarbageAndUnsupported) {
  EXPECT_EQ(kind_of([&] { decode_audio(std::vector<std::uint8_t>(10, 0)); }), ErrorKind::decode);
  auto bytes = encode_wav(std::vector<double>(100, 0.1), 1, 16000);
  bytes[34] = 8;  // bits per sample
  EXPECT_EQ(kind_of([&] { decode_audio(bytes); }), ErrorKind::decode);
}

TEST(Pcm16, QuantizationIsIdempotentAndClamped) {
  AudioBuffer a;
  a.samples = {0.123456, -0.99999, 1.5, -2.0};
  const auto q = quantize_pcm16(a);
  EXPECT_EQ(quantize_pcm16(q), q);
  EXPECT_LE(q.samples[2], 1.0);
  EXPECT_GE(q.samples[3], -1.0);
  EXPECT_NEAR(q.samples[0], 0.123456, 1.0 / 32768);
}
