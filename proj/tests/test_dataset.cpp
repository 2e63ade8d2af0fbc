#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "edgespeech/audio_io.hpp"
#include "edgespeech/dataset.hpp"
#include "edgespeech/dsp.hpp"
#include "edgespeech/error.hpp"
#include "edgespeech/toy_corpus.hpp"
#include "helpers.hpp"

using namespace edgespeech;
using namespace edgespeech::dataset;
using testutil::error_of;

namespace {

AudioClip random_clip(std::size_t n, std::uint64_t seed, float amp = 0.5f, int rate = 16000) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-amp, amp);
  AudioClip c;
  c.sample_rate_hz = rate;
  c.samples.resize(n);
  for (auto& v : c.samples) v = u(rng);
  return c;
}

AudioClip constant_clip(std::size_t n, float v, int rate = 16000) {
  return AudioClip{std::vector<float>(n, v), rate};
}

Corpus random_corpus(std::size_t segments, std::size_t noises, std::size_t len) {
  Corpus c;
  for (std::size_t i = 0; i < segments; ++i) {
    c.add_segment("seg" + std::to_string(i), random_clip(len, 100 + i), i * len);
  }
  for (std::size_t j = 0; j < noises; ++j) {
    c.add_noise("noise" + std::to_string(j), random_clip(len + 37 * j, 900 + j, 0.3f));
  }
  return c;
}

}  // namespace

TEST_CASE("snr ladder") {
  CHECK(snr_ladder({0, 40, 5}) == std::vector<double>{0, 10, 20, 30, 40});
  CHECK(snr_ladder({-5, -5, 3}) == std::vector<double>{-5, -5, -5});
  CHECK(snr_ladder({0, 40, 1}) == std::vector<double>{0});
  const auto thirds = snr_ladder({-10, 5, 4});
  REQUIRE(thirds.size() == 4);
  for (int k = 0; k < 4; ++k) CHECK(thirds[k] == doctest::Approx(-10.0 + 5.0 * k).epsilon(1e-15));
  CHECK(error_of([] { snr_ladder({10, 0, 3}); }) == ErrorCode::InvalidLadder);
  CHECK(error_of([] { snr_ladder({0, 10, 0}); }) == ErrorCode::InvalidLadder);
}

TEST_CASE("mix gain") {
  // energies 4 and 16
  const std::vector<float> clean{1, 1, 1, 1}, noise{2, 2, 2, 2};
  CHECK(mix_gain(clean, noise, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(mix_gain(clean, noise, 20.0) == doctest::Approx(0.05).epsilon(1e-15));
  const std::vector<float> a{1, -1, 0, 2}, b{-2, 0, 1, 1};
  CHECK(mix_gain(a, b, 0.0) == 1.0);
  CHECK(error_of([] { mix_gain(std::vector<float>(4, 0.0f), std::vector<float>(4, 1.0f), 0.0); }) ==
        ErrorCode::SilentSource);
  CHECK(error_of([] { mix_gain(std::vector<float>(4, 1.0f), std::vector<float>(4, 0.0f), 0.0); }) ==
        ErrorCode::SilentSource);
  CHECK(error_of([] { mix_gain(std::vector<float>(3, 1.0f), std::vector<float>(4, 1.0f), 0.0); }) ==
        ErrorCode::LengthMismatch);
}

TEST_CASE("synthesize_noisy hits the requested SNR") {
  const AudioClip clean = random_clip(8000, 1, 0.3f);
  const AudioClip noise = random_clip(5000, 2, 0.8f);
  for (double snr : {-5.0, 0.0, 3.3, 10.0, 27.5, 40.0}) {
    const auto mix = synthesize_noisy(clean, noise, snr, 123);
    CHECK(std::abs(dsp::measure_snr(mix.clean.samples, mix.scaled_noise.samples) - snr) < 1e-6);
    // noisy is the float sum of the two stored components
    for (std::size_t i = 0; i < clean.samples.size(); ++i) {
      CHECK(mix.noisy.samples[i] == mix.clean.samples[i] + mix.scaled_noise.samples[i]);
    }
  }
}

TEST_CASE("mixing is linear in the aligned noise") {
  const AudioClip clean = random_clip(4000, 3, 0.2f);
  const AudioClip noise = random_clip(4000, 4, 0.2f);
  const auto mix = synthesize_noisy(clean, noise, 10.0);
  REQUIRE(mix.rescale_factor == 1.0);
  const double alpha = mix_gain(clean.samples, noise.samples, 10.0);
  CHECK(mix.gain == alpha);
  for (std::size_t i = 0; i < clean.samples.size(); ++i) {
    CHECK(mix.clean.samples[i] == clean.samples[i]);
    CHECK(mix.scaled_noise.samples[i] == static_cast<float>(alpha * noise.samples[i]));
  }

  // equal energies at 0 dB: alpha = 1 and the mixture is the plain sum
  const AudioClip a{{0.5f, -0.25f, 0.0f, 0.25f}, 16000};
  const AudioClip b{{-0.25f, 0.0f, 0.5f, 0.25f}, 16000};
  const auto plain = synthesize_noisy(a, b, 0.0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(plain.noisy.samples[i] == a.samples[i] + b.samples[i]);
}

TEST_CASE("loud mixtures are pulled back into range without changing the SNR") {
  const AudioClip clean = random_clip(4000, 5, 0.9f);
  const AudioClip noise = random_clip(4000, 6, 0.9f);
  const auto mix = synthesize_noisy(clean, noise, 0.0);
  CHECK(mix.rescale_factor < 1.0);
  float peak = 0.0f;
  for (float v : mix.noisy.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak <= 1.0f + 1e-6f);
  CHECK(std::abs(dsp::measure_snr(mix.clean.samples, mix.scaled_noise.samples)) < 1e-6);
}

TEST_CASE("noise alignment tiles short noise and offsets long noise") {
  const std::vector<float> noise{1, 2, 3};
  CHECK(align_noise(noise, 7, 0) == std::vector<float>{1, 2, 3, 1, 2, 3, 1});
  CHECK(align_noise(noise, 2, 1) == std::vector<float>{2, 3});
  CHECK(error_of([] {
          synthesize_noisy(AudioClip{{0.1f}, 16000}, AudioClip{{0.1f}, 8000}, 0.0);
        }) == ErrorCode::RateMismatch);
}

TEST_CASE("merge_segments") {
  const std::vector<AudioClip> two{constant_clip(7 * 16000, 0.1f), constant_clip(8 * 16000, 0.2f)};
  const auto merged = merge_segments(two);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].samples.size() == 240000);
  CHECK(merged[0].samples[7 * 16000 - 1] == 0.1f);
  CHECK(merged[0].samples[7 * 16000] == 0.2f);

  CHECK(merge_segments(std::vector<AudioClip>{constant_clip(30 * 16000, 0.1f)}).size() == 2);
  CHECK(merge_segments(std::vector<AudioClip>{constant_clip(14 * 16000, 0.1f)}).empty());

  // samples are conserved up to the dropped tail
  std::vector<AudioClip> odd;
  std::size_t total = 0;
  for (std::size_t n : {1234u, 5000u, 77u, 9001u}) {
    odd.push_back(random_clip(n, n, 0.5f, 1000));
    total += n;
  }
  const auto cut = merge_segments(odd, 2.5);
  std::size_t kept = 0;
  for (const auto& c : cut) kept += c.samples.size();
  CHECK(kept == total / 2500 * 2500);
  CHECK(cut[1].samples[0] == odd[1].samples[2500 - 1234]);

  const std::vector<AudioClip> mixed{constant_clip(10, 0.1f, 16000), constant_clip(10, 0.1f, 8000)};
  CHECK(error_of([&] { merge_segments(mixed); }) == ErrorCode::RateMismatch);
}

TEST_CASE("build_manifest cycles ladder levels and is deterministic") {
  const auto corpus = random_corpus(2, 3, 4000);
  const auto m = build_manifest(corpus, {0, 10, 2}, 42);
  REQUIRE(m.entries.size() == 2);
  CHECK(m.entries[0].snr_db == 0.0);
  CHECK(m.entries[1].snr_db == 10.0);

  const auto big = random_corpus(100, 5, 400);
  const auto a = build_manifest(big, {0, 40, 5}, 7);
  const auto b = build_manifest(big, {0, 40, 5}, 7);
  CHECK(serialize_manifest(a) == serialize_manifest(b));
  for (std::size_t i = 0; i < a.entries.size(); ++i) CHECK(a.entries[i].snr_db == 10.0 * static_cast<double>(i % 5));

  // Independent oracle: the pairing draw is mt19937_64(seed)() % noise_count,
  // twice per entry (noise index, then the entry seed).
  auto expected_pairing = [&](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < 100; ++i) {
      ids.push_back("noise" + std::to_string(rng() % 5));
      rng();
    }
    return ids;
  };
  const auto c = build_manifest(big, {0, 40, 5}, 8);
  std::size_t differing = 0;
  const auto oracle7 = expected_pairing(7), oracle8 = expected_pairing(8);
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(a.entries[i].noise_id == oracle7[i]);
    CHECK(c.entries[i].noise_id == oracle8[i]);
    differing += a.entries[i].noise_id != c.entries[i].noise_id;
  }
  CHECK(differing >= 1);

  for (const auto& e : a.entries) {
    const auto mix = render_entry(big, e);
    CHECK(std::abs(dsp::measure_snr(mix.clean.samples, mix.scaled_noise.samples) - e.snr_db) < 1e-6);
    CHECK(mix.rescale_factor == e.rescale_factor);
  }
  CHECK(error_of([] { build_manifest(Corpus{}, {0, 40, 5}, 1); }) == ErrorCode::EmptyCorpus);
}

TEST_CASE("manifest serialization round trip") {
  const auto corpus = random_corpus(6, 2, 1000);
  auto m = build_manifest(corpus, {-5, 15, 3}, 99);
  m.clean_dir = "clean dir";
  m.noise_dir = "noise";
  m.segment_seconds = 0.0625;
  const auto text = serialize_manifest(m);
  const auto back = parse_manifest(text);
  CHECK(serialize_manifest(back) == text);
  CHECK(back.entries.size() == 6);
  CHECK(back.ladder.levels == 3);
  CHECK(back.seed == 99);
  CHECK(back.entries[2].snr_db == 15.0);
  CHECK(error_of([] { parse_manifest("not json\n"); }) == ErrorCode::CorruptHeader);
}

TEST_CASE("corpus tree on disk") {
  const auto dir = testutil::scratch_dir("corpus");
  write_toy_corpus(dir / "src", 3, 2, 2.0, 5, 8000);
  const auto m = build_manifest(dir / "src" / "clean", dir / "src" / "noise", {0, 20, 3}, 11, 1.5);
  CHECK(m.entries.size() == 4);  // 6 s of clean audio cut into 1.5 s segments

  const auto corpus = load_corpus(dir / "src" / "clean", dir / "src" / "noise", 1.5);
  save_manifest(dir / "mix" / "manifest.jsonl", m);
  write_corpus_tree(dir / "mix", corpus, m);
  const auto pairs = load_pairs(dir / "mix" / "manifest.jsonl");
  REQUIRE(pairs.size() == 4);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(pairs[i].snr_db == m.entries[i].snr_db);
    CHECK(pairs[i].noisy.samples.size() == 12000);
    CHECK(pairs[i].clean.sample_rate_hz == 8000);
  }
  CHECK(std::filesystem::exists(dir / "mix" / "noise" / (m.entries[0].entry + ".wav")));
  CHECK(error_of([&] { load_corpus(dir / "nowhere", dir / "src" / "noise", 1.5); }) == ErrorCode::NotFound);
  std::filesystem::create_directories(dir / "empty");
  CHECK(error_of([&] { load_corpus(dir / "empty", dir / "src" / "noise", 1.5); }) == ErrorCode::EmptyCorpus);
}

TEST_CASE("toy generators are seeded and normalized") {
  const auto a = speech_like(3, 1.0);
  CHECK(a.samples == speech_like(3, 1.0).samples);
  CHECK(a.samples != speech_like(4, 1.0).samples);
  float peak = 0.0f;
  for (float v : a.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak == doctest::Approx(0.5).epsilon(1e-6));

  for (const auto& n : {hum_noise(1, 2.0), white_noise(1, 2.0)}) {
    const double rms = std::sqrt(dsp::energy(n.samples) / static_cast<double>(n.samples.size()));
    CHECK(rms == doctest::Approx(1.0).epsilon(1e-5));
  }
}
