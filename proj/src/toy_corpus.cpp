#include "edgespeech/toy_corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "edgespeech/error.hpp"

namespace edgespeech::dataset {

namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t sample_count(double seconds, int rate) {
  if (seconds <= 0.0 || rate <= 0) fail(ErrorCode::InvalidConfig, "toy clips need positive duration and rate");
  return static_cast<std::size_t>(std::llround(seconds * rate));
}

void normalize_peak(std::vector<double>& x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m > 0.0) {
    for (double& v : x) v *= peak / m;
  }
}

void normalize_rms(std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  if (e > 0.0) {
    const double g = 1.0 / std::sqrt(e / static_cast<double>(x.size()));
    for (double& v : x) v *= g;
  }
}

AudioClip to_clip(const std::vector<double>& x, int rate) {
  AudioClip clip;
  clip.sample_rate_hz = rate;
  clip.samples.assign(x.begin(), x.end());
  return clip;
}

}  // namespace

AudioClip speech_like(std::uint64_t seed, double seconds, int sample_rate_hz) {
  const std::size_t n = sample_count(seconds, sample_rate_hz);
  const double sr = sample_rate_hz;
  std::mt19937_64 rng(seed);
  std::vector<double> out(n, 0.0);

  std::size_t t = 0;
  while (t < n) {
    auto gap = static_cast<std::size_t>(uniform(rng, 0.04, 0.25) * sr);
    if (uniform(rng, 0.0, 1.0) < 0.15) gap += static_cast<std::size_t>(uniform(rng, 0.2, 0.5) * sr);
    t += gap;
    const auto dur = static_cast<std::size_t>(uniform(rng, 0.12, 0.32) * sr);
    if (t + dur >= n) break;

    const double f0_start = uniform(rng, 100.0, 220.0);
    const double f0_end = f0_start * uniform(rng, 0.8, 1.2);
    const double formant1 = uniform(rng, 300.0, 900.0);
    const double formant2 = uniform(rng, 1000.0, 2500.0);
    const double level = std::pow(10.0, -uniform(rng, 0.0, 20.0) / 20.0);

    std::vector<double> harmonic_amp;
    std::vector<double> harmonic_phase;
    for (int h = 1; h * f0_start <= std::min(4000.0, 0.45 * sr); ++h) {
      const double fh = h * f0_start;
      const double d1 = (fh - formant1) / 150.0;
      const double d2 = (fh - formant2) / 200.0;
      harmonic_amp.push_back((std::exp(-d1 * d1) + 0.6 * std::exp(-d2 * d2) + 0.05) / std::sqrt(h));
      harmonic_phase.push_back(uniform(rng, 0.0, kTwoPi));
    }

    const std::size_t ramp = static_cast<std::size_t>(0.02 * sr);
    double phase = 0.0;
    for (std::size_t i = 0; i < dur; ++i) {
      const double frac = static_cast<double>(i) / static_cast<double>(dur - 1);
      phase += kTwoPi * (f0_start + (f0_end - f0_start) * frac) / sr;
      double env = 1.0;
      if (i < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / ramp);
      if (dur - 1 - i < ramp) {
        env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(dur - 1 - i) / ramp);
      }
      double s = 0.0;
      for (std::size_t h = 0; h < harmonic_amp.size(); ++h) {
        s += harmonic_amp[h] * std::sin(static_cast<double>(h + 1) * phase + harmonic_phase[h]);
      }
      out[t + i] += level * env * s;
    }
    t += dur;
  }
  normalize_peak(out, 0.5);
  return to_clip(out, sample_rate_hz);
}

AudioClip hum_noise(std::uint64_t seed, double seconds, int sample_rate_hz) {
  static constexpr std::array<double, 6> kHumHz = {170.0, 410.0, 730.0, 1250.0, 2150.0, 3300.0};
  const std::size_t n = sample_count(seconds, sample_rate_hz);
  const double sr = sample_rate_hz;
  std::mt19937_64 rng(seed);
  std::vector<double> tones(n, 0.0);
  for (double f : kHumHz) {
    if (f >= 0.5 * sr) continue;
    std::array<double, 3> depth{}, rate{}, offset{};
    for (int k = 0; k < 3; ++k) {
      depth[k] = 0.6 * uniform(rng, 0.3, 1.0);
      rate[k] = uniform(rng, 0.5, 4.0);
      offset[k] = uniform(rng, 0.0, kTwoPi);
    }
    const double amp = uniform(rng, 0.5, 1.0);
    const double phase = uniform(rng, 0.0, kTwoPi);
    for (std::size_t i = 0; i < n; ++i) {
      const double time = static_cast<double>(i) / sr;
      double am = 1.0;
      for (int k = 0; k < 3; ++k) am += depth[k] * std::sin(kTwoPi * rate[k] * time + offset[k]);
      tones[i] += amp * std::max(am, 0.05) * std::sin(kTwoPi * f * time + phase);
    }
  }
  normalize_rms(tones);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> floor(n);
  for (auto& v : floor) v = gauss(rng);
  normalize_rms(floor);
  const double floor_gain = std::pow(10.0, -15.0 / 20.0);
  for (std::size_t i = 0; i < n; ++i) tones[i] += floor_gain * floor[i];
  normalize_rms(tones);
  return to_clip(tones, sample_rate_hz);
}

AudioClip white_noise(std::uint64_t seed, double seconds, int sample_rate_hz) {
  const std::size_t n = sample_count(seconds, sample_rate_hz);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> x(n);
  for (auto& v : x) v = gauss(rng);
  normalize_rms(x);
  return to_clip(x, sample_rate_hz);
}

void write_toy_corpus(const fs::path& out_dir, int clean_clips, int noise_clips, double seconds,
                      std::uint64_t seed, int sample_rate_hz) {
  if (clean_clips < 1 || noise_clips < 1) fail(ErrorCode::InvalidConfig, "toy corpus needs at least one clip of each");
  fs::create_directories(out_dir / "clean");
  fs::create_directories(out_dir / "noise");
  std::seed_seq seq{seed};
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(clean_clips + noise_clips));
  {
    std::vector<std::uint32_t> words(seeds.size() * 2);
    seq.generate(words.begin(), words.end());
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      seeds[i] = (static_cast<std::uint64_t>(words[2 * i]) << 32) | words[2 * i + 1];
    }
  }
  for (int i = 0; i < clean_clips; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "speech-%04d.wav", i);
    write_wav(out_dir / "clean" / name, speech_like(seeds[static_cast<std::size_t>(i)], seconds, sample_rate_hz));
  }
  for (int i = 0; i < noise_clips; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "hum-%04d.wav", i);
    auto noise = hum_noise(seeds[static_cast<std::size_t>(clean_clips + i)], seconds, sample_rate_hz);
    // Unit RMS exceeds the PCM range; the mixer re-solves the gain anyway.
    float peak = 0.0f;
    for (float v : noise.samples) peak = std::max(peak, std::abs(v));
    for (float& v : noise.samples) v *= 0.9f / peak;
    write_wav(out_dir / "noise" / name, noise);
  }
}

}  // namespace edgespeech::dataset
