#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edgespeech/audio_io.hpp"

namespace edgespeech::metrics {

/// Classic STOI constants: 10 kHz analysis, 256-sample Hann frames with 50%
/// overlap zero-padded to 512, 15 third-octave bands from 150 Hz, 30-frame
/// segments, -15 dB lower SDR bound, frames more than 40 dB below the
/// loudest clean frame removed.
struct StoiConfig {
  int sample_rate_hz = 10000;
  std::size_t frame_len = 256;
  std::size_t fft_len = 512;
  int bands = 15;
  double min_freq_hz = 150.0;
  std::size_t segment_frames = 30;
  double beta_db = -15.0;
  double dynamic_range_db = 40.0;
};

/// Third-octave band matrix [bands x (fft_len/2 + 1)] of 0/1 weights.
std::vector<std::vector<double>> third_octave_bands(const StoiConfig& cfg = {});

/// Throws LengthMismatch, RateMismatch or TooShort (fewer than one
/// segment of non-silent frames).
double stoi(const AudioClip& clean, const AudioClip& degraded, const StoiConfig& cfg = {});
double stoi(std::span<const double> clean, std::span<const double> degraded, int sample_rate_hz,
            const StoiConfig& cfg = {});

inline constexpr double kSiSnrCapDb = 60.0;

/// 10 log10(|s|^2 / |e|^2) with s the projection of the estimate on the
/// target and e the residual; limited to [-60, 60] dB. Throws SilentTarget
/// or LengthMismatch.
double si_snr(const AudioClip& estimate, const AudioClip& target);
double si_snr(std::span<const double> estimate, std::span<const double> target);

struct EvalRecord {
  std::string entry;
  double snr_condition_db = 0.0;
  double stoi = 0.0;
  double si_snr_db = 0.0;
  std::optional<double> pesq;  // supplied externally when available
};

struct MedianRow {
  std::optional<double> condition_db;  // empty for the overall row
  std::size_t count = 0;
  double stoi = 0.0;
  double si_snr_db = 0.0;
  std::optional<double> pesq;
};

struct EvalReport {
  std::vector<EvalRecord> records;
  std::vector<MedianRow> medians;  // overall first, then conditions ascending

  const MedianRow* find(std::optional<double> condition_db) const;
};

/// Middle value, or mean of the two middle values for even counts.
/// Throws EmptyInput.
double median(std::vector<double> values);

EvalReport aggregate_median(std::vector<EvalRecord> records);

std::string condition_label(std::optional<double> condition_db);  // "Overall", "40 dB", ...

std::string records_csv(const EvalReport& report);
std::string medians_csv(const EvalReport& report);
std::vector<EvalRecord> parse_records_csv(const std::string& text);

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report);  // also writes <stem>_medians.csv
EvalReport read_eval_csv(const std::filesystem::path& path);

}  // namespace edgespeech::metrics
