#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "edgespeech/audio_io.hpp"
#include "edgespeech/dataset.hpp"
#include "edgespeech/metrics.hpp"
#include "edgespeech/net.hpp"
#include "edgespeech/quant.hpp"

namespace edgespeech::bench {

/// Waveform in, waveform out.
using Enhancer = std::function<Tensor(const Tensor&)>;

Enhancer fp32_enhancer(const net::Model& model);
Enhancer int8_enhancer(const quant::QuantizedModel& model);

AudioClip enhance_clip(const Enhancer& enhancer, const AudioClip& clip);

/// Identity enhancer, for scoring the unprocessed noisy input.
Enhancer passthrough_enhancer();

/// STOI and SI-SNR of every enhanced pair against its clean reference,
/// aggregated per SNR condition. Pairs are scored in parallel.
metrics::EvalReport evaluate_pairs(const Enhancer& enhancer, const std::vector<dataset::Pair>& pairs);

/// Milliseconds from an arbitrary origin; replaceable for tests.
using Clock = std::function<double()>;
double steady_ms();

struct LatencyReport {
  double mean_ms_per_clip = 0.0;
  std::vector<double> batch_ms;
  int batch_size = 10;
  std::size_t clip_count = 0;
  int warmup = 2;
};

/// Runs `warmup` untimed batches (the first batch_size clips), then times
/// every batch of the clip list, the last one possibly short. The mean is
/// sum(batch_ms) / clip_count. OpenMP is pinned to one thread while timing.
/// Throws EmptyInput or InvalidConfig.
LatencyReport bench_latency(const Enhancer& enhancer, const std::vector<AudioClip>& clips, int batch_size = 10,
                            int warmup = 2, const Clock& clock = steady_ms);

struct ComparisonReport {
  LatencyReport fp32;
  LatencyReport int8;
  double speedup = 0.0;  // fp32.mean / int8.mean
  std::size_t fp32_bytes = 0;
  std::size_t int8_bytes = 0;
  double reduction_percent = 0.0;  // 100 * (fp32 - int8) / fp32
  std::size_t fp32_conv_bytes = 0;
  std::size_t int8_conv_bytes = 0;
  double median_stoi_fp32 = 0.0;
  double median_stoi_int8 = 0.0;
  double median_stoi_delta = 0.0;  // median over clips of |stoi_fp32 - stoi_int8|
  double mean_clip_seconds = 0.0;
};

double speedup_of(double fp32_ms, double int8_ms);
double reduction_percent_of(std::size_t fp32_bytes, std::size_t int8_bytes);

/// Throws InvariantViolation when speedup or reduction disagree with the raw
/// fields, or the latency means disagree with their batch lists.
void check_consistency(const ComparisonReport& report);

/// Generic comparison of two enhancers with known footprints.
ComparisonReport compare(const Enhancer& fp32, const quant::Footprint& fp32_footprint, const Enhancer& int8,
                         const quant::Footprint& int8_footprint, const std::vector<AudioClip>& clips,
                         const std::vector<AudioClip>& clean_refs, int batch_size = 10, int warmup = 2,
                         const Clock& clock = steady_ms);

/// Throws ArchitectureMismatch when the models differ in config or shapes,
/// LengthMismatch when clips and references do not align.
ComparisonReport compare_models(const net::Model& fp32, const quant::QuantizedModel& int8,
                                const std::vector<AudioClip>& clips, const std::vector<AudioClip>& clean_refs,
                                int batch_size = 10, int warmup = 2, const Clock& clock = steady_ms);

nlohmann::json to_json(const ComparisonReport& report);
ComparisonReport comparison_from_json(const nlohmann::json& j);

struct LabeledEval {
  std::string label;  // column header, e.g. "Base" or "Fine-Tuned"
  metrics::EvalReport report;
};

/// Markdown and CSV text of the report. Metric tables (overall first, then
/// each condition from the highest SNR down) appear only when evaluations
/// are given; the deployment table always does.
std::string report_markdown(const ComparisonReport& comparison, const std::vector<LabeledEval>& evals);
std::string report_csv(const ComparisonReport& comparison, const std::vector<LabeledEval>& evals);

/// Writes report.md and report.csv into out_dir. Throws Io.
void emit_report(const ComparisonReport& comparison, const std::vector<LabeledEval>& evals,
                 const std::filesystem::path& out_dir);

}  // namespace edgespeech::bench
