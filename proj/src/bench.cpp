#include "edgespeech/bench.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>

#include "edgespeech/error.hpp"

namespace edgespeech::bench {

using nlohmann::json;

namespace {

class SingleThreaded {
 public:
  SingleThreaded() : saved_(omp_get_max_threads()) { omp_set_num_threads(1); }
  ~SingleThreaded() { omp_set_num_threads(saved_); }
  SingleThreaded(const SingleThreaded&) = delete;
  SingleThreaded& operator=(const SingleThreaded&) = delete;

 private:
  int saved_;
};

Tensor as_tensor(const AudioClip& clip) {
  Tensor t({1, clip.samples.size()});
  std::copy(clip.samples.begin(), clip.samples.end(), t.data.begin());
  return t;
}

double mean_of(const LatencyReport& r) {
  return std::accumulate(r.batch_ms.begin(), r.batch_ms.end(), 0.0) / static_cast<double>(r.clip_count);
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string mb(std::size_t bytes) { return fixed2(static_cast<double>(bytes) / 1e6); }

json latency_json(const LatencyReport& r) {
  return {{"mean_ms_per_clip", r.mean_ms_per_clip},
          {"batch_ms", r.batch_ms},
          {"batch_size", r.batch_size},
          {"clip_count", r.clip_count},
          {"warmup", r.warmup}};
}

LatencyReport latency_from_json(const json& j) {
  LatencyReport r;
  r.mean_ms_per_clip = j.at("mean_ms_per_clip").get<double>();
  r.batch_ms = j.at("batch_ms").get<std::vector<double>>();
  r.batch_size = j.at("batch_size").get<int>();
  r.clip_count = j.at("clip_count").get<std::size_t>();
  r.warmup = j.at("warmup").get<int>();
  return r;
}

// Conditions present in any evaluation, highest SNR first.
std::vector<double> conditions_of(const std::vector<LabeledEval>& evals) {
  std::vector<double> out;
  for (const auto& e : evals) {
    for (const auto& row : e.report.medians) {
      if (row.condition_db && std::find(out.begin(), out.end(), *row.condition_db) == out.end()) {
        out.push_back(*row.condition_db);
      }
    }
  }
  std::sort(out.rbegin(), out.rend());
  return out;
}

struct MetricCell {
  std::string name;
  std::vector<std::string> values;  // one per evaluation
};

std::vector<MetricCell> metric_rows(const std::vector<LabeledEval>& evals, std::optional<double> condition) {
  std::vector<MetricCell> rows{{"PESQ", {}}, {"STOI", {}}, {"SI-SNR (dB)", {}}, {"Clips", {}}};
  for (const auto& e : evals) {
    const metrics::MedianRow* row = e.report.find(condition);
    rows[0].values.push_back(row && row->pesq ? fixed2(*row->pesq) : "n/a");
    rows[1].values.push_back(row ? fixed2(row->stoi) : "n/a");
    rows[2].values.push_back(row ? fixed2(row->si_snr_db) : "n/a");
    rows[3].values.push_back(row ? std::to_string(row->count) : "0");
  }
  return rows;
}

std::vector<std::pair<std::string, std::string>> deployment_rows(const ComparisonReport& c) {
  return {
      {"FP32 mean inference time (ms/clip)", fixed2(c.fp32.mean_ms_per_clip)},
      {"INT8 mean inference time (ms/clip)", fixed2(c.int8.mean_ms_per_clip)},
      {"Speedup (FP32 / INT8)", fixed2(c.speedup)},
      {"FP32 parameter footprint (MB)", mb(c.fp32_bytes)},
      {"INT8 parameter footprint (MB)", mb(c.int8_bytes)},
      {"Memory reduction (%)", fixed2(c.reduction_percent)},
      {"Conv/deconv footprint FP32 (MB)", mb(c.fp32_conv_bytes)},
      {"Conv/deconv footprint INT8 (MB)", mb(c.int8_conv_bytes)},
      {"Median STOI FP32", fixed2(c.median_stoi_fp32)},
      {"Median STOI INT8", fixed2(c.median_stoi_int8)},
      {"Median abs STOI delta, FP32 vs INT8", fixed2(c.median_stoi_delta)},
      {"Clips timed", std::to_string(c.fp32.clip_count)},
      {"Batch size", std::to_string(c.fp32.batch_size)},
      {"Warmup batches", std::to_string(c.fp32.warmup)},
      {"Mean clip duration (s)", fixed2(c.mean_clip_seconds)},
  };
}

}  // namespace

Enhancer fp32_enhancer(const net::Model& model) {
  return [&model](const Tensor& x) { return net::model_forward(model, x); };
}

Enhancer int8_enhancer(const quant::QuantizedModel& model) {
  return [&model](const Tensor& x) { return quant::quantized_model_forward(model, x); };
}

AudioClip enhance_clip(const Enhancer& enhancer, const AudioClip& clip) {
  const Tensor y = enhancer(as_tensor(clip));
  AudioClip out;
  out.sample_rate_hz = clip.sample_rate_hz;
  out.samples.assign(y.data.begin(), y.data.end());
  return out;
}

Enhancer passthrough_enhancer() {
  return [](const Tensor& x) { return x; };
}

metrics::EvalReport evaluate_pairs(const Enhancer& enhancer, const std::vector<dataset::Pair>& pairs) {
  std::vector<metrics::EvalRecord> records(pairs.size());
  std::exception_ptr error;
  const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto& p = pairs[static_cast<std::size_t>(i)];
      const AudioClip enhanced = enhance_clip(enhancer, p.noisy);
      auto& r = records[static_cast<std::size_t>(i)];
      r.entry = p.entry;
      r.snr_condition_db = p.snr_db;
      r.stoi = metrics::stoi(p.clean, enhanced);
      r.si_snr_db = metrics::si_snr(enhanced, p.clean);
    } catch (...) {
#pragma omp critical(evaluate_pairs_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return metrics::aggregate_median(std::move(records));
}

double steady_ms() {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

LatencyReport bench_latency(const Enhancer& enhancer, const std::vector<AudioClip>& clips, int batch_size,
                            int warmup, const Clock& clock) {
  if (clips.empty()) fail(ErrorCode::EmptyInput, "no clips to benchmark");
  if (batch_size < 1 || warmup < 0) fail(ErrorCode::InvalidConfig, "batch size must be >= 1 and warmup >= 0");
  SingleThreaded guard;
  std::vector<Tensor> inputs;
  inputs.reserve(clips.size());
  for (const auto& c : clips) inputs.push_back(as_tensor(c));

  const std::size_t batch = static_cast<std::size_t>(batch_size);
  for (int w = 0; w < warmup; ++w) {
    for (std::size_t i = 0; i < std::min(batch, inputs.size()); ++i) (void)enhancer(inputs[i]);
  }

  LatencyReport r;
  r.batch_size = batch_size;
  r.warmup = warmup;
  r.clip_count = inputs.size();
  for (std::size_t first = 0; first < inputs.size(); first += batch) {
    const std::size_t last = std::min(first + batch, inputs.size());
    const double start = clock();
    for (std::size_t i = first; i < last; ++i) (void)enhancer(inputs[i]);
    r.batch_ms.push_back(clock() - start);
  }
  r.mean_ms_per_clip = mean_of(r);
  return r;
}

double speedup_of(double fp32_ms, double int8_ms) { return fp32_ms / int8_ms; }

double reduction_percent_of(std::size_t fp32_bytes, std::size_t int8_bytes) {
  return 100.0 * (static_cast<double>(fp32_bytes) - static_cast<double>(int8_bytes)) /
         static_cast<double>(fp32_bytes);
}

void check_consistency(const ComparisonReport& r) {
  auto bad = [](const std::string& what) { fail(ErrorCode::InvariantViolation, what); };
  if (r.fp32.clip_count == 0 || r.int8.clip_count == 0) bad("latency reports cover no clips");
  if (r.fp32.mean_ms_per_clip != mean_of(r.fp32)) bad("fp32 mean does not equal sum(batch_ms) / clips");
  if (r.int8.mean_ms_per_clip != mean_of(r.int8)) bad("int8 mean does not equal sum(batch_ms) / clips");
  if (r.speedup != speedup_of(r.fp32.mean_ms_per_clip, r.int8.mean_ms_per_clip)) {
    bad("speedup does not equal fp32_ms / int8_ms");
  }
  if (r.reduction_percent != reduction_percent_of(r.fp32_bytes, r.int8_bytes)) {
    bad("reduction does not equal (fp32 - int8) / fp32");
  }
}

ComparisonReport compare(const Enhancer& fp32, const quant::Footprint& fp32_footprint, const Enhancer& int8,
                         const quant::Footprint& int8_footprint, const std::vector<AudioClip>& clips,
                         const std::vector<AudioClip>& clean_refs, int batch_size, int warmup, const Clock& clock) {
  if (clips.size() != clean_refs.size()) {
    fail(ErrorCode::LengthMismatch, std::to_string(clips.size()) + " clips but " +
                                        std::to_string(clean_refs.size()) + " references");
  }
  ComparisonReport r;
  r.fp32 = bench_latency(fp32, clips, batch_size, warmup, clock);
  r.int8 = bench_latency(int8, clips, batch_size, warmup, clock);
  r.speedup = speedup_of(r.fp32.mean_ms_per_clip, r.int8.mean_ms_per_clip);
  r.fp32_bytes = fp32_footprint.total_bytes();
  r.int8_bytes = int8_footprint.total_bytes();
  r.reduction_percent = reduction_percent_of(r.fp32_bytes, r.int8_bytes);
  r.fp32_conv_bytes = fp32_footprint.conv_bytes();
  r.int8_conv_bytes = int8_footprint.conv_bytes();

  std::vector<double> s32(clips.size()), s8(clips.size()), delta(clips.size());
  double seconds = 0.0;
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(clips.size()); ++i) {
    try {
      const auto k = static_cast<std::size_t>(i);
      s32[k] = metrics::stoi(clean_refs[k], enhance_clip(fp32, clips[k]));
      s8[k] = metrics::stoi(clean_refs[k], enhance_clip(int8, clips[k]));
      delta[k] = std::abs(s32[k] - s8[k]);
    } catch (...) {
#pragma omp critical(compare_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  for (const auto& c : clips) seconds += c.duration_seconds();
  r.median_stoi_fp32 = metrics::median(s32);
  r.median_stoi_int8 = metrics::median(s8);
  r.median_stoi_delta = metrics::median(delta);
  r.mean_clip_seconds = seconds / static_cast<double>(clips.size());
  check_consistency(r);
  return r;
}

ComparisonReport compare_models(const net::Model& fp32, const quant::QuantizedModel& int8,
                                const std::vector<AudioClip>& clips, const std::vector<AudioClip>& clean_refs,
                                int batch_size, int warmup, const Clock& clock) {
  if (!(fp32.config == int8.config)) fail(ErrorCode::ArchitectureMismatch, "models use different configs");
  const auto f32 = quant::model_footprint(fp32);
  const auto f8 = quant::model_footprint(int8);
  bool same = f32.entries.size() == f8.entries.size();
  for (std::size_t i = 0; same && i < f32.entries.size(); ++i) {
    same = f32.entries[i].name == f8.entries[i].name && f32.entries[i].elements == f8.entries[i].elements;
  }
  if (!same) fail(ErrorCode::ArchitectureMismatch, "models differ in layer structure");
  return compare(fp32_enhancer(fp32), f32, int8_enhancer(int8), f8, clips, clean_refs, batch_size, warmup, clock);
}

json to_json(const ComparisonReport& r) {
  return {{"fp32", latency_json(r.fp32)},
          {"int8", latency_json(r.int8)},
          {"speedup", r.speedup},
          {"fp32_bytes", r.fp32_bytes},
          {"int8_bytes", r.int8_bytes},
          {"reduction_percent", r.reduction_percent},
          {"fp32_conv_bytes", r.fp32_conv_bytes},
          {"int8_conv_bytes", r.int8_conv_bytes},
          {"median_stoi_fp32", r.median_stoi_fp32},
          {"median_stoi_int8", r.median_stoi_int8},
          {"median_stoi_delta", r.median_stoi_delta},
          {"mean_clip_seconds", r.mean_clip_seconds}};
}

ComparisonReport comparison_from_json(const json& j) {
  ComparisonReport r;
  try {
    r.fp32 = latency_from_json(j.at("fp32"));
    r.int8 = latency_from_json(j.at("int8"));
    r.speedup = j.at("speedup").get<double>();
    r.fp32_bytes = j.at("fp32_bytes").get<std::size_t>();
    r.int8_bytes = j.at("int8_bytes").get<std::size_t>();
    r.reduction_percent = j.at("reduction_percent").get<double>();
    r.fp32_conv_bytes = j.at("fp32_conv_bytes").get<std::size_t>();
    r.int8_conv_bytes = j.at("int8_conv_bytes").get<std::size_t>();
    r.median_stoi_fp32 = j.at("median_stoi_fp32").get<double>();
    r.median_stoi_int8 = j.at("median_stoi_int8").get<double>();
    r.median_stoi_delta = j.at("median_stoi_delta").get<double>();
    r.mean_clip_seconds = j.at("mean_clip_seconds").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptHeader, std::string("comparison record: ") + e.what());
  }
  return r;
}

std::string report_markdown(const ComparisonReport& c, const std::vector<LabeledEval>& evals) {
  std::string md = "# Evaluation report\n\n";
  if (!evals.empty()) {
    std::vector<std::optional<double>> conditions{std::nullopt};
    for (double d : conditions_of(evals)) conditions.emplace_back(d);
    for (const auto& cond : conditions) {
      md += "## Median metrics: " + metrics::condition_label(cond) + "\n\n| Metric |";
      for (const auto& e : evals) md += " " + e.label + " |";
      md += "\n|---|";
      for (std::size_t i = 0; i < evals.size(); ++i) md += "---:|";
      md += "\n";
      for (const auto& row : metric_rows(evals, cond)) {
        md += "| " + row.name + " |";
        for (const auto& v : row.values) md += " " + v + " |";
        md += "\n";
      }
      md += "\n";
    }
    md += "PESQ is not computed here; the column is filled only when an evaluation CSV supplies it.\n\n";
  }
  md += "## Deployment\n\n| Quantity | Value |\n|---|---:|\n";
  for (const auto& [name, value] : deployment_rows(c)) md += "| " + name + " |" + " " + value + " |\n";
  md += "\nTiming is single-threaded wall-clock time per clip, warmup batches excluded. "
        "Footprint counts parameter bytes: 4 per float element, 1 per int8 element plus a 4-byte scale per "
        "int8 tensor. The LSTM stays in floating point.\n\n"
        "Memory reduction is (fp32 - int8) / fp32. Under that formula 9.25 MB -> 6.58 MB is a 28.86% "
        "reduction; a 40.91% figure quoted for the same pair does not follow from it. Neither number is a "
        "target here.\n";
  return md;
}

std::string report_csv(const ComparisonReport& c, const std::vector<LabeledEval>& evals) {
  std::string csv = "table,condition,metric,column,value\n";
  if (!evals.empty()) {
    std::vector<std::optional<double>> conditions{std::nullopt};
    for (double d : conditions_of(evals)) conditions.emplace_back(d);
    for (const auto& cond : conditions) {
      for (const auto& row : metric_rows(evals, cond)) {
        for (std::size_t i = 0; i < evals.size(); ++i) {
          csv += "metrics," + metrics::condition_label(cond) + "," + row.name + "," + evals[i].label + "," +
                 row.values[i] + "\n";
        }
      }
    }
  }
  for (const auto& [name, value] : deployment_rows(c)) csv += "deployment,," + name + ",," + value + "\n";
  return csv;
}

void emit_report(const ComparisonReport& comparison, const std::vector<LabeledEval>& evals,
                 const std::filesystem::path& out_dir) {
  check_consistency(comparison);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) fail(ErrorCode::Io, "cannot write " + p.string());
  };
  write(out_dir / "report.md", report_markdown(comparison, evals));
  write(out_dir / "report.csv", report_csv(comparison, evals));
}

}  // namespace edgespeech::bench
