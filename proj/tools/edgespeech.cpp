#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "edgespeech/audio_io.hpp"
#include "edgespeech/bench.hpp"
#include "edgespeech/checkpoint.hpp"
#include "edgespeech/config.hpp"
#include "edgespeech/dataset.hpp"
#include "edgespeech/error.hpp"
#include "edgespeech/metrics.hpp"
#include "edgespeech/quant.hpp"
#include "edgespeech/toy_corpus.hpp"
#include "edgespeech/train.hpp"

namespace fs = std::filesystem;
using namespace edgespeech;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kInvariant = 3 };

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
}

// Either checkpoint kind, behind one enhancer.
struct LoadedModel {
  std::optional<net::Model> fp32;
  std::optional<quant::QuantizedModel> int8;

  bench::Enhancer enhancer() const {
    return fp32 ? bench::fp32_enhancer(*fp32) : bench::int8_enhancer(*int8);
  }
};

LoadedModel load_any(const fs::path& path) {
  const auto bytes = checkpoint::read_file(path);
  LoadedModel m;
  if (checkpoint::kind(bytes) == "int8") {
    m.int8 = checkpoint::decode_quantized(bytes);
  } else {
    m.fp32 = checkpoint::decode_model(bytes);
  }
  return m;
}

// Resident set size from /proc, where available.
std::optional<long> resident_kib() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmRSS:", 0) == 0) return std::stol(line.substr(6));
  }
  return std::nullopt;
}

struct SynthArgs {
  std::string clean, noise, out;
  double snr_min = 0.0, snr_max = 40.0, segment_seconds = 15.0;
  int levels = 5;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
  const dataset::SnrLadder ladder{a.snr_min, a.snr_max, a.levels};
  const auto corpus = dataset::load_corpus(a.clean, a.noise, a.segment_seconds);
  auto manifest = dataset::build_manifest(corpus, ladder, a.seed);
  manifest.clean_dir = a.clean;
  manifest.noise_dir = a.noise;
  manifest.segment_seconds = a.segment_seconds;
  const fs::path out = a.out;
  fs::create_directories(out);
  dataset::save_manifest(out / "manifest.jsonl", manifest);
  dataset::write_corpus_tree(out, corpus, manifest);
  std::printf("%zu entries -> %s\n", manifest.entries.size(), (out / "manifest.jsonl").c_str());
  return kOk;
}

struct TrainArgs {
  std::string manifest, config, out, init, log;
  std::optional<int> epochs, batch;
  std::optional<double> lr, segment_seconds;
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& a) {
  RunConfig cfg;
  if (!a.config.empty()) cfg = load_run_config(a.config);
  if (a.epochs) cfg.optim.epochs = *a.epochs;
  if (a.batch) cfg.optim.batch_size = *a.batch;
  if (a.lr) cfg.optim.learning_rate = *a.lr;
  if (a.seed) cfg.optim.seed = *a.seed;
  if (a.segment_seconds) cfg.optim.segment_seconds = *a.segment_seconds;
  cfg.optim.validate();
  cfg.loss.validate();

  net::Model model;
  if (!a.init.empty()) {
    model = checkpoint::load_model(a.init);
  } else {
    cfg.model.validate();
    model = net::init_model(cfg.model, cfg.optim.seed);
  }
  const auto pairs = dataset::load_pairs(a.manifest);
  const auto examples = train::make_examples(pairs, cfg.optim.segment_seconds);
  std::printf("%zu examples, %zu parameters\n", examples.size(), model.params.count());

  auto stats = train::train(model, examples, cfg.loss, cfg.optim, [](const train::EpochStats& e) {
    std::printf("epoch %d loss %.6f (%.1f s)\n", e.epoch, e.mean_loss, e.seconds);
    std::fflush(stdout);
  });
  checkpoint::save(a.out, model);
  stats.checkpoint_path = a.out;
  write_text(a.log.empty() ? fs::path(a.out + ".log.csv") : fs::path(a.log), train::training_log_csv(stats));
  return kOk;
}

int run_enhance(const std::string& model_path, const std::string& in, const std::string& out) {
  const auto model = load_any(model_path);
  const AudioClip clip = read_wav(in);
  write_wav(out, bench::enhance_clip(model.enhancer(), clip));
  return kOk;
}

int run_eval(const std::string& model_path, bool noisy, const std::string& manifest, const std::string& out) {
  const auto pairs = dataset::load_pairs(manifest);
  metrics::EvalReport report;
  if (noisy) {
    report = bench::evaluate_pairs(bench::passthrough_enhancer(), pairs);
  } else {
    const auto model = load_any(model_path);
    report = bench::evaluate_pairs(model.enhancer(), pairs);
  }
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  metrics::write_eval_csv(out, report);
  for (const auto& row : report.medians) {
    std::printf("%-8s n=%-4zu STOI %.4f  SI-SNR %.2f dB\n", metrics::condition_label(row.condition_db).c_str(),
                row.count, row.stoi, row.si_snr_db);
  }
  return kOk;
}

int run_quantize(const std::string& in, const std::string& out) {
  const auto model = checkpoint::load_model(in);
  const auto q = quant::quantize_model(model);
  checkpoint::save(out, q);
  const auto f32 = quant::model_footprint(model);
  const auto i8 = quant::model_footprint(q);
  std::printf("parameter bytes %zu -> %zu (conv layers %zu -> %zu)\n", f32.total_bytes(), i8.total_bytes(),
              f32.conv_bytes(), i8.conv_bytes());
  return kOk;
}

int run_bench(const std::string& fp32_path, const std::string& int8_path, const std::string& manifest, int batch,
              int warmup, const std::string& out) {
  const auto fp32 = checkpoint::load_model(fp32_path);
  const auto int8 = checkpoint::load_quantized(int8_path);
  const auto pairs = dataset::load_pairs(manifest);
  std::vector<AudioClip> clips, refs;
  for (const auto& p : pairs) {
    clips.push_back(p.noisy);
    refs.push_back(p.clean);
  }
  const auto report = bench::compare_models(fp32, int8, clips, refs, batch, warmup);
  bench::check_consistency(report);
  fs::create_directories(out);
  write_text(fs::path(out) / "comparison.json", bench::to_json(report).dump(2) + "\n");
  std::printf("fp32 %.2f ms/clip, int8 %.2f ms/clip, speedup %.3fx\n", report.fp32.mean_ms_per_clip,
              report.int8.mean_ms_per_clip, report.speedup);
  std::printf("parameter bytes %zu -> %zu (%.2f%% reduction)\n", report.fp32_bytes, report.int8_bytes,
              report.reduction_percent);
  if (const auto rss = resident_kib()) std::printf("process resident memory (informational): %ld KiB\n", *rss);
  return kOk;
}

int run_report(const std::string& bench_dir, const std::vector<std::string>& evals,
               const std::vector<std::string>& labels, const std::string& out) {
  if (!labels.empty() && labels.size() != evals.size()) {
    throw CLI::ValidationError("--label", "give one label per --eval file");
  }
  std::ifstream in(fs::path(bench_dir) / "comparison.json");
  if (!in) fail(ErrorCode::NotFound, "no comparison.json in " + bench_dir);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CorruptHeader, std::string("comparison.json: ") + e.what());
  }
  const auto comparison = bench::comparison_from_json(j);
  std::vector<bench::LabeledEval> labeled;
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const std::string label = labels.empty() ? fs::path(evals[i]).stem().string() : labels[i];
    labeled.push_back({label, metrics::read_eval_csv(evals[i])});
  }
  bench::emit_report(comparison, labeled, out);
  std::printf("wrote %s/report.md and report.csv\n", out.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech enhancement toolkit: corpus synthesis, training, int8 quantization, evaluation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Mix clean and noise WAV folders over an SNR ladder");
  s->add_option("--clean", synth.clean, "Clean WAV directory")->required()->check(CLI::ExistingDirectory);
  s->add_option("--noise", synth.noise, "Noise WAV directory")->required()->check(CLI::ExistingDirectory);
  s->add_option("--snr-min", synth.snr_min, "Lowest SNR (dB)");
  s->add_option("--snr-max", synth.snr_max, "Highest SNR (dB)");
  s->add_option("--levels", synth.levels, "Ladder levels");
  s->add_option("--seed", synth.seed, "Pairing seed");
  s->add_option("--segment-seconds", synth.segment_seconds, "Clean segment length, 0 keeps files whole");
  s->add_option("--out", synth.out, "Output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the enhancement model on a synthesized corpus");
  t->add_option("--manifest", tr.manifest, "manifest.jsonl")->required()->check(CLI::ExistingFile);
  t->add_option("--config", tr.config, "JSON config")->check(CLI::ExistingFile);
  t->add_option("--epochs", tr.epochs);
  t->add_option("--lr", tr.lr);
  t->add_option("--batch", tr.batch);
  t->add_option("--seed", tr.seed);
  t->add_option("--segment-seconds", tr.segment_seconds, "Cut training clips into pieces of this length");
  t->add_option("--init", tr.init, "Start from this checkpoint")->check(CLI::ExistingFile);
  t->add_option("--log", tr.log, "Training log CSV (default: <out>.log.csv)");
  t->add_option("--out", tr.out, "Output checkpoint")->required();

  std::string model_path, in_path, out_path, manifest_path;
  auto* e = app.add_subcommand("enhance", "Enhance one WAV file");
  e->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  e->add_option("--in", in_path)->required()->check(CLI::ExistingFile);
  e->add_option("--out", out_path)->required();

  bool noisy_baseline = false;
  auto* ev = app.add_subcommand("eval", "Score a model on a manifest (STOI, SI-SNR)");
  auto* ev_model = ev->add_option("--model", model_path)->check(CLI::ExistingFile);
  auto* ev_noisy = ev->add_flag("--noisy", noisy_baseline, "Score the unprocessed noisy input instead");
  ev_model->excludes(ev_noisy);
  ev->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
  ev->add_option("--out", out_path, "Per-clip CSV; medians go to <stem>_medians.csv")->required();

  auto* q = app.add_subcommand("quantize", "Dynamic int8 quantization of a checkpoint");
  q->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  q->add_option("--out", out_path)->required();

  std::string fp32_path, int8_path;
  int batch = 10, warmup = 2;
  auto* b = app.add_subcommand("bench", "Compare fp32 and int8 latency, footprint and STOI");
  b->add_option("--fp32", fp32_path)->required()->check(CLI::ExistingFile);
  b->add_option("--int8", int8_path)->required()->check(CLI::ExistingFile);
  b->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
  b->add_option("--batch", batch);
  b->add_option("--warmup", warmup);
  b->add_option("--out", out_path)->required();

  std::string bench_dir;
  std::vector<std::string> eval_paths, labels;
  auto* r = app.add_subcommand("report", "Markdown and CSV report from bench and eval outputs");
  r->add_option("--bench", bench_dir)->required()->check(CLI::ExistingDirectory);
  r->add_option("--eval", eval_paths, "Eval CSVs, one column each")->check(CLI::ExistingFile);
  r->add_option("--label", labels, "Column labels, in --eval order");
  r->add_option("--out", out_path)->required();

  int clean_clips = 40, noise_clips = 4, rate = 16000;
  double seconds = 15.0;
  std::uint64_t toy_seed = 0;
  auto* toy = app.add_subcommand("toy-corpus", "Write synthetic speech-like and hum-noise WAV folders");
  toy->add_option("--clean-clips", clean_clips);
  toy->add_option("--noise-clips", noise_clips);
  toy->add_option("--seconds", seconds);
  toy->add_option("--rate", rate);
  toy->add_option("--seed", toy_seed);
  toy->add_option("--out", out_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*s) return run_synth(synth);
    if (*t) return run_train(tr);
    if (*e) return run_enhance(model_path, in_path, out_path);
    if (*ev) {
      if (model_path.empty() && !noisy_baseline) throw CLI::RequiredError("--model or --noisy");
      return run_eval(model_path, noisy_baseline, manifest_path, out_path);
    }
    if (*q) return run_quantize(model_path, out_path);
    if (*b) return run_bench(fp32_path, int8_path, manifest_path, batch, warmup, out_path);
    if (*r) return run_report(bench_dir, eval_paths, labels, out_path);
    if (*toy) {
      dataset::write_toy_corpus(out_path, clean_clips, noise_clips, seconds, toy_seed, rate);
      return kOk;
    }
  } catch (const CLI::Error& err) {
    return app.exit(err) == 0 ? kOk : kUsage;
  } catch (const Error& err) {
    std::cerr << "error [" << to_string(err.code()) << "]: " << err.what() << "\n";
    return err.code() == ErrorCode::InvariantViolation ? kInvariant : kData;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error [Io]: " << err.what() << "\n";
    return kData;
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << "\n";
    return kInvariant;
  }
  return kUsage;
}
