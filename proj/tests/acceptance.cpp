// Acceptance gates 1-10. Prints one PASS/FAIL line per criterion and exits
// non-zero when any fails. Every tolerance and budget is pinned below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "edgespeech/bench.hpp"
#include "edgespeech/dataset.hpp"
#include "edgespeech/dsp.hpp"
#include "edgespeech/error.hpp"
#include "edgespeech/metrics.hpp"
#include "edgespeech/net.hpp"
#include "edgespeech/quant.hpp"
#include "edgespeech/toy_corpus.hpp"
#include "edgespeech/train.hpp"

namespace fs = std::filesystem;
using namespace edgespeech;

namespace {

// criterion 1
constexpr int kSnrEntries = 200;
constexpr double kSnrTolDb = 1e-6;
constexpr double kSnrBudgetS = 10.0;
// criterion 2
constexpr int kStftClips = 50;
constexpr double kStftTol = 1e-6;
constexpr double kStftBudgetS = 5.0;
// criterion 3
constexpr double kFullGradTol = 1e-3;
constexpr double kLayerGradTol = 1e-5;
constexpr double kGradBudgetS = 60.0;
// criterion 4
constexpr int kLossPairs = 1000;
// criterion 5
constexpr int kCorpusPairs = 40;
constexpr int kTrainPairs = 30;
constexpr double kPairSeconds = 15.0;
constexpr int kNoiseClips = 4;
constexpr int kEpochs = 20;
constexpr double kLearningRate = 1e-3;
constexpr int kBatch = 8;
constexpr double kSegmentSeconds = 1.0;
constexpr double kStoiGain = 0.05;
constexpr double kLearnBudgetS = 15.0 * 60.0;
// criterion 7
constexpr double kConvShrink = 3.9;
// criterion 8
constexpr int kFidelityInputs = 20;
constexpr double kRelL2Tol = 0.05;
constexpr double kStoiDeltaTol = 0.02;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %2d %-24s %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// Runs a gate, turning an unexpected exception into a failure line.
void gate(int id, const std::string& name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("threw: ") + e.what());
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("edgespeech_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

AudioClip random_clip(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  AudioClip c;
  c.samples.resize(n);
  for (auto& v : c.samples) v = u(rng);
  return c;
}

void snr_exactness() {
  const auto t0 = Clock::now();
  dataset::Corpus corpus;
  for (int i = 0; i < kSnrEntries; ++i) corpus.add_segment("s" + std::to_string(i), random_clip(4000, 10 + i), 0);
  for (int j = 0; j < 5; ++j) corpus.add_noise("n" + std::to_string(j), random_clip(3000 + 700 * j, 900 + j));
  const auto manifest = dataset::build_manifest(corpus, {0.0, 40.0, 5}, 1);
  double worst = 0.0;
  for (const auto& e : manifest.entries) {
    const auto mix = dataset::render_entry(corpus, e);
    worst = std::max(worst, std::abs(dsp::measure_snr(mix.clean.samples, mix.scaled_noise.samples) - e.snr_db));
  }
  const double s = seconds_since(t0);
  const bool ok = manifest.entries.size() == kSnrEntries && worst < kSnrTolDb && s < kSnrBudgetS;
  report(1, "snr-exactness", ok,
         fmt("max |measured - target| = %.2e dB over %zu entries (tol %.0e), %.2f s (budget %.0f s)", worst,
             manifest.entries.size(), kSnrTolDb, s, kSnrBudgetS));
}

void stft_identity() {
  const auto t0 = Clock::now();
  const dsp::StftConfig cfg;
  double worst = 0.0;
  for (int i = 0; i < kStftClips; ++i) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(i) + 1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x(16000);
    for (auto& v : x) v = u(rng);
    const auto y = dsp::istft(dsp::stft(std::span<const double>(x), cfg));
    for (std::size_t n = cfg.frame_len; n + cfg.frame_len < x.size(); ++n) worst = std::max(worst, std::abs(y[n] - x[n]));
  }
  const double s = seconds_since(t0);
  report(2, "stft-identity", worst < kStftTol && s < kStftBudgetS,
         fmt("max interior error %.2e over %d one-second clips (tol %.0e), %.2f s (budget %.0f s)", worst,
             kStftClips, kStftTol, s, kStftBudgetS));
}

void gradient_fidelity() {
  const auto t0 = Clock::now();
  net::ModelConfig cfg;
  cfg.depth = 1;
  cfg.base_channels = 4;
  cfg.kernel_size = 8;
  cfg.stride = 4;
  cfg.lstm_layers = 2;
  cfg.lstm_hidden = 6;
  auto model = net::init_model(cfg, 3);
  const Tensor input({1, 8}, std::vector<double>{0.3, -0.7, 0.1, 0.9, -0.2, 0.5, -0.4, 0.8});
  const Tensor target({1, 8}, std::vector<double>{0.1, -0.3, 0.2, 0.6, -0.1, 0.2, -0.5, 0.4});
  const auto full = train::gradient_check(model, input, target, {});

  double layer_worst = 0.0;
  std::string layer_names;
  for (const auto& [name, fn] : std::vector<std::pair<std::string, std::function<train::GradCheckResult()>>>{
           {"conv", [] { return train::check_conv_gradients(11); }},
           {"deconv", [] { return train::check_deconv_gradients(12); }},
           {"lstm", [] { return train::check_lstm_gradients(13); }},
           {"loss", [] { return train::check_loss_gradients(14); }}}) {
    const auto r = fn();
    layer_worst = std::max(layer_worst, r.max_rel_error);
    layer_names += fmt(" %s %.1e", name.c_str(), r.max_rel_error);
  }
  const double s = seconds_since(t0);
  const bool ok = full.max_rel_error < kFullGradTol && full.remaining_kinks == 0 && layer_worst < kLayerGradTol &&
                  s < kGradBudgetS;
  report(3, "gradient-fidelity", ok,
         fmt("full model %.2e over %zu params (tol %.0e, %zu kink nudges); per layer:%s (tol %.0e); %.2f s",
             full.max_rel_error, full.checked, kFullGradTol, full.nudges, layer_names.c_str(), kLayerGradTol, s));
}

void loss_constants() {
  const train::LossConfig weights{0.5, 0.3, 0.2};
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  bool exact = true;
  double lowest = 1e9;
  for (int i = 0; i < kLossPairs; ++i) {
    Tensor a({1, 64}), b({1, 64});
    for (auto& v : a.data) v = u(rng);
    for (auto& v : b.data) v = u(rng);
    exact = exact && train::complex_loss(a, a, weights) == 0.2;
    lowest = std::min(lowest, train::complex_loss(a, b, weights));
  }
  report(4, "loss-constants", exact && lowest >= 0.2,
         fmt("loss(x, x) == 0.2 exactly: %s; min loss over %d random pairs %.6f", exact ? "yes" : "no", kLossPairs,
             lowest));
}

struct DeskCorpus {
  std::vector<dataset::Pair> pairs;
};

DeskCorpus build_desk_corpus() {
  dataset::Corpus corpus;
  for (int i = 0; i < kCorpusPairs; ++i) {
    corpus.add_segment("speech-" + std::to_string(i), dataset::speech_like(1000 + i, kPairSeconds), 0);
  }
  for (int j = 0; j < kNoiseClips; ++j) {
    corpus.add_noise("hum-" + std::to_string(j), dataset::hum_noise(2000 + j, kPairSeconds));
  }
  const auto manifest = dataset::build_manifest(corpus, {0.0, 40.0, 5}, 17);
  DeskCorpus out;
  for (const auto& e : manifest.entries) {
    const auto mix = dataset::render_entry(corpus, e);
    out.pairs.push_back({e.entry, e.snr_db, mix.noisy, mix.clean});
  }
  return out;
}

std::vector<AudioClip> noisy_of(const std::vector<dataset::Pair>& pairs) {
  std::vector<AudioClip> v;
  for (const auto& p : pairs) v.push_back(p.noisy);
  return v;
}

std::vector<AudioClip> clean_of(const std::vector<dataset::Pair>& pairs) {
  std::vector<AudioClip> v;
  for (const auto& p : pairs) v.push_back(p.clean);
  return v;
}

void desk_learning(const fs::path& artifacts) {
  const auto t0 = Clock::now();
  const auto corpus = build_desk_corpus();

  // 6: ordering of the noisy corpus itself
  gate(6, "ladder-monotonicity", [&] {
    const auto noisy = bench::evaluate_pairs(bench::passthrough_enhancer(), corpus.pairs);
    const auto* hi = noisy.find(40.0);
    const auto* lo = noisy.find(0.0);
    report(6, "ladder-monotonicity", hi && lo && hi->stoi > lo->stoi,
           fmt("median noisy STOI %.4f at 40 dB vs %.4f at 0 dB (%zu clips each)", hi ? hi->stoi : 0.0,
               lo ? lo->stoi : 0.0, hi ? hi->count : 0));
  });

  const std::vector<dataset::Pair> train_pairs(corpus.pairs.begin(), corpus.pairs.begin() + kTrainPairs);
  const std::vector<dataset::Pair> held_out(corpus.pairs.begin() + kTrainPairs, corpus.pairs.end());
  const auto examples = train::make_examples(train_pairs, kSegmentSeconds);

  auto model = net::init_model({}, 5);
  train::OptimConfig optim;
  optim.learning_rate = kLearningRate;
  optim.batch_size = kBatch;
  optim.epochs = kEpochs;
  optim.seed = 5;
  const auto stats = train::train(model, examples, {}, optim, [](const train::EpochStats& e) {
    std::printf("     epoch %2d  mean loss %.6f  (%.1f s)\n", e.epoch, e.mean_loss, e.seconds);
    std::fflush(stdout);
  });

  const auto noisy_eval = bench::evaluate_pairs(bench::passthrough_enhancer(), held_out);
  const auto enhanced_eval = bench::evaluate_pairs(bench::fp32_enhancer(model), held_out);
  const double s = seconds_since(t0);
  const double loss1 = stats.epochs.at(0).mean_loss;
  const double loss10 = stats.epochs.at(9).mean_loss;
  const double noisy_median = noisy_eval.medians.at(0).stoi;
  const double enhanced_median = enhanced_eval.medians.at(0).stoi;
  const bool ok_a = loss10 < loss1;
  const bool ok_b = enhanced_median >= noisy_median + kStoiGain;
  report(5, "desk-learning", ok_a && ok_b && s < kLearnBudgetS,
         fmt("(a) epoch-10 loss %.6f vs epoch-1 %.6f: %s; (b) held-out median STOI enhanced %.4f vs noisy %.4f "
             "+ %.2f: %s; %.0f s (budget %.0f s)",
             loss10, loss1, ok_a ? "ok" : "not lower", enhanced_median, noisy_median, kStoiGain,
             ok_b ? "ok" : "short", s, kLearnBudgetS));
  for (const auto& row : enhanced_eval.medians) {
    const auto* n = noisy_eval.find(row.condition_db);
    std::printf("     %-8s STOI noisy %.4f enhanced %.4f | SI-SNR noisy %6.2f enhanced %6.2f dB\n",
                metrics::condition_label(row.condition_db).c_str(), n->stoi, row.stoi, n->si_snr_db, row.si_snr_db);
  }

  const auto q = quant::quantize_model(model);

  gate(7, "quant-footprint", [&] {
    const auto f32 = quant::model_footprint(model);
    const auto i8 = quant::model_footprint(q);
    const double shrink = static_cast<double>(f32.conv_bytes()) / static_cast<double>(i8.conv_bytes());
    const double reduction = bench::reduction_percent_of(f32.total_bytes(), i8.total_bytes());
    const double by_hand = 100.0 * (static_cast<double>(f32.total_bytes()) - static_cast<double>(i8.total_bytes())) /
                           static_cast<double>(f32.total_bytes());
    report(7, "quant-footprint", shrink >= kConvShrink && reduction == by_hand,
           fmt("conv/deconv bytes %zu -> %zu, factor %.3f (min %.1f); full model %zu -> %zu bytes, reduction "
               "%.2f%%",
               f32.conv_bytes(), i8.conv_bytes(), shrink, kConvShrink, f32.total_bytes(), i8.total_bytes(),
               reduction));
  });

  bench::ComparisonReport comparison;
  gate(8, "quant-fidelity", [&] {
    double worst = 0.0;
    for (int i = 0; i < kFidelityInputs; ++i) {
      std::mt19937_64 rng(static_cast<std::uint64_t>(i) + 300);
      std::uniform_real_distribution<double> u(-0.5, 0.5);
      Tensor x({1, 16000});
      for (auto& v : x.data) v = u(rng);
      worst = std::max(worst, quant::relative_l2(quant::quantized_model_forward(q, x), net::model_forward(model, x)));
    }
    comparison = bench::compare_models(model, q, noisy_of(held_out), clean_of(held_out));
    report(8, "quant-fidelity", worst < kRelL2Tol && comparison.median_stoi_delta <= kStoiDeltaTol,
           fmt("max relative L2 %.4f over %d random inputs (tol %.2f); median |STOI fp32 - int8| %.4f on %zu "
               "held-out clips (tol %.2f)",
               worst, kFidelityInputs, kRelL2Tol, comparison.median_stoi_delta, held_out.size(), kStoiDeltaTol));
  });

  gate(9, "bench-consistency", [&] {
    bench::check_consistency(comparison);
    const bool exact = comparison.speedup == comparison.fp32.mean_ms_per_clip / comparison.int8.mean_ms_per_clip &&
                       comparison.reduction_percent ==
                           bench::reduction_percent_of(comparison.fp32_bytes, comparison.int8_bytes);
    const std::vector<bench::LabeledEval> evals{{"Noisy", noisy_eval}, {"Enhanced", enhanced_eval}};
    const auto a = scratch("report_a");
    const auto b = scratch("report_b");
    bench::emit_report(comparison, evals, a);
    bench::emit_report(comparison, evals, b);
    const bool same = slurp(a / "report.md") == slurp(b / "report.md") &&
                      slurp(a / "report.csv") == slurp(b / "report.csv");
    bench::emit_report(comparison, evals, artifacts);
    report(9, "bench-consistency", exact && same,
           fmt("speedup %.4f = %.3f / %.3f ms, reduction %.4f%% consistent; reports byte-identical: %s",
               comparison.speedup, comparison.fp32.mean_ms_per_clip, comparison.int8.mean_ms_per_clip,
               comparison.reduction_percent, same ? "yes" : "no"));
  });
}

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null").c_str());
  return rc;
}

void determinism() {
  const std::string cli = EDGESPEECH_CLI;
  const auto dir = scratch("determinism");
  bool ok = run(cli + " toy-corpus --out " + (dir / "src").string() +
                " --clean-clips 6 --noise-clips 2 --seconds 3 --seed 9") == 0;
  {
    std::ofstream cfg(dir / "config.json");
    cfg << R"({"model": {"depth": 2, "base_channels": 4, "lstm_layers": 1, "lstm_hidden": 16},
               "optim": {"segment_seconds": 0.5}})";
  }
  for (const char* run_id : {"a", "b"}) {
    const auto out = dir / run_id;
    ok = ok && run(cli + " synth --clean " + (dir / "src" / "clean").string() + " --noise " +
                   (dir / "src" / "noise").string() + " --snr-min 0 --snr-max 40 --levels 5 --seed 21" +
                   " --segment-seconds 3 --out " + (out / "mix").string()) == 0;
    ok = ok && run(cli + " train --manifest " + (out / "mix" / "manifest.jsonl").string() + " --config " +
                   (dir / "config.json").string() + " --epochs 2 --lr 1e-3 --batch 4 --seed 21 --out " +
                   (out / "model.ckpt").string()) == 0;
  }
  const auto manifest_a = slurp(dir / "a" / "mix" / "manifest.jsonl");
  const auto manifest_b = slurp(dir / "b" / "mix" / "manifest.jsonl");
  const auto ckpt_a = slurp(dir / "a" / "model.ckpt");
  const auto ckpt_b = slurp(dir / "b" / "model.ckpt");
  const bool same_manifest = !manifest_a.empty() && manifest_a == manifest_b;
  const bool same_ckpt = !ckpt_a.empty() && ckpt_a == ckpt_b;
  report(10, "determinism", ok && same_manifest && same_ckpt,
         fmt("CLI runs ok: %s; manifests identical: %s (%zu bytes); checkpoints identical: %s (%zu bytes)",
             ok ? "yes" : "no", same_manifest ? "yes" : "no", manifest_a.size(), same_ckpt ? "yes" : "no",
             ckpt_a.size()));
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path artifacts = argc > 1 ? fs::path(argv[1]) : fs::current_path() / "acceptance_artifacts";
  fs::create_directories(artifacts);

  gate(1, "snr-exactness", snr_exactness);
  gate(2, "stft-identity", stft_identity);
  gate(3, "gradient-fidelity", gradient_fidelity);
  gate(4, "loss-constants", loss_constants);
  gate(5, "desk-learning", [&] { desk_learning(artifacts); });
  gate(10, "determinism", determinism);

  std::printf("%s: %d failing criteria\n", failures == 0 ? "ALL PASS" : "NOT ALL PASS", failures);
  return failures == 0 ? 0 : 1;
}
