#include "edgespeech/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "edgespeech/dsp.hpp"
#include "edgespeech/error.hpp"

namespace edgespeech::dataset {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<double> snr_ladder(const SnrLadder& ladder) {
  if (ladder.levels < 1) fail(ErrorCode::InvalidLadder, "ladder needs at least one level");
  if (!(ladder.snr_min_db <= ladder.snr_max_db)) {
    fail(ErrorCode::InvalidLadder, "snr_min_db exceeds snr_max_db");
  }
  if (!std::isfinite(ladder.snr_min_db) || !std::isfinite(ladder.snr_max_db)) {
    fail(ErrorCode::InvalidLadder, "ladder bounds must be finite");
  }
  if (ladder.levels == 1) return {ladder.snr_min_db};
  std::vector<double> out(static_cast<std::size_t>(ladder.levels));
  const double span = ladder.snr_max_db - ladder.snr_min_db;
  for (int k = 1; k <= ladder.levels; ++k) {
    out[static_cast<std::size_t>(k - 1)] =
        ladder.snr_min_db + static_cast<double>(k - 1) / static_cast<double>(ladder.levels - 1) * span;
  }
  return out;
}

double mix_gain(std::span<const float> clean, std::span<const float> noise, double snr_db) {
  if (clean.size() != noise.size()) {
    fail(ErrorCode::LengthMismatch, "mix_gain needs equal lengths");
  }
  const double clean_energy = dsp::energy(clean);
  const double noise_energy = dsp::energy(noise);
  if (clean_energy == 0.0) fail(ErrorCode::SilentSource, "clean signal has zero energy");
  if (noise_energy == 0.0) fail(ErrorCode::SilentSource, "noise signal has zero energy");
  return std::sqrt(clean_energy / (noise_energy * std::pow(10.0, snr_db / 10.0)));
}

std::vector<float> align_noise(std::span<const float> noise, std::size_t length, std::size_t offset) {
  if (noise.empty()) fail(ErrorCode::SilentSource, "empty noise clip");
  std::vector<float> out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = noise[(offset + i) % noise.size()];
  return out;
}

MixResult synthesize_noisy(const AudioClip& clean, const AudioClip& noise, double snr_db,
                           std::size_t noise_offset) {
  if (clean.sample_rate_hz != noise.sample_rate_hz) {
    fail(ErrorCode::RateMismatch, "clean at " + std::to_string(clean.sample_rate_hz) + " Hz, noise at " +
                                      std::to_string(noise.sample_rate_hz) + " Hz");
  }
  if (!std::isfinite(snr_db)) fail(ErrorCode::InvalidLadder, "snr_db must be finite");
  const std::size_t n = clean.samples.size();
  const auto aligned = align_noise(noise.samples, n, noise_offset);
  const double gain = mix_gain(clean.samples, aligned, snr_db);

  std::vector<double> scaled(n);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    scaled[i] = gain * static_cast<double>(aligned[i]);
    peak = std::max(peak, std::abs(static_cast<double>(clean.samples[i]) + scaled[i]));
  }
  const double factor = peak > 1.0 ? 1.0 / peak : 1.0;

  MixResult out;
  out.gain = gain;
  out.rescale_factor = factor;
  for (AudioClip* clip : {&out.noisy, &out.clean, &out.scaled_noise}) {
    clip->sample_rate_hz = clean.sample_rate_hz;
    clip->samples.resize(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.clean.samples[i] = factor == 1.0 ? clean.samples[i]
                                         : static_cast<float>(static_cast<double>(clean.samples[i]) * factor);
    out.scaled_noise.samples[i] = static_cast<float>(scaled[i] * factor);
    out.noisy.samples[i] = out.clean.samples[i] + out.scaled_noise.samples[i];
  }
  return out;
}

std::vector<AudioClip> merge_segments(std::span<const AudioClip> clips, double target_seconds) {
  if (clips.empty()) return {};
  const int rate = clips.front().sample_rate_hz;
  for (const auto& c : clips) {
    if (c.sample_rate_hz != rate) fail(ErrorCode::RateMismatch, "merge_segments needs a single sample rate");
  }
  const auto seg_len = static_cast<std::size_t>(std::llround(target_seconds * rate));
  if (seg_len == 0) fail(ErrorCode::InvalidConfig, "segment length rounds to zero samples");

  std::vector<AudioClip> out;
  AudioClip current;
  current.sample_rate_hz = rate;
  current.samples.reserve(seg_len);
  for (const auto& clip : clips) {
    std::size_t pos = 0;
    while (pos < clip.samples.size()) {
      const std::size_t take = std::min(seg_len - current.samples.size(), clip.samples.size() - pos);
      current.samples.insert(current.samples.end(), clip.samples.begin() + static_cast<std::ptrdiff_t>(pos),
                             clip.samples.begin() + static_cast<std::ptrdiff_t>(pos + take));
      pos += take;
      if (current.samples.size() == seg_len) {
        out.push_back(std::move(current));
        current = AudioClip{};
        current.sample_rate_hz = rate;
        current.samples.reserve(seg_len);
      }
    }
  }
  return out;
}

const AudioClip& Corpus::segment(const std::string& id) const {
  auto it = segment_index_.find(id);
  if (it == segment_index_.end()) fail(ErrorCode::NotFound, "clean segment '" + id + "'");
  return segments[it->second];
}

std::size_t Corpus::segment_offset(const std::string& id) const {
  auto it = segment_index_.find(id);
  if (it == segment_index_.end()) fail(ErrorCode::NotFound, "clean segment '" + id + "'");
  return segment_offsets[it->second];
}

const AudioClip& Corpus::noise(const std::string& id) const {
  auto it = noise_index_.find(id);
  if (it == noise_index_.end()) fail(ErrorCode::NotFound, "noise clip '" + id + "'");
  return noises[it->second];
}

void Corpus::add_segment(std::string id, AudioClip clip, std::size_t offset) {
  segment_index_[id] = segments.size();
  segment_ids.push_back(std::move(id));
  segments.push_back(std::move(clip));
  segment_offsets.push_back(offset);
}

void Corpus::add_noise(std::string id, AudioClip clip) {
  noise_index_[id] = noises.size();
  noise_ids.push_back(std::move(id));
  noises.push_back(std::move(clip));
}

std::vector<fs::path> list_wavs(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::NotFound, "directory " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".wav") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

Corpus load_corpus(const fs::path& clean_dir, const fs::path& noise_dir, double segment_seconds) {
  const auto clean_files = list_wavs(clean_dir);
  const auto noise_files = list_wavs(noise_dir);
  if (clean_files.empty()) fail(ErrorCode::EmptyCorpus, "no WAV files in " + clean_dir.string());
  if (noise_files.empty()) fail(ErrorCode::EmptyCorpus, "no WAV files in " + noise_dir.string());

  Corpus corpus;
  std::vector<AudioClip> clean;
  clean.reserve(clean_files.size());
  for (const auto& f : clean_files) clean.push_back(read_wav(f));

  if (segment_seconds > 0.0) {
    auto segments = merge_segments(clean, segment_seconds);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
      char id[32];
      std::snprintf(id, sizeof(id), "segment-%05zu", i);
      const std::size_t len = segments[i].samples.size();
      corpus.add_segment(id, std::move(segments[i]), offset);
      offset += len;
    }
  } else {
    for (std::size_t i = 0; i < clean.size(); ++i) {
      corpus.add_segment(clean_files[i].filename().string(), std::move(clean[i]), 0);
    }
  }
  for (const auto& f : noise_files) corpus.add_noise(f.filename().string(), read_wav(f));
  if (corpus.segments.empty()) {
    fail(ErrorCode::EmptyCorpus, "clean audio shorter than one " + std::to_string(segment_seconds) + " s segment");
  }
  return corpus;
}

MixResult render_entry(const Corpus& corpus, const MixSpec& spec) {
  const auto& clean = corpus.segment(spec.clean_id);
  if (clean.samples.size() != spec.length) {
    fail(ErrorCode::InvariantViolation, "segment " + spec.clean_id + " length differs from manifest");
  }
  return synthesize_noisy(clean, corpus.noise(spec.noise_id), spec.snr_db, spec.noise_offset);
}

Manifest build_manifest(const Corpus& corpus, const SnrLadder& ladder, std::uint64_t seed) {
  if (corpus.segments.empty() || corpus.noises.empty()) fail(ErrorCode::EmptyCorpus, "corpus has no audio");
  const auto levels = snr_ladder(ladder);

  Manifest m;
  m.ladder = ladder;
  m.seed = seed;
  m.sample_rate_hz = corpus.segments.front().sample_rate_hz;

  // mt19937_64 output is fully specified by the standard, and bounded draws
  // use plain modulo, so pairings reproduce across standard libraries.
  std::mt19937_64 pairing(seed);
  m.entries.resize(corpus.segments.size());
  for (std::size_t i = 0; i < corpus.segments.size(); ++i) {
    auto& e = m.entries[i];
    char name[32];
    std::snprintf(name, sizeof(name), "mix-%05zu", i);
    e.entry = name;
    e.clean_id = corpus.segment_ids[i];
    e.clean_offset = corpus.segment_offsets[i];
    e.length = corpus.segments[i].samples.size();
    const std::size_t noise_index = pairing() % corpus.noises.size();
    e.noise_id = corpus.noise_ids[noise_index];
    e.seed = pairing();
    e.snr_db = levels[i % levels.size()];
    const std::size_t noise_len = corpus.noises[noise_index].samples.size();
    if (noise_len > e.length) {
      std::mt19937_64 offset_rng(e.seed);
      e.noise_offset = offset_rng() % (noise_len - e.length + 1);
    }
  }

  std::exception_ptr error;
  const auto count = static_cast<std::ptrdiff_t>(m.entries.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      auto& e = m.entries[static_cast<std::size_t>(i)];
      e.rescale_factor = render_entry(corpus, e).rescale_factor;
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return m;
}

Manifest build_manifest(const fs::path& clean_dir, const fs::path& noise_dir, const SnrLadder& ladder,
                        std::uint64_t seed, double segment_seconds) {
  snr_ladder(ladder);
  const auto corpus = load_corpus(clean_dir, noise_dir, segment_seconds);
  auto m = build_manifest(corpus, ladder, seed);
  m.clean_dir = clean_dir.string();
  m.noise_dir = noise_dir.string();
  m.segment_seconds = segment_seconds;
  return m;
}

std::string serialize_manifest(const Manifest& m) {
  std::ostringstream out;
  json header = {
      {"version", m.version},
      {"type", "header"},
      {"clean_dir", m.clean_dir},
      {"noise_dir", m.noise_dir},
      {"snr_min_db", m.ladder.snr_min_db},
      {"snr_max_db", m.ladder.snr_max_db},
      {"levels", m.ladder.levels},
      {"seed", m.seed},
      {"segment_seconds", m.segment_seconds},
      {"sample_rate", m.sample_rate_hz},
  };
  out << header.dump() << '\n';
  for (const auto& e : m.entries) {
    json rec = {
        {"version", m.version},
        {"type", "entry"},
        {"entry", e.entry},
        {"clean_id", e.clean_id},
        {"clean_offset", e.clean_offset},
        {"length", e.length},
        {"noise_id", e.noise_id},
        {"noise_offset", e.noise_offset},
        {"snr_db", e.snr_db},
        {"seed", e.seed},
        {"rescale_factor", e.rescale_factor},
    };
    out << rec.dump() << '\n';
  }
  return out.str();
}

Manifest parse_manifest(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
      const int version = rec.at("version").get<int>();
      if (version != Manifest::kFormatVersion) {
        fail(ErrorCode::UnsupportedFormat, "manifest version " + std::to_string(version));
      }
      const auto type = rec.at("type").get<std::string>();
      if (type == "header") {
        m.version = version;
        m.clean_dir = rec.at("clean_dir").get<std::string>();
        m.noise_dir = rec.at("noise_dir").get<std::string>();
        m.ladder.snr_min_db = rec.at("snr_min_db").get<double>();
        m.ladder.snr_max_db = rec.at("snr_max_db").get<double>();
        m.ladder.levels = rec.at("levels").get<int>();
        m.seed = rec.at("seed").get<std::uint64_t>();
        m.segment_seconds = rec.at("segment_seconds").get<double>();
        m.sample_rate_hz = rec.at("sample_rate").get<int>();
        have_header = true;
      } else if (type == "entry") {
        MixSpec e;
        e.entry = rec.at("entry").get<std::string>();
        e.clean_id = rec.at("clean_id").get<std::string>();
        e.clean_offset = rec.at("clean_offset").get<std::size_t>();
        e.length = rec.at("length").get<std::size_t>();
        e.noise_id = rec.at("noise_id").get<std::string>();
        e.noise_offset = rec.at("noise_offset").get<std::size_t>();
        e.snr_db = rec.at("snr_db").get<double>();
        e.seed = rec.at("seed").get<std::uint64_t>();
        e.rescale_factor = rec.at("rescale_factor").get<double>();
        m.entries.push_back(std::move(e));
      } else {
        fail(ErrorCode::CorruptHeader, "unknown record type '" + type + "'");
      }
    } catch (const json::exception& ex) {
      fail(ErrorCode::CorruptHeader, "manifest line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  if (!have_header) fail(ErrorCode::CorruptHeader, "manifest has no header record");
  return m;
}

void save_manifest(const fs::path& path, const Manifest& manifest) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << serialize_manifest(manifest);
  if (!out) fail(ErrorCode::Io, "short write to " + path.string());
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::NotFound, path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_manifest(text.str());
}

void write_corpus_tree(const fs::path& out_dir, const Corpus& corpus, const Manifest& manifest) {
  for (const char* sub : {"noisy", "clean", "noise"}) fs::create_directories(out_dir / sub);
  std::exception_ptr error;
  const auto count = static_cast<std::ptrdiff_t>(manifest.entries.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      const auto& e = manifest.entries[static_cast<std::size_t>(i)];
      const auto mix = render_entry(corpus, e);
      const auto file = e.entry + ".wav";
      write_wav(out_dir / "noisy" / file, mix.noisy);
      write_wav(out_dir / "clean" / file, mix.clean);
      write_wav(out_dir / "noise" / file, mix.scaled_noise);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

std::vector<Pair> load_pairs(const fs::path& manifest_path) {
  const auto manifest = load_manifest(manifest_path);
  const auto root = manifest_path.parent_path();
  std::vector<Pair> pairs;
  pairs.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    Pair p;
    p.entry = e.entry;
    p.snr_db = e.snr_db;
    p.noisy = read_wav(root / "noisy" / (e.entry + ".wav"));
    p.clean = read_wav(root / "clean" / (e.entry + ".wav"));
    if (p.noisy.samples.size() != p.clean.samples.size()) {
      fail(ErrorCode::LengthMismatch, "noisy and clean lengths differ for " + e.entry);
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace edgespeech::dataset
