#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "edgespeech/audio_io.hpp"

namespace edgespeech::dataset {

/// Evenly spaced target SNRs between snr_min_db and snr_max_db.
struct SnrLadder {
  double snr_min_db = 0.0;
  double snr_max_db = 40.0;
  int levels = 5;
};

/// Recipe for one synthesized noisy clip.
struct MixSpec {
  std::string entry;         // output file stem
  std::string clean_id;      // segment id
  std::string noise_id;      // noise file name
  std::size_t clean_offset = 0;
  std::size_t length = 0;    // samples
  std::size_t noise_offset = 0;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  double rescale_factor = 1.0;
};

struct Manifest {
  static constexpr int kFormatVersion = 1;

  int version = kFormatVersion;
  std::string clean_dir;
  std::string noise_dir;
  SnrLadder ladder;
  std::uint64_t seed = 0;
  double segment_seconds = 15.0;  // 0 keeps every clean file as its own segment
  int sample_rate_hz = 16000;
  std::vector<MixSpec> entries;
};

struct MixResult {
  AudioClip noisy;
  AudioClip clean;         // rescaled when the mixture had to be pulled back into [-1, 1]
  AudioClip scaled_noise;  // alpha * noise, same rescaling
  double gain = 0.0;       // alpha before rescaling
  double rescale_factor = 1.0;
};

/// SNR_k = min + (k - 1) / (L - 1) * (max - min), k = 1..L. L = 1 yields [min].
std::vector<double> snr_ladder(const SnrLadder& ladder);

/// Noise gain that puts clean / (gain * noise) energy at snr_db.
/// Throws SilentSource or LengthMismatch.
double mix_gain(std::span<const float> clean, std::span<const float> noise, double snr_db);

/// Tiles (wraparound) or crops noise to `length` samples starting at `offset`.
std::vector<float> align_noise(std::span<const float> noise, std::size_t length, std::size_t offset);

/// noisy = clean + gain * noise after aligning noise to the clean length.
/// If the mixture peaks above 1, all three outputs are scaled by 1 / peak.
MixResult synthesize_noisy(const AudioClip& clean, const AudioClip& noise, double snr_db,
                           std::size_t noise_offset = 0);

/// Concatenates clips and cuts consecutive target_seconds segments; the
/// shorter tail is dropped. Throws RateMismatch.
std::vector<AudioClip> merge_segments(std::span<const AudioClip> clips, double target_seconds = 15.0);

/// Clean segments and noise clips loaded from disk, keyed the way a
/// manifest refers to them.
struct Corpus {
  std::vector<std::string> segment_ids;
  std::vector<AudioClip> segments;
  std::vector<std::size_t> segment_offsets;
  std::vector<std::string> noise_ids;
  std::vector<AudioClip> noises;

  const AudioClip& segment(const std::string& id) const;
  std::size_t segment_offset(const std::string& id) const;
  const AudioClip& noise(const std::string& id) const;

  void add_segment(std::string id, AudioClip clip, std::size_t offset);
  void add_noise(std::string id, AudioClip clip);

 private:
  std::map<std::string, std::size_t> segment_index_;
  std::map<std::string, std::size_t> noise_index_;
};

/// Sorted *.wav files in a directory.
std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir);

Corpus load_corpus(const std::filesystem::path& clean_dir, const std::filesystem::path& noise_dir,
                   double segment_seconds);

/// Pairs every clean segment with a noise file drawn by a seeded generator
/// and a ladder level cycled k = 1..L. Rescale factors are computed by
/// synthesizing every entry. Throws EmptyCorpus.
Manifest build_manifest(const std::filesystem::path& clean_dir, const std::filesystem::path& noise_dir,
                        const SnrLadder& ladder, std::uint64_t seed, double segment_seconds = 15.0);
Manifest build_manifest(const Corpus& corpus, const SnrLadder& ladder, std::uint64_t seed);

/// Re-synthesizes one manifest entry from the corpus.
MixResult render_entry(const Corpus& corpus, const MixSpec& spec);

/// JSON-lines serialization: one header record, then one record per entry.
std::string serialize_manifest(const Manifest& manifest);
Manifest parse_manifest(const std::string& text);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest load_manifest(const std::filesystem::path& path);

/// Writes noisy/, clean/ and noise/ WAV trees under out_dir.
void write_corpus_tree(const std::filesystem::path& out_dir, const Corpus& corpus, const Manifest& manifest);

/// Noisy/clean pair as stored in a synthesized tree.
struct Pair {
  std::string entry;
  double snr_db = 0.0;
  AudioClip noisy;
  AudioClip clean;
};

/// Loads the pairs written next to a manifest by write_corpus_tree.
std::vector<Pair> load_pairs(const std::filesystem::path& manifest_path);

}  // namespace edgespeech::dataset
