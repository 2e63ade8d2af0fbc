#pragma once

#include <cstdint>
#include <filesystem>

#include "edgespeech/audio_io.hpp"

namespace edgespeech::dataset {

/// Speech-like test signal: voiced syllables made of harmonic tone complexes
/// with gliding pitch, two formant-shaped resonances, per-syllable level
/// spread of 20 dB and silent gaps. Peak amplitude 0.5.
AudioClip speech_like(std::uint64_t seed, double seconds, int sample_rate_hz = 16000);

/// Machine-hum style noise: six stationary tonal components with slowly
/// fluctuating amplitude over a Gaussian floor 15 dB down. Unit RMS.
AudioClip hum_noise(std::uint64_t seed, double seconds, int sample_rate_hz = 16000);

/// White Gaussian noise, unit RMS.
AudioClip white_noise(std::uint64_t seed, double seconds, int sample_rate_hz = 16000);

/// Writes `clean_clips` speech-like files to out_dir/clean and `noise_clips`
/// hum-noise files to out_dir/noise.
void write_toy_corpus(const std::filesystem::path& out_dir, int clean_clips, int noise_clips, double seconds,
                      std::uint64_t seed, int sample_rate_hz = 16000);

}  // namespace edgespeech::dataset
