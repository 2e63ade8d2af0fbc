#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace edgespeech {

/// Mono PCM signal normalized to [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate_hz = 16000;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

/// Reads a 16-bit mono PCM RIFF/WAVE file. Samples are int16 / 32768.
/// Throws NotFound, UnsupportedFormat or CorruptHeader.
AudioClip read_wav(const std::filesystem::path& path);

/// Writes 16-bit mono PCM. Samples are clamped to [-1, 1], scaled by 32767
/// and rounded half away from zero.
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

/// Float -> int16 conversion used by write_wav.
std::int16_t to_pcm16(float sample);

/// Serialized WAV bytes for a clip (what write_wav puts on disk).
std::vector<std::uint8_t> encode_wav(const AudioClip& clip);
AudioClip decode_wav(std::span<const std::uint8_t> bytes);

}  // namespace edgespeech
