#include "edgespeech/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "edgespeech/error.hpp"

namespace edgespeech {

namespace {

constexpr std::uint16_t kFormatPcm = 1;

std::uint32_t load_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t load_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void store_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void store_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void store_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

bool tag_is(const std::uint8_t* p, const char* tag) { return std::memcmp(p, tag, 4) == 0; }

}  // namespace

std::int16_t to_pcm16(float sample) {
  double v = std::clamp(static_cast<double>(sample), -1.0, 1.0) * 32767.0;
  // std::round rounds halfway cases away from zero.
  return static_cast<std::int16_t>(std::round(v));
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  store_tag(out, "RIFF");
  store_u32(out, 36 + data_bytes);
  store_tag(out, "WAVE");
  store_tag(out, "fmt ");
  store_u32(out, 16);
  store_u16(out, kFormatPcm);
  store_u16(out, 1);
  store_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  store_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * 2);
  store_u16(out, 2);
  store_u16(out, 16);
  store_tag(out, "data");
  store_u32(out, data_bytes);
  for (float s : clip.samples) store_u16(out, static_cast<std::uint16_t>(to_pcm16(s)));
  return out;
}

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !tag_is(bytes.data(), "RIFF") || !tag_is(bytes.data() + 8, "WAVE")) {
    fail(ErrorCode::CorruptHeader, "missing RIFF/WAVE signature");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  AudioClip clip;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = load_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (tag_is(chunk, "fmt ")) {
      if (size < 16 || body + size > bytes.size()) fail(ErrorCode::CorruptHeader, "truncated fmt chunk");
      const std::uint16_t format = load_u16(bytes.data() + body);
      const std::uint16_t channels = load_u16(bytes.data() + body + 2);
      const std::uint32_t rate = load_u32(bytes.data() + body + 4);
      const std::uint16_t bits = load_u16(bytes.data() + body + 14);
      if (format != kFormatPcm) {
        fail(ErrorCode::UnsupportedFormat, "audio format tag " + std::to_string(format) + " (only PCM=1)");
      }
      if (channels != 1) {
        fail(ErrorCode::UnsupportedFormat, std::to_string(channels) + " channels (only mono)");
      }
      if (bits != 16) fail(ErrorCode::UnsupportedFormat, std::to_string(bits) + "-bit samples (only 16)");
      if (rate == 0) fail(ErrorCode::CorruptHeader, "zero sample rate");
      clip.sample_rate_hz = static_cast<int>(rate);
      have_fmt = true;
    } else if (tag_is(chunk, "data")) {
      if (!have_fmt) fail(ErrorCode::CorruptHeader, "data chunk before fmt chunk");
      if (body + size > bytes.size()) {
        fail(ErrorCode::CorruptHeader, "data chunk claims " + std::to_string(size) + " bytes, file has " +
                                           std::to_string(bytes.size() - body));
      }
      if (size % 2 != 0) fail(ErrorCode::CorruptHeader, "odd data chunk length for 16-bit samples");
      clip.samples.resize(size / 2);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        auto v = static_cast<std::int16_t>(load_u16(bytes.data() + body + 2 * i));
        clip.samples[i] = static_cast<float>(v / 32768.0);
      }
      return clip;
    }
    pos = body + size + (size & 1);
  }
  fail(ErrorCode::CorruptHeader, have_fmt ? "no data chunk" : "no fmt chunk");
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::NotFound, path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  const auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "short write to " + path.string());
}

}  // namespace edgespeech
