#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "edgespeech/net.hpp"
#include "edgespeech/quant.hpp"

// Container layout (little-endian):
//   "EDGE" | u32 format version | u32 header length | JSON header | payloads
// The header holds {"kind", "config", "tensors": [{name, shape, dtype, scale}]};
// payloads follow in the same order, f32 tensors as float32 and i8 tensors as
// raw bytes.

namespace edgespeech::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

std::vector<std::uint8_t> encode(const net::Model& model);
std::vector<std::uint8_t> encode(const quant::QuantizedModel& model);

/// "fp32" or "int8". Throws CorruptHeader.
std::string kind(std::span<const std::uint8_t> bytes);

net::Model decode_model(std::span<const std::uint8_t> bytes);
quant::QuantizedModel decode_quantized(std::span<const std::uint8_t> bytes);

void save(const std::filesystem::path& path, const net::Model& model);
void save(const std::filesystem::path& path, const quant::QuantizedModel& model);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
net::Model load_model(const std::filesystem::path& path);
quant::QuantizedModel load_quantized(const std::filesystem::path& path);

}  // namespace edgespeech::checkpoint
