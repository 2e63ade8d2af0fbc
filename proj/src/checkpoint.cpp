#include "edgespeech/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <json.hpp>

#include "edgespeech/config.hpp"
#include "edgespeech/error.hpp"

namespace edgespeech::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'E', 'D', 'G', 'E'};

struct Writer {
  json tensors = json::array();
  std::vector<std::uint8_t> payload;

  void f32(const std::string& name, const Tensor& t) {
    tensors.push_back({{"name", name}, {"shape", t.shape}, {"dtype", "f32"}});
    for (double v : t.data) {
      const float f = static_cast<float>(v);
      const auto* p = reinterpret_cast<const std::uint8_t*>(&f);
      payload.insert(payload.end(), p, p + sizeof(float));
    }
  }

  void i8(const std::string& name, const quant::QuantizedTensor& q) {
    tensors.push_back({{"name", name}, {"shape", q.shape}, {"dtype", "i8"}, {"scale", q.scale}});
    const auto* p = reinterpret_cast<const std::uint8_t*>(q.values.data());
    payload.insert(payload.end(), p, p + q.values.size());
  }

  std::vector<std::uint8_t> finish(const std::string& kind, const net::ModelConfig& config) const {
    const json header = {{"kind", kind}, {"config", config}, {"tensors", tensors}};
    const std::string text = header.dump();
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    auto put_u32 = [&out](std::uint32_t v) {
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    put_u32(kFormatVersion);
    put_u32(static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
  }
};

struct Record {
  std::vector<std::size_t> shape;
  std::string dtype;
  double scale = 1.0;
  const std::uint8_t* data = nullptr;
};

struct Reader {
  std::string kind;
  net::ModelConfig config;
  std::map<std::string, Record> records;

  explicit Reader(std::span<const std::uint8_t> bytes) {
    auto corrupt = [](const std::string& what) { fail(ErrorCode::CorruptHeader, "checkpoint: " + what); };
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) corrupt("missing EDGE magic");
    auto u32 = [&bytes](std::size_t at) {
      std::uint32_t v = 0;
      for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
      return v;
    };
    if (u32(4) != kFormatVersion) corrupt("unsupported format version " + std::to_string(u32(4)));
    const std::size_t header_len = u32(8);
    if (12 + header_len > bytes.size()) corrupt("header runs past the end of the file");
    json header;
    try {
      header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(header_len));
      kind = header.at("kind").get<std::string>();
      config = header.at("config").get<net::ModelConfig>();
    } catch (const json::exception& e) {
      corrupt(e.what());
    }
    std::size_t offset = 12 + header_len;
    for (const auto& t : header.at("tensors")) {
      Record r;
      std::string name;
      try {
        name = t.at("name").get<std::string>();
        r.shape = t.at("shape").get<std::vector<std::size_t>>();
        r.dtype = t.at("dtype").get<std::string>();
        if (t.contains("scale")) r.scale = t.at("scale").get<double>();
      } catch (const json::exception& e) {
        corrupt(e.what());
      }
      std::size_t width = 0;
      if (r.dtype == "f32") width = sizeof(float);
      if (r.dtype == "i8") width = 1;
      if (!width) corrupt("unknown dtype '" + r.dtype + "' for " + name);
      const std::size_t n = element_count(r.shape) * width;
      if (offset + n > bytes.size()) corrupt("payload of " + name + " is truncated");
      r.data = bytes.data() + offset;
      offset += n;
      records[name] = r;
    }
    if (offset != bytes.size()) corrupt("trailing bytes after the last tensor");
  }

  const Record& get(const std::string& name, const char* dtype) const {
    auto it = records.find(name);
    if (it == records.end()) fail(ErrorCode::CorruptHeader, "checkpoint lacks tensor " + name);
    if (it->second.dtype != dtype) {
      fail(ErrorCode::CorruptHeader, name + " is stored as " + it->second.dtype + ", expected " + dtype);
    }
    return it->second;
  }

  Tensor f32(const std::string& name) const {
    const Record& r = get(name, "f32");
    Tensor t(r.shape);
    for (std::size_t i = 0; i < t.size(); ++i) {
      float f;
      std::memcpy(&f, r.data + i * sizeof(float), sizeof(float));
      t.data[i] = f;
    }
    return t;
  }

  quant::QuantizedTensor i8(const std::string& name) const {
    const Record& r = get(name, "i8");
    quant::QuantizedTensor q;
    q.shape = r.shape;
    q.scale = r.scale;
    q.values.resize(element_count(r.shape));
    std::memcpy(q.values.data(), r.data, q.values.size());
    if (!(q.scale > 0.0)) fail(ErrorCode::CorruptHeader, name + " has a non-positive scale");
    return q;
  }
};

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
}

std::string layer_name(const char* group, std::size_t i, const char* field) {
  return std::string(group) + "." + std::to_string(i) + "." + field;
}

}  // namespace

std::vector<std::uint8_t> encode(const net::Model& model) {
  net::check_model(model);
  Writer w;
  model.params.for_each([&](const std::string& name, const Tensor& t) { w.f32(name, t); });
  return w.finish("fp32", model.config);
}

std::vector<std::uint8_t> encode(const quant::QuantizedModel& model) {
  Writer w;
  for (std::size_t i = 0; i < model.encoder.size(); ++i) {
    w.i8(layer_name("encoder", i, "weight"), model.encoder[i].weight);
    w.f32(layer_name("encoder", i, "bias"), model.encoder[i].bias);
  }
  for (std::size_t i = 0; i < model.lstm.layers.size(); ++i) {
    const auto& l = model.lstm.layers[i];
    w.f32(layer_name("lstm", i, "w_ih"), l.w_ih);
    w.f32(layer_name("lstm", i, "w_hh"), l.w_hh);
    w.f32(layer_name("lstm", i, "b_ih"), l.b_ih);
    w.f32(layer_name("lstm", i, "b_hh"), l.b_hh);
  }
  w.i8("projection.weight", model.projection.weight);
  w.f32("projection.bias", model.projection.bias);
  for (std::size_t i = 0; i < model.decoder.size(); ++i) {
    w.i8(layer_name("decoder", i, "weight"), model.decoder[i].weight);
    w.f32(layer_name("decoder", i, "bias"), model.decoder[i].bias);
  }
  return w.finish("int8", model.config);
}

std::string kind(std::span<const std::uint8_t> bytes) { return Reader(bytes).kind; }

net::Model decode_model(std::span<const std::uint8_t> bytes) {
  const Reader r(bytes);
  if (r.kind != "fp32") fail(ErrorCode::CorruptHeader, "expected an fp32 checkpoint, found " + r.kind);
  // Build the skeleton from the config, then fill every tensor by name.
  net::Model m = net::init_model(r.config, 0);
  m.params.for_each([&](const std::string& name, Tensor& t) {
    Tensor loaded = r.f32(name);
    if (!loaded.same_shape(t)) {
      fail(ErrorCode::ArchitectureMismatch, name + " is " + shape_string(loaded.shape) + ", config implies " +
                                                shape_string(t.shape));
    }
    t = std::move(loaded);
  });
  if (r.records.size() != m.params.encoder.size() * 2 + m.params.lstm.layers.size() * 4 + 2 +
                              m.params.decoder.size() * 2) {
    fail(ErrorCode::CorruptHeader, "checkpoint holds tensors the config does not describe");
  }
  return m;
}

quant::QuantizedModel decode_quantized(std::span<const std::uint8_t> bytes) {
  const Reader r(bytes);
  if (r.kind != "int8") fail(ErrorCode::CorruptHeader, "expected an int8 checkpoint, found " + r.kind);
  const net::Model skeleton = net::init_model(r.config, 0);
  quant::QuantizedModel q;
  q.config = r.config;
  auto check = [](const std::string& name, const std::vector<std::size_t>& got,
                  const std::vector<std::size_t>& want) {
    if (got != want) {
      fail(ErrorCode::ArchitectureMismatch, name + " is " + shape_string(got) + ", config implies " +
                                                shape_string(want));
    }
  };
  for (std::size_t i = 0; i < skeleton.params.encoder.size(); ++i) {
    const auto& s = skeleton.params.encoder[i];
    quant::QuantizedConvLayer l{r.i8(layer_name("encoder", i, "weight")), r.f32(layer_name("encoder", i, "bias")),
                                s.stride};
    check(layer_name("encoder", i, "weight"), l.weight.shape, s.weight.shape);
    check(layer_name("encoder", i, "bias"), l.bias.shape, s.bias.shape);
    q.encoder.push_back(std::move(l));
  }
  for (std::size_t i = 0; i < skeleton.params.lstm.layers.size(); ++i) {
    const auto& s = skeleton.params.lstm.layers[i];
    net::LstmLayerParams l{r.f32(layer_name("lstm", i, "w_ih")), r.f32(layer_name("lstm", i, "w_hh")),
                           r.f32(layer_name("lstm", i, "b_ih")), r.f32(layer_name("lstm", i, "b_hh"))};
    check(layer_name("lstm", i, "w_ih"), l.w_ih.shape, s.w_ih.shape);
    check(layer_name("lstm", i, "w_hh"), l.w_hh.shape, s.w_hh.shape);
    check(layer_name("lstm", i, "b_ih"), l.b_ih.shape, s.b_ih.shape);
    check(layer_name("lstm", i, "b_hh"), l.b_hh.shape, s.b_hh.shape);
    q.lstm.layers.push_back(std::move(l));
  }
  q.projection = {r.i8("projection.weight"), r.f32("projection.bias")};
  check("projection.weight", q.projection.weight.shape, skeleton.params.projection.weight.shape);
  check("projection.bias", q.projection.bias.shape, skeleton.params.projection.bias.shape);
  for (std::size_t i = 0; i < skeleton.params.decoder.size(); ++i) {
    const auto& s = skeleton.params.decoder[i];
    quant::QuantizedDeconvLayer l{r.i8(layer_name("decoder", i, "weight")), r.f32(layer_name("decoder", i, "bias")),
                                  s.stride};
    check(layer_name("decoder", i, "weight"), l.weight.shape, s.weight.shape);
    check(layer_name("decoder", i, "bias"), l.bias.shape, s.bias.shape);
    q.decoder.push_back(std::move(l));
  }
  quant::check_accumulators(q);
  return q;
}

void save(const fs::path& path, const net::Model& model) { write_bytes(path, encode(model)); }
void save(const fs::path& path, const quant::QuantizedModel& model) { write_bytes(path, encode(model)); }

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::NotFound, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

net::Model load_model(const fs::path& path) { return decode_model(read_file(path)); }
quant::QuantizedModel load_quantized(const fs::path& path) { return decode_quantized(read_file(path)); }

}  // namespace edgespeech::checkpoint
