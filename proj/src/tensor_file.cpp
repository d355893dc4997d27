#include "sgt/tensor_file.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "sgt/errors.hpp"

namespace sgt::io {
namespace {

constexpr char kMagic[4] = {'S', 'G', 'T', 'F'};

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ParseError("truncated tensor header", 0);
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

std::uint64_t product(const std::vector<std::uint64_t>& dims) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

void write_tensor(std::ostream& out, const TensorFile& t) {
  if (t.dims.size() > 0xffff) throw ArgumentError("tensor rank too large");
  if (product(t.dims) != t.payload.size()) throw ArgumentError("payload length does not match dims");
  out.write(kMagic, 4);
  put_le<std::uint16_t>(out, kTensorFileVersion);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.dims.size()));
  for (auto d : t.dims) put_le<std::uint64_t>(out, d);
  for (float f : t.payload) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    put_le<std::uint32_t>(out, bits);
  }
  if (!out) throw std::runtime_error("tensor write failed");
}

TensorFile read_tensor(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw ParseError("bad SGTF magic", 0);
  const auto version = get_le<std::uint16_t>(in);
  if (version != kTensorFileVersion) {
    throw ParseError("unsupported SGTF version " + std::to_string(version), 0);
  }
  TensorFile t;
  t.dims.resize(get_le<std::uint16_t>(in));
  for (auto& d : t.dims) d = get_le<std::uint64_t>(in);
  const std::uint64_t n = product(t.dims);
  t.payload.resize(n);
  for (auto& f : t.payload) {
    const auto bits = get_le<std::uint32_t>(in);
    std::memcpy(&f, &bits, sizeof f);
  }
  return t;
}

void write_tensor_file(const std::string& path, const TensorFile& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open " + path + " for writing");
  write_tensor(out, t);
}

TensorFile read_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path);
  return read_tensor(in);
}

TensorFile to_file(const FeatureTensor& t) {
  TensorFile f;
  f.dims.assign(t.shape.begin(), t.shape.end());
  f.payload.assign(t.data.begin(), t.data.end());
  return f;
}

FeatureTensor from_file(const TensorFile& t) {
  FeatureTensor f;
  f.shape.assign(t.dims.begin(), t.dims.end());
  f.data.assign(t.payload.begin(), t.payload.end());
  return f;
}

void write_bundle(const std::string& stem, const std::vector<NamedTensor>& tensors,
                  const nlohmann::ordered_json& meta) {
  nlohmann::ordered_json manifest;
  manifest["format"] = "SGTF";
  manifest["version"] = kTensorFileVersion;
  manifest["meta"] = meta;
  manifest["tensors"] = nlohmann::ordered_json::array();
  std::ofstream bin(stem + ".sgtf", std::ios::binary);
  if (!bin) throw ArgumentError("cannot open " + stem + ".sgtf for writing");
  for (const auto& nt : tensors) {
    manifest["tensors"].push_back({{"name", nt.name}, {"shape", nt.tensor.dims}});
    write_tensor(bin, nt.tensor);
  }
  std::ofstream js(stem + ".json");
  if (!js) throw ArgumentError("cannot open " + stem + ".json for writing");
  js << manifest.dump(2) << '\n';
}

const TensorFile& Bundle::at(const std::string& name) const {
  for (const auto& nt : tensors)
    if (nt.name == name) return nt.tensor;
  throw ParseError("bundle has no tensor '" + name + "'", 0);
}

Bundle read_bundle(const std::string& stem) {
  std::ifstream js(stem + ".json");
  if (!js) throw ArgumentError("cannot open " + stem + ".json");
  nlohmann::ordered_json manifest;
  try {
    manifest = nlohmann::ordered_json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad manifest: ") + e.what(), 0);
  }
  std::ifstream bin(stem + ".sgtf", std::ios::binary);
  if (!bin) throw ArgumentError("cannot open " + stem + ".sgtf");
  Bundle b;
  b.meta = manifest.value("meta", nlohmann::ordered_json::object());
  try {
    for (const auto& entry : manifest.at("tensors")) {
      NamedTensor nt{entry.at("name").get<std::string>(), read_tensor(bin)};
      if (nt.tensor.dims != entry.at("shape").get<std::vector<std::uint64_t>>()) {
        throw ParseError("shape of '" + nt.name + "' disagrees with manifest", 0);
      }
      b.tensors.push_back(std::move(nt));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad manifest: ") + e.what(), 0);
  }
  return b;
}

}  // namespace sgt::io
