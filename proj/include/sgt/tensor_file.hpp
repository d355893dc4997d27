#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgt/tensor.hpp"

namespace sgt::io {

inline constexpr std::uint16_t kTensorFileVersion = 1;

/// In-memory SGTF record: float32 payload, row-major.
struct TensorFile {
  std::vector<std::uint64_t> dims;
  std::vector<float> payload;
};

void write_tensor(std::ostream& out, const TensorFile& t);
/// Throws ParseError on bad magic, unsupported version or truncated data.
TensorFile read_tensor(std::istream& in);

void write_tensor_file(const std::string& path, const TensorFile& t);
TensorFile read_tensor_file(const std::string& path);

TensorFile to_file(const FeatureTensor& t);
FeatureTensor from_file(const TensorFile& t);

struct NamedTensor {
  std::string name;
  TensorFile tensor;
};

/// `<stem>.sgtf` holds the records back to back; `<stem>.json` lists their
/// names and shapes in order next to the caller's metadata under "meta".
void write_bundle(const std::string& stem, const std::vector<NamedTensor>& tensors,
                  const nlohmann::ordered_json& meta);

struct Bundle {
  std::vector<NamedTensor> tensors;
  nlohmann::ordered_json meta;

  const TensorFile& at(const std::string& name) const;
};

Bundle read_bundle(const std::string& stem);

}  // namespace sgt::io
