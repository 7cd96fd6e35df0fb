#pragma once

// NTPM v1 model checkpoint (little-endian):
//   "NTPM" | u16 version=1 | u32 config length | config UTF-8 JSON |
//   u32 tensor count | per tensor: u16 name length, name, u32 rows, u32 cols,
//   rows*cols f64 | u32 CRC-32 of all preceding bytes

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "neurotopo/tensor.hpp"

namespace ntopo {

struct NamedTensor {
  std::string name;
  Tensor2 value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  std::string config_json;
  std::vector<NamedTensor> tensors;

  /// Throws DataError if no tensor has this name.
  const Tensor2& tensor(const std::string& name) const;
  bool has(const std::string& name) const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::uint16_t kNtpmVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace ntopo
