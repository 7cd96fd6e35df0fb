#pragma once

// NTAC v1: per-sample, per-layer activation matrices with token modality masks.
//
// Layout (little-endian):
//   "NTAC" | u16 version=1 | u32 d | u32 N | u8 label_kind (0 none, 1 class u32,
//   2 real f64) | label payload | N x u8 modality (0 vision, 1 text, 2 other) |
//   u16 id length | id bytes (UTF-8) | u32 layer | d*N f32 row-major | u32 CRC-32
//
// The trailing CRC-32 (zlib polynomial) covers every preceding byte.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "neurotopo/error.hpp"

namespace ntopo {

enum class Modality : std::uint8_t { Vision = 0, Text = 1, Other = 2 };

/// No label, a class id, or a real-valued target.
using Label = std::variant<std::monostate, std::uint32_t, double>;

bool has_label(const Label& label) noexcept;
std::string label_to_string(const Label& label);

struct ActivationRecord {
  std::string sample_id;
  std::uint32_t layer_index = 0;
  std::uint32_t neurons = 0;  // d
  std::uint32_t tokens = 0;   // N
  std::vector<float> values;  // d x N, row-major (one row per neuron)
  std::vector<Modality> modality;
  Label label;

  ActivationRecord() = default;
  ActivationRecord(std::string id, std::uint32_t layer, std::uint32_t d,
                   std::uint32_t n);

  float at(std::uint32_t neuron, std::uint32_t token) const {
    return values[static_cast<std::size_t>(neuron) * tokens + token];
  }
  float& at(std::uint32_t neuron, std::uint32_t token) {
    return values[static_cast<std::size_t>(neuron) * tokens + token];
  }
  std::span<const float> row(std::uint32_t neuron) const {
    return {values.data() + static_cast<std::size_t>(neuron) * tokens, tokens};
  }
  std::span<float> row(std::uint32_t neuron) {
    return {values.data() + static_cast<std::size_t>(neuron) * tokens, tokens};
  }

  std::uint32_t count(Modality m) const;

  /// Throws DumpError(Invariant or NonFinite) when the record is malformed.
  void validate() const;

  friend bool operator==(const ActivationRecord&, const ActivationRecord&) = default;
};

enum class DumpErrorKind {
  Io,
  BadMagic,
  VersionMismatch,
  Truncated,
  NonFinite,
  Checksum,
  Invariant,
  Manifest,
};

const char* to_string(DumpErrorKind kind) noexcept;

class DumpError : public DataError {
 public:
  DumpError(DumpErrorKind kind, const std::string& what);
  DumpErrorKind kind() const noexcept { return kind_; }

 private:
  DumpErrorKind kind_;
};

inline constexpr std::uint16_t kNtacVersion = 1;

std::vector<std::uint8_t> encode_record(const ActivationRecord& record);
ActivationRecord decode_record(std::span<const std::uint8_t> bytes);

void write_record(const ActivationRecord& record, const std::filesystem::path& path);
ActivationRecord read_record(const std::filesystem::path& path);

struct ManifestEntry {
  std::filesystem::path path;  // resolved against the manifest directory
  std::string sample_id;
  std::uint32_t layer_index = 0;
  Label label;                 // manifest column; may be empty
  std::uint32_t neurons = 0;   // filled in from the record header on load
  std::uint32_t tokens = 0;
};

/// Tab-separated text manifest: path, sample_id, layer_index, label.
/// Lines starting with '#' are comments; "# split_seed=<n>" sets split_seed.
/// A label cell of "-" (or empty) means "use the label stored in the record".
struct DatasetManifest {
  std::vector<ManifestEntry> records;
  std::uint32_t layer_count = 0;
  std::map<std::uint32_t, std::uint32_t> hidden_dims;  // layer -> d
  std::uint64_t split_seed = 0;

  std::uint32_t hidden_dim(std::uint32_t layer) const;
  std::vector<const ManifestEntry*> layer_entries(std::uint32_t layer) const;
  /// Distinct sample ids in first-appearance order.
  std::vector<std::string> sample_ids() const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
/// Entry paths are written relative to the manifest's directory when possible.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Reads the record behind an entry, with the manifest label taking precedence.
ActivationRecord load_entry(const ManifestEntry& entry);
/// Records of one layer in manifest order.
std::vector<ActivationRecord> load_layer(const DatasetManifest& manifest,
                                         std::uint32_t layer, unsigned threads = 1);

}  // namespace ntopo
