#pragma once

// Deterministic planted-structure activation generator.
//
// Each record (sample s, layer l) draws from RandomStream(master_seed,
// s << 16 | l).  Neuron rows start as independent standard normals over the
// N tokens; planted blocks replace their members' rows with one shared
// factor; hubs mix all block factors; every entry then gets noise_sigma
// Gaussian noise and every row a constant offset of row_offset_sigma scale.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "neurotopo/actdump.hpp"

namespace ntopo {

enum class ClassRule { None, BlockSize, BlockCount, HubStrength };

const char* to_string(ClassRule rule) noexcept;
ClassRule parse_class_rule(std::string_view text);

struct SynthSpec {
  std::uint32_t d = 64;
  std::uint32_t tokens = 64;
  std::uint32_t other_tokens = 0;                 // OTHER tokens come first
  std::optional<std::uint32_t> vision_tokens;     // default: half of the rest
  std::uint32_t layer_count = 1;
  std::uint32_t sample_count = 200;

  ClassRule class_rule = ClassRule::BlockSize;
  /// Real-valued label equal to the planted block size (BlockSize rule) or
  /// block count (BlockCount rule) instead of a class id.
  bool regression = false;
  /// BlockSize: block size per class (class c = sample % K); with
  /// `regression`, sizes are cycled over samples in order.
  std::vector<std::uint32_t> block_sizes{6, 8};
  /// BlockCount: number of signal blocks per class, each of block_unit neurons.
  std::vector<std::uint32_t> block_counts{1, 3};
  std::uint32_t block_unit = 4;
  /// HubStrength: hub loading per class; signal is hub_blocks blocks of
  /// block_unit neurons at random non-hub positions.
  std::vector<double> hub_strengths{0.3, 0.9};
  std::uint32_t hub_blocks = 3;

  std::vector<std::uint32_t> planted_hub_indices;
  double hub_strength = 0.9;  // loading used when the rule is not HubStrength

  std::uint32_t distractor_blocks = 5;
  std::uint32_t distractor_min = 4;
  std::uint32_t distractor_max = 8;
  /// Distractor rows are a f + sqrt(1 - a^2) e, so their within-block
  /// correlation is about a^2 and they rank below the signal blocks.
  double distractor_loading = 1.0;

  /// Per-layer target vision-text token coupling; empty disables the
  /// cross-modal profile.
  std::vector<double> cross_modal_ramp;
  double cross_modal_scale = 10.0;

  double noise_sigma = 0.1;
  double row_offset_sigma = 3.0;

  /// Layers carrying the signal blocks / hubs; empty means every layer.
  std::vector<std::uint32_t> signal_layers;
  std::vector<std::uint32_t> hub_layers;

  std::uint64_t master_seed = 0;
  std::string id_prefix = "s";

  std::uint32_t vision_count() const;
  std::uint32_t class_count() const;
  /// Neurons [0, signal_extent()) are reserved for fixed-position signal blocks.
  std::uint32_t signal_extent() const;
  /// Throws std::invalid_argument for an infeasible spec.
  void validate() const;
};

std::string synth_spec_to_json(const SynthSpec& spec);
/// Accepts an optional "preset" key whose fields the other keys override.
SynthSpec synth_spec_from_json(std::string_view json);
/// "classify", "regress", "coupling", "hubs", "intervene", "null".
SynthSpec synth_preset(std::string_view name);

/// Label planted for sample index s.
Label planted_label(const SynthSpec& spec, std::uint32_t sample);
std::string synth_sample_id(const SynthSpec& spec, std::uint32_t sample);

ActivationRecord generate_record(const SynthSpec& spec, std::uint32_t sample, std::uint32_t layer);

struct SynthDataset {
  SynthSpec spec;
  std::vector<ActivationRecord> records;  // sample-major: index s * L + l

  const ActivationRecord& at(std::uint32_t sample, std::uint32_t layer) const {
    return records[static_cast<std::size_t>(sample) * spec.layer_count + layer];
  }
  /// Records of one layer in sample order.
  std::vector<ActivationRecord> layer(std::uint32_t layer) const;
};

SynthDataset generate(const SynthSpec& spec, unsigned threads = 1);

/// Writes records/<id>_L<layer>.ntac, manifest.tsv and spec.json under dir.
DatasetManifest write_dataset(const SynthDataset& data, const std::filesystem::path& dir,
                              unsigned threads = 1);

/// Recomputes the label by measuring the planted structure in the record
/// (block correlations or hub-hub coupling), not by reading stored labels.
/// Throws std::invalid_argument for records the synth spec could not have produced.
Label oracle_label(const SynthSpec& spec, const ActivationRecord& record);

}  // namespace ntopo
