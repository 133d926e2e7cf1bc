#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace qic {

enum class Modality : std::uint8_t { camera_left, camera_right, radar, lidar };
inline constexpr std::size_t kModalityCount = 4;

enum class Fusion : std::uint8_t { single, early };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

/// Bit set over the four sensor modalities.
using ModalityMask = std::uint8_t;

constexpr ModalityMask mask_of(Modality m) { return ModalityMask(1u << unsigned(m)); }

struct StemSpec {
  std::string id;
  Modality modality{};
  std::vector<int> input_dims;
  std::vector<int> output_dims;
  double flops = 0.0;  // operations per inference
  double output_bits = 0.0;
};

struct BranchSpec {
  std::string id;
  /// Concrete modality sets the branch can consume. CameraBranch accepts
  /// either camera, so it lists two alternatives; every other branch one.
  std::vector<ModalityMask> input_alternatives;
  int depth = 18;
  Fusion fusion = Fusion::single;
  double params_millions = 0.0;
  double flops = 0.0;
  double output_bits = 0.0;
  std::string accuracy_key;
};

struct DnnCatalog {
  std::vector<StemSpec> stems;
  std::vector<BranchSpec> branches;
  int bits_per_element = 8;
  double detection_output_bits = 1e5;

  const StemSpec& stem(std::string_view id) const;
  const BranchSpec& branch(std::string_view id) const;
  const StemSpec& stem_for(Modality m) const;
  std::size_t branch_index(std::string_view id) const;
};

/// Structural gate choice, before placement.
struct ConfigurationOption {
  ModalityMask sources = 0;
  std::vector<std::string> stems;
  std::string branch;
  std::optional<std::string> late_fusion;

  bool operator==(const ConfigurationOption&) const = default;
};

struct CostProfile {
  double stem_flops = 0.0;
  double branch_flops = 0.0;
  double stem_to_branch_bits = 0.0;
  double output_bits = 0.0;
};

/// Compiled-in stems and branches with the published sizes and FLOPS.
DnnCatalog builtin_catalog();

/// Every structurally valid option whose inputs are a subset of `available`.
/// Order: single and early-fusion branches in catalog order (camera branches
/// once per camera side), then depth-18 late-fusion pairs.
std::vector<ConfigurationOption> enumerate_options(const DnnCatalog& catalog,
                                                   ModalityMask available);

CostProfile option_cost_profile(const DnnCatalog& catalog, const ConfigurationOption& option);

/// True when `option` satisfies the gate invariants against `catalog`.
bool option_is_valid(const DnnCatalog& catalog, const ConfigurationOption& option);

std::string option_label(const ConfigurationOption& option);

void to_json(nlohmann::json& j, const DnnCatalog& c);
void from_json(const nlohmann::json& j, DnnCatalog& c);

}  // namespace qic
