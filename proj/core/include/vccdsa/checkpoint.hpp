#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "vccdsa/network.hpp"

namespace vccdsa {

constexpr int kCheckpointFormatVersion = 1;

// First-/second-moment buffers of the optimizer, stored alongside the
// parameters when present.
struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::int64_t step = 0;

  void reset(std::size_t n);
};

struct Checkpoint {
  Network<float> network;
  std::int64_t step = 0;
  std::optional<AdamState> optimizer;
};

// Writes <path> (binary blob) and <path>.json (sidecar with arch config, seed,
// step, format version, parameter count and FNV checksum of the blob payload).
void save_checkpoint(const std::filesystem::path& path, const Network<float>& net, std::int64_t step,
                     const AdamState* optimizer = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

std::string arch_to_json(const ArchConfig& arch);
ArchConfig arch_from_json(const std::string& text);

}  // namespace vccdsa
