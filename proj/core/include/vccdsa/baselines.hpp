#pragma once

#include <cstdint>

#include "vccdsa/image.hpp"
#include "vccdsa/network.hpp"

namespace vccdsa {

struct RegistrationConfig {
  int search_radius = 8;  // px
  int step = 1;           // px
  int tile_size = 0;      // 0 = whole frame, otherwise square tiles searched independently

  void validate() const;
};

struct RegistrationResult {
  ImageFrame subtraction;
  int dy = 0;  // offset of the best whole-frame match (first tile when tiled)
  int dx = 0;
  double objective = 0.0;       // mean |subtract(live, shift(mask))| at the chosen offset(s)
  double zero_objective = 0.0;  // the same objective at offset (0, 0)
};

// Integer shift with edge replication: out(y, x) = in(y - dy, x - dx).
ImageFrame shift_frame(const ImageFrame& frame, int dy, int dx);

// Exhaustive integer translation search minimizing the mean absolute residual
// of subtract(live, shift(mask)). Ties go to the smallest offset magnitude,
// then lexicographic (dy, dx).
RegistrationResult translation_registration(const ImageFrame& live, const ImageFrame& mask,
                                            const RegistrationConfig& cfg = {});
ImageFrame translation_registration_subtract(const ImageFrame& live, const ImageFrame& mask,
                                             const RegistrationConfig& cfg = {});

// Live-only synthesis ablation: same architecture with a one-channel head.
Network<float> live_only_build(ArchConfig arch, std::uint64_t seed);

}  // namespace vccdsa
