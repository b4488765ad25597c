#pragma once

#include <cstdint>
#include <string>

#include "vccdsa/image.hpp"

namespace vccdsa {

struct MixupRecord {
  bool applied = false;
  std::uint64_t entry_id = 0;
  std::string source_sequence;
};

struct SampleProvenance {
  std::string sequence_id;
  int live_index = 0;
  int mask_i_index = 0;
  int mask_j_index = 0;
  MixupRecord mixup;
};

// One training combination: two distinct masks of the same sequence, a live
// frame of that sequence and its weak label.
struct TrainSample {
  ImageFrame mask_i;
  ImageFrame mask_j;
  ImageFrame live;
  ImageFrame weak_label;
  SampleProvenance provenance;
};

}  // namespace vccdsa
