#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "vccdsa/image.hpp"
#include "vccdsa/rng.hpp"

namespace vccdsa::test {

inline ImageFrame random_frame(int h, int w, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  Rng rng(seed);
  ImageFrame f(h, w);
  for (float& v : f.values()) v = static_cast<float>(rng.uniform(lo, hi));
  return f;
}

inline ImageFrame constant_frame(int h, int w, float v) { return ImageFrame(h, w, v); }

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("vccdsa_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace vccdsa::test
