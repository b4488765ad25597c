#include "vccdsa/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "vccdsa/error.hpp"
#include "vccdsa/phantom.hpp"

namespace vccdsa {

void RegistrationConfig::validate() const {
  if (search_radius < 0) throw ConfigError("registration search radius must be >= 0");
  if (step < 1) throw ConfigError("registration step must be >= 1");
  if (tile_size < 0) throw ConfigError("registration tile size must be >= 0");
}

ImageFrame shift_frame(const ImageFrame& frame, int dy, int dx) {
  const int h = frame.height(), w = frame.width();
  ImageFrame out(h, w);
  for (int y = 0; y < h; ++y) {
    const int sy = std::clamp(y - dy, 0, h - 1);
    for (int x = 0; x < w; ++x) out(y, x) = frame(sy, std::clamp(x - dx, 0, w - 1));
  }
  return out;
}

namespace {

// Mean clip(live - shift(mask), 0, 1) over a window, sampling the shifted
// mask with edge replication over the whole frame.
double window_objective(const ImageFrame& live, const ImageFrame& mask, int dy, int dx, int y0, int x0, int y1,
                        int x1) {
  const int h = mask.height(), w = mask.width();
  double s = 0.0;
  for (int y = y0; y < y1; ++y) {
    const int sy = std::clamp(y - dy, 0, h - 1);
    for (int x = x0; x < x1; ++x) {
      const float r = live(y, x) - mask(sy, std::clamp(x - dx, 0, w - 1));
      s += std::clamp(r, 0.0f, 1.0f);
    }
  }
  return s / static_cast<double>((y1 - y0) * (x1 - x0));
}

struct Offset {
  int dy;
  int dx;
  double objective;
};

// Deterministic arg-min with the documented tie-break.
Offset search_window(const ImageFrame& live, const ImageFrame& mask, const RegistrationConfig& cfg, int y0, int x0,
                     int y1, int x1) {
  Offset best{0, 0, window_objective(live, mask, 0, 0, y0, x0, y1, x1)};
  const int r = cfg.search_radius;
  for (int dy = -r; dy <= r; dy += cfg.step) {
    for (int dx = -r; dx <= r; dx += cfg.step) {
      if (dy == 0 && dx == 0) continue;
      const double obj = window_objective(live, mask, dy, dx, y0, x0, y1, x1);
      const auto key = std::make_tuple(obj, dy * dy + dx * dx, dy, dx);
      const auto best_key = std::make_tuple(best.objective, best.dy * best.dy + best.dx * best.dx, best.dy, best.dx);
      if (key < best_key) best = {dy, dx, obj};
    }
  }
  return best;
}

}  // namespace

RegistrationResult translation_registration(const ImageFrame& live, const ImageFrame& mask,
                                            const RegistrationConfig& cfg) {
  require_same_shape(live, mask, "translation_registration_subtract");
  cfg.validate();
  const int h = live.height(), w = live.width();
  RegistrationResult res;
  res.zero_objective = window_objective(live, mask, 0, 0, 0, 0, h, w);
  if (cfg.tile_size == 0 || (cfg.tile_size >= h && cfg.tile_size >= w)) {
    const Offset best = search_window(live, mask, cfg, 0, 0, h, w);
    res.dy = best.dy;
    res.dx = best.dx;
    res.objective = best.objective;
    res.subtraction = subtract(live, shift_frame(mask, best.dy, best.dx));
    return res;
  }
  res.subtraction = ImageFrame(h, w);
  double total = 0.0;
  bool first = true;
  for (int y0 = 0; y0 < h; y0 += cfg.tile_size) {
    for (int x0 = 0; x0 < w; x0 += cfg.tile_size) {
      const int y1 = std::min(h, y0 + cfg.tile_size), x1 = std::min(w, x0 + cfg.tile_size);
      const Offset best = search_window(live, mask, cfg, y0, x0, y1, x1);
      if (first) {
        res.dy = best.dy;
        res.dx = best.dx;
        first = false;
      }
      for (int y = y0; y < y1; ++y) {
        const int sy = std::clamp(y - best.dy, 0, h - 1);
        for (int x = x0; x < x1; ++x) {
          const float v = live(y, x) - mask(sy, std::clamp(x - best.dx, 0, w - 1));
          res.subtraction(y, x) = std::clamp(v, 0.0f, 1.0f);
          total += res.subtraction(y, x);
        }
      }
    }
  }
  res.objective = total / static_cast<double>(h * w);
  return res;
}

ImageFrame translation_registration_subtract(const ImageFrame& live, const ImageFrame& mask,
                                             const RegistrationConfig& cfg) {
  return translation_registration(live, mask, cfg).subtraction;
}

Network<float> live_only_build(ArchConfig arch, std::uint64_t seed) {
  arch.input_channels = 1;
  return Network<float>(arch, seed);
}

}  // namespace vccdsa
