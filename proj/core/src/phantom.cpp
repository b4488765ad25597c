#include "vccdsa/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "vccdsa/error.hpp"
#include "vccdsa/rng.hpp"

namespace vccdsa {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr int kSupersample = 3;

struct Point {
  double x;
  double y;
};

struct Node {
  double x;
  double y;
  double r;
};

struct Segment {
  std::vector<Node> nodes;
  double heading = 0.0;
  int depth = 0;
  double length = 0.0;
};

// Supersampled canvas combining structures by per-subsample maximum.
class Canvas {
 public:
  Canvas(int height, int width)
      : height_(height * kSupersample), width_(width * kSupersample),
        values_(static_cast<std::size_t>(height_) * width_, 0.0) {}

  // Tube with chord-length (Lambert-Beer) profile between two nodes.
  void capsule(const Node& a, const Node& b, double amp_a, double amp_b) {
    const double s = kSupersample;
    const double ax = (a.x + 0.5) * s - 0.5, ay = (a.y + 0.5) * s - 0.5;
    const double bx = (b.x + 0.5) * s - 0.5, by = (b.y + 0.5) * s - 0.5;
    const double ra = a.r * s, rb = b.r * s;
    const double rmax = std::max(ra, rb);
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - rmax - 1)));
    const int x1 = std::min(width_ - 1, static_cast<int>(std::ceil(std::max(ax, bx) + rmax + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - rmax - 1)));
    const int y1 = std::min(height_ - 1, static_cast<int>(std::ceil(std::max(ay, by) + rmax + 1)));
    const double ex = bx - ax, ey = by - ay;
    const double len2 = ex * ex + ey * ey;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        double t = len2 > 0 ? ((x - ax) * ex + (y - ay) * ey) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double px = ax + t * ex - x, py = ay + t * ey - y;
        const double d2 = px * px + py * py;
        const double r = ra + t * (rb - ra);
        if (d2 >= r * r) continue;
        const double amp = amp_a + t * (amp_b - amp_a);
        const double v = amp * std::sqrt(1.0 - d2 / (r * r));
        double& cell = values_[static_cast<std::size_t>(y) * width_ + x];
        cell = std::max(cell, v);
      }
    }
  }

  ImageFrame downsample(int height, int width) const {
    ImageFrame out(height, width);
    const double norm = 1.0 / (kSupersample * kSupersample);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double s = 0.0;
        for (int dy = 0; dy < kSupersample; ++dy) {
          for (int dx = 0; dx < kSupersample; ++dx) {
            s += values_[static_cast<std::size_t>(y * kSupersample + dy) * width_ + x * kSupersample + dx];
          }
        }
        out(y, x) = static_cast<float>(s * norm);
      }
    }
    return out;
  }

 private:
  int height_;
  int width_;
  std::vector<double> values_;
};

double smooth_step(double signed_distance, double sharpness) {
  return std::clamp(0.5 - signed_distance * sharpness, 0.0, 1.0);
}

Point border_point(Rng& rng, int height, int width) {
  const int side = rng.uniform_int(4);
  const double u = rng.uniform(0.15, 0.85);
  switch (side) {
    case 0: return {u * (width - 1), 0.0};
    case 1: return {u * (width - 1), static_cast<double>(height - 1)};
    case 2: return {0.0, u * (height - 1)};
    default: return {static_cast<double>(width - 1), u * (height - 1)};
  }
}

// Random-walk centerline with linearly tapering radius.
Segment grow_segment(Rng& rng, Point start, double heading, double length, double r_start, double r_end,
                     double tortuosity, double step, int height, int width, int depth) {
  Segment seg;
  seg.depth = depth;
  seg.heading = heading;
  const int steps = std::max(2, static_cast<int>(length / step));
  double x = start.x, y = start.y, h = heading;
  seg.nodes.push_back({x, y, r_start});
  const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
  for (int i = 1; i <= steps; ++i) {
    h += tortuosity * std::sqrt(step) * rng.normal();
    // Near the border bend back towards the interior.
    const double margin = 0.08 * std::min(width, height);
    if (x < margin || y < margin || x > width - 1 - margin || y > height - 1 - margin) {
      const double to_center = std::atan2(cy - y, cx - x);
      double diff = std::remainder(to_center - h, 2.0 * std::numbers::pi);
      h += 0.15 * diff;
    }
    x += step * std::cos(h);
    y += step * std::sin(h);
    const double t = static_cast<double>(i) / steps;
    seg.nodes.push_back({x, y, r_start + t * (r_end - r_start)});
    if (x < -2 || y < -2 || x > width + 1 || y > height + 1) break;
  }
  seg.length = step * static_cast<double>(seg.nodes.size() - 1);
  return seg;
}

}  // namespace

void PhantomConfig::validate() const {
  if (height <= 0 || width <= 0) throw ConfigError("phantom image size must be positive");
  try {
    ImageFrame::validate_dims(height, width);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  if (vessel.branch_count < 0 || background.bone_count < 0 || distractor.tube_count < 0) {
    throw ConfigError("phantom structure counts must be >= 0");
  }
  if (vessel.max_depth < 0) throw ConfigError("vessel max_depth must be >= 0");
  if (vessel.radius_min <= 0 || vessel.radius_max < vessel.radius_min) {
    throw ConfigError("vessel radius range must satisfy 0 < radius_min <= radius_max");
  }
  if (vessel.peak < 0 || vessel.peak > 0.5) throw ConfigError("vessel peak must lie in [0, 0.5]");
  if (background.peak < 0 || background.peak > 0.9) throw ConfigError("background peak must lie in [0, 0.9]");
  if (background.texture_scale <= 0) throw ConfigError("texture_scale must be positive");
  if (background.edge_sharpness <= 0) throw ConfigError("edge_sharpness must be positive");
  if (mask_frames < 2) throw DataError("mask frame count must be >= 2 (consistency needs two distinct masks)");
  if (live_frames < 1) throw ConfigError("live frame count must be >= 1");
  if (contrast_ramp < 0) throw ConfigError("contrast ramp must be >= 0");
  if (noise_sigma < 0) throw ConfigError("noise_sigma must be >= 0");
}

double PhantomConfig::length_scale() const { return std::min(height, width) / 256.0; }

MotionField MotionField::identity() { return MotionField{}; }

bool MotionField::is_identity() const noexcept {
  if (rotation_deg != 0.0 || dx != 0.0 || dy != 0.0 || sx != 1.0 || sy != 1.0 || shear != 0.0) return false;
  for (double v : elastic_x) {
    if (v != 0.0) return false;
  }
  for (double v : elastic_y) {
    if (v != 0.0) return false;
  }
  return true;
}

void MotionField::source_position(double x, double y, int height, int width, double& src_x,
                                  double& src_y) const {
  double ex = 0.0, ey = 0.0;
  if (!elastic_x.empty() && elastic_grid >= 2) {
    const int g = elastic_grid;
    const double gx = width > 1 ? x / (width - 1) * (g - 1) : 0.0;
    const double gy = height > 1 ? y / (height - 1) * (g - 1) : 0.0;
    const int ix = std::clamp(static_cast<int>(std::floor(gx)), 0, g - 2);
    const int iy = std::clamp(static_cast<int>(std::floor(gy)), 0, g - 2);
    const double fx = gx - ix, fy = gy - iy;
    auto at = [g](const std::vector<double>& v, int r, int c) { return v[static_cast<std::size_t>(r) * g + c]; };
    ex = (1 - fy) * ((1 - fx) * at(elastic_x, iy, ix) + fx * at(elastic_x, iy, ix + 1)) +
         fy * ((1 - fx) * at(elastic_x, iy + 1, ix) + fx * at(elastic_x, iy + 1, ix + 1));
    ey = (1 - fy) * ((1 - fx) * at(elastic_y, iy, ix) + fx * at(elastic_y, iy, ix + 1)) +
         fy * ((1 - fx) * at(elastic_y, iy + 1, ix) + fx * at(elastic_y, iy + 1, ix + 1));
  }
  const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
  // Undo elastic, then translation, then A = Rot * Shear * Scale about the center.
  const double qx = x - ex - cx - dx;
  const double qy = y - ey - cy - dy;
  const double th = rotation_deg * kDegToRad;
  const double c = std::cos(th), s = std::sin(th);
  const double a00 = c * sx, a01 = (c * shear - s) * sy;
  const double a10 = s * sx, a11 = (s * shear + c) * sy;
  const double det = a00 * a11 - a01 * a10;
  src_x = (a11 * qx - a01 * qy) / det + cx;
  src_y = (-a10 * qx + a00 * qy) / det + cy;
}

double MotionField::mean_displacement(int height, int width) const {
  if (is_identity()) return 0.0;
  constexpr int kSamples = 32;
  double total = 0.0;
  for (int iy = 0; iy < kSamples; ++iy) {
    for (int ix = 0; ix < kSamples; ++ix) {
      const double x = (ix + 0.5) * width / kSamples - 0.5;
      const double y = (iy + 0.5) * height / kSamples - 0.5;
      double sx_, sy_;
      source_position(x, y, height, width, sx_, sy_);
      total += std::hypot(sx_ - x, sy_ - y);
    }
  }
  return total / (kSamples * kSamples);
}

MotionBounds motion_bounds(int level, int height, int width) {
  if (level < 0 || level > kMaxMotionLevel) {
    throw ArgumentError("motion level must lie in [0, 5], got " + std::to_string(level));
  }
  const double px = std::min(height, width) / 256.0;
  const double l = level;
  return MotionBounds{l * 1.0, l * 2.0 * px, l * 0.01, l * 0.005, l * 0.75 * px};
}

MotionField sample_motion(int level, std::uint64_t seed, int height, int width) {
  const MotionBounds b = motion_bounds(level, height, width);
  MotionField m;
  m.level = level;
  m.seed = seed;
  if (level == 0) return m;
  // Fixed draw order: the same seed at every level gives draws proportional to the level.
  Rng rng(seed);
  m.rotation_deg = rng.symmetric(b.rotation_deg);
  m.dx = rng.symmetric(b.translation_px);
  m.dy = rng.symmetric(b.translation_px);
  m.sx = 1.0 + rng.symmetric(b.scale);
  m.sy = 1.0 + rng.symmetric(b.scale);
  m.shear = rng.symmetric(b.shear);
  m.elastic_amplitude = b.elastic_px;
  const std::size_t n = static_cast<std::size_t>(m.elastic_grid) * m.elastic_grid;
  m.elastic_x.resize(n);
  m.elastic_y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.elastic_x[i] = rng.symmetric(b.elastic_px);
    m.elastic_y[i] = rng.symmetric(b.elastic_px);
  }
  return m;
}

ImageFrame warp(const ImageFrame& frame, const MotionField& motion) {
  if (frame.empty()) throw ArgumentError("warp: empty frame");
  if (motion.is_identity()) return frame;
  const int h = frame.height(), w = frame.width();
  ImageFrame out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double src_x, src_y;
      motion.source_position(x, y, h, w, src_x, src_y);
      src_x = std::clamp(src_x, 0.0, static_cast<double>(w - 1));
      src_y = std::clamp(src_y, 0.0, static_cast<double>(h - 1));
      const int x0 = static_cast<int>(std::floor(src_x));
      const int y0 = static_cast<int>(std::floor(src_y));
      const int x1 = std::min(x0 + 1, w - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const double fx = src_x - x0, fy = src_y - y0;
      const double v = (1 - fy) * ((1 - fx) * frame(y0, x0) + fx * frame(y0, x1)) +
                       fy * ((1 - fx) * frame(y1, x0) + fx * frame(y1, x1));
      out(y, x) = static_cast<float>(v);
    }
  }
  return out;
}

ImageFrame generate_vessel_tree(const PhantomConfig& config, std::uint64_t seed) {
  config.validate();
  const int h = config.height, w = config.width;
  const VesselParams& vp = config.vessel;
  if (vp.branch_count == 0) return ImageFrame(h, w);

  Rng rng(derive_seed(seed, "vessel_tree"));
  const double scale = config.length_scale();
  const double r_max = vp.radius_max * scale;
  const double r_min = vp.radius_min * scale;
  const double step = std::max(0.35, 1.5 * scale);

  std::vector<Segment> segments;
  {
    const Point start = border_point(rng, h, w);
    const double to_center = std::atan2(0.5 * (h - 1) - start.y, 0.5 * (w - 1) - start.x);
    const double heading = to_center + rng.symmetric(0.4);
    const double length = rng.uniform(0.75, 1.05) * std::min(h, w);
    segments.push_back(grow_segment(rng, start, heading, length, r_max, std::max(r_min, 0.6 * r_max),
                                    vp.tortuosity, step, h, w, 0));
  }
  for (int b = 1; b < vp.branch_count; ++b) {
    std::vector<int> candidates;
    for (int i = 0; i < static_cast<int>(segments.size()); ++i) {
      if (segments[i].depth < vp.max_depth && segments[i].nodes.size() >= 6) candidates.push_back(i);
    }
    if (candidates.empty()) break;
    const Segment& parent = segments[candidates[rng.uniform_int(static_cast<int>(candidates.size()))]];
    const int n = static_cast<int>(parent.nodes.size());
    const int at = std::clamp(static_cast<int>(rng.uniform(0.1, 0.8) * n), 1, n - 2);
    const Node& p0 = parent.nodes[at - 1];
    const Node& p1 = parent.nodes[at + 1];
    const double local = std::atan2(p1.y - p0.y, p1.x - p0.x);
    const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
    const double heading = local + side * rng.uniform(25.0, 60.0) * kDegToRad;
    const double r_start = std::max(r_min, 0.72 * parent.nodes[at].r);
    const double length = rng.uniform(0.35, 0.65) * std::max(parent.length, 0.3 * std::min(h, w));
    segments.push_back(grow_segment(rng, {parent.nodes[at].x, parent.nodes[at].y}, heading, length, r_start,
                                    std::max(r_min, 0.6 * r_start), vp.tortuosity, step, h, w,
                                    parent.depth + 1));
  }

  Canvas canvas(h, w);
  auto amplitude = [&](double r) { return vp.peak * (0.35 + 0.65 * std::min(1.0, r / r_max)); };
  for (const Segment& seg : segments) {
    for (std::size_t i = 1; i < seg.nodes.size(); ++i) {
      const Node& a = seg.nodes[i - 1];
      const Node& b = seg.nodes[i];
      canvas.capsule(a, b, amplitude(a.r), amplitude(b.r));
    }
  }
  ImageFrame out = canvas.downsample(h, w);
  out.clip(0.0f, static_cast<float>(vp.peak));
  return out;
}

ImageFrame generate_background(const PhantomConfig& config, std::uint64_t seed) {
  config.validate();
  const int h = config.height, w = config.width;
  const BackgroundParams& bp = config.background;
  const double scale = config.length_scale();
  Rng rng(derive_seed(seed, "background"));

  std::vector<double> field(static_cast<std::size_t>(h) * w, bp.base_level);
  auto at = [&](int y, int x) -> double& { return field[static_cast<std::size_t>(y) * w + x]; };

  // Smooth tissue texture: a few low-frequency plane waves.
  if (bp.texture_amplitude > 0) {
    constexpr int kWaves = 4;
    for (int k = 0; k < kWaves; ++k) {
      const double wavelength = bp.texture_scale * scale * rng.uniform(0.7, 1.6);
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double amp = bp.texture_amplitude / kWaves * rng.uniform(0.5, 1.0);
      const double kx = 2.0 * std::numbers::pi * std::cos(angle) / wavelength;
      const double ky = 2.0 * std::numbers::pi * std::sin(angle) / wavelength;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) at(y, x) += amp * std::sin(kx * x + ky * y + phase);
      }
    }
  }

  // Bone-like ellipses and annuli with sharp edges.
  const double dim = std::min(h, w);
  for (int b = 0; b < bp.bone_count; ++b) {
    const double cx = rng.uniform(0.15, 0.85) * (w - 1);
    const double cy = rng.uniform(0.15, 0.85) * (h - 1);
    const double a = rng.uniform(0.12, 0.35) * dim;
    const double bb = rng.uniform(0.08, 0.25) * dim;
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double intensity = rng.uniform(bp.bone_intensity_min, bp.bone_intensity_max);
    const bool annulus = rng.bernoulli(0.4);
    const double inner = annulus ? rng.uniform(0.55, 0.8) : 0.0;
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double u = (x - cx) * ca + (y - cy) * sa;
        const double v = -(x - cx) * sa + (y - cy) * ca;
        const double rho = std::sqrt((u / a) * (u / a) + (v / bb) * (v / bb));
        const double radial = std::min(a, bb);
        double val = smooth_step((rho - 1.0) * radial, bp.edge_sharpness);
        if (annulus) val -= 0.75 * smooth_step((rho - inner) * radial, bp.edge_sharpness);
        at(y, x) += intensity * val;
      }
    }
  }

  // Thin curved tubes (catheters, oxygen tubes) that look like vessels.
  if (config.distractor.tube_count > 0) {
    const DistractorParams& dp = config.distractor;
    Canvas canvas(h, w);
    for (int t = 0; t < dp.tube_count; ++t) {
      const Point p0 = border_point(rng, h, w);
      Point p2 = border_point(rng, h, w);
      if (std::hypot(p2.x - p0.x, p2.y - p0.y) < 0.3 * dim) {
        p2 = {static_cast<double>(w - 1) - p0.x, static_cast<double>(h - 1) - p0.y};
      }
      const double len = std::hypot(p2.x - p0.x, p2.y - p0.y);
      const double nx = -(p2.y - p0.y) / std::max(len, 1e-9), ny = (p2.x - p0.x) / std::max(len, 1e-9);
      const double bend = rng.symmetric(dp.curvature) * len;
      const Point p1{0.5 * (p0.x + p2.x) + nx * bend, 0.5 * (p0.y + p2.y) + ny * bend};
      const double radius = std::max(0.5, dp.radius * scale * rng.uniform(0.7, 1.2));
      const double intensity = rng.uniform(dp.intensity_min, dp.intensity_max);
      const int pieces = std::max(8, static_cast<int>(len / 0.5));
      Node prev{p0.x, p0.y, radius};
      for (int i = 1; i <= pieces; ++i) {
        const double s = static_cast<double>(i) / pieces;
        const double x = (1 - s) * (1 - s) * p0.x + 2 * (1 - s) * s * p1.x + s * s * p2.x;
        const double y = (1 - s) * (1 - s) * p0.y + 2 * (1 - s) * s * p1.y + s * s * p2.y;
        const Node cur{x, y, radius};
        canvas.capsule(prev, cur, intensity, intensity);
        prev = cur;
      }
    }
    const ImageFrame tubes = canvas.downsample(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) at(y, x) += tubes(y, x);
    }
  }

  ImageFrame out(h, w);
  for (std::size_t i = 0; i < field.size(); ++i) {
    out.data()[i] = static_cast<float>(std::clamp(field[i], 0.0, bp.peak));
  }
  return out;
}

ImageFrame compose_live(const ImageFrame& background, const ImageFrame& vessel, double contrast_fraction) {
  require_same_shape(background, vessel, "compose_live");
  if (!(contrast_fraction >= 0.0 && contrast_fraction <= 1.0)) {
    throw ArgumentError("compose_live: contrast fraction must lie in [0, 1]");
  }
  const float c = static_cast<float>(contrast_fraction);
  ImageFrame out = background;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = std::clamp(background.data()[i] + c * vessel.data()[i], 0.0f, 1.0f);
  }
  return out;
}

ImageFrame subtract(const ImageFrame& live, const ImageFrame& mask) {
  require_same_shape(live, mask, "subtract");
  ImageFrame out = live;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = std::clamp(live.data()[i] - mask.data()[i], 0.0f, 1.0f);
  }
  return out;
}

double contrast_fraction(int live_index, int ramp) {
  if (ramp <= 0) return 1.0;
  return std::min(1.0, static_cast<double>(live_index + 1) / ramp);
}

namespace {

void add_noise(ImageFrame& frame, double sigma, std::uint64_t seed) {
  if (sigma <= 0) return;
  Rng rng(seed);
  for (float& v : frame.values()) v = static_cast<float>(v + sigma * rng.normal());
  frame.clip();
}

}  // namespace

DSASequence make_sequence(const PhantomConfig& config, int level, std::uint64_t seed) {
  config.validate();
  motion_bounds(level);  // validates level

  DSASequence seq;
  seq.id = "seq_" + std::to_string(seed);
  seq.config = config;
  seq.level = level;
  seq.seed = seed;
  seq.background_canonical = generate_background(config, derive_seed(seed, "sequence_background"));
  seq.vessel_canonical = generate_vessel_tree(config, derive_seed(seed, "sequence_vessel"));
  const ImageFrame& B = seq.background_canonical;
  const ImageFrame& V = seq.vessel_canonical;

  for (int k = 0; k < config.mask_frames; ++k) {
    MotionField m = sample_motion(level, derive_seed(seed, "mask_motion", {static_cast<std::uint64_t>(k)}),
                                  config.height, config.width);
    ImageFrame mask = warp(B, m);
    add_noise(mask, config.noise_sigma, derive_seed(seed, "mask_noise", {static_cast<std::uint64_t>(k)}));
    seq.masks.push_back(std::move(mask));
    seq.mask_motion.push_back(std::move(m));
  }

  for (int t = 0; t < config.live_frames; ++t) {
    MotionField m = sample_motion(level, derive_seed(seed, "live_motion", {static_cast<std::uint64_t>(t)}),
                                  config.height, config.width);
    const double c = contrast_fraction(t, config.contrast_ramp);
    const ImageFrame bw = warp(B, m);
    const ImageFrame vw = warp(V, m);
    ImageFrame live = compose_live(bw, vw, c);
    add_noise(live, config.noise_sigma, derive_seed(seed, "live_noise", {static_cast<std::uint64_t>(t)}));
    ImageFrame gt = vw;
    const float cf = static_cast<float>(c);
    for (float& v : gt.values()) v *= cf;
    seq.weak_labels.push_back(subtract(live, seq.masks[0]));
    seq.lives.push_back(std::move(live));
    seq.vessels_gt.push_back(std::move(gt));
    seq.live_motion.push_back(std::move(m));
    seq.contrast.push_back(c);
  }
  return seq;
}

}  // namespace vccdsa
