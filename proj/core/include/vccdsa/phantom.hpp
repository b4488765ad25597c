#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vccdsa/image.hpp"

namespace vccdsa {

// All lengths below are given at the 256x256 reference scale and are scaled
// by min(height, width) / 256 when rasterizing.
struct VesselParams {
  int branch_count = 8;       // total centerline segments, 0 gives an empty tree
  int max_depth = 3;          // trunk is depth 0
  double radius_min = 2.4;    // px at 256
  double radius_max = 7.0;    // px at 256
  double tortuosity = 0.18;   // std-dev of heading change per unit step (radians)
  double peak = 0.5;          // v_max
};

struct BackgroundParams {
  double base_level = 0.14;
  int bone_count = 3;              // ellipses / annuli
  double bone_intensity_min = 0.1;
  double bone_intensity_max = 0.2;
  double texture_scale = 48.0;     // px at 256, wavelength of the tissue texture
  double texture_amplitude = 0.04;
  double edge_sharpness = 1.5;     // inverse edge ramp width in px
  double peak = 0.5;               // upper clip of the background
};

struct DistractorParams {
  int tube_count = 1;
  double curvature = 0.35;         // bend of the tube relative to its length
  double intensity_min = 0.06;
  double intensity_max = 0.2;
  double radius = 4.0;             // px at 256
};

struct PhantomConfig {
  int height = 64;
  int width = 64;
  VesselParams vessel;
  BackgroundParams background;
  DistractorParams distractor;
  int contrast_ramp = 3;    // frames until full opacification
  int mask_frames = 4;
  int live_frames = 6;
  double noise_sigma = 0.0; // optional additive Gaussian noise on masks and lives
  std::uint64_t seed = 0;

  void validate() const;
  double length_scale() const;  // min(height, width) / 256
};

// Parametric warp R: affine (rotation, scale, shear, translation) followed by a
// low-frequency elastic displacement sampled on a control grid.
struct MotionField {
  int level = 0;
  double rotation_deg = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  double sx = 1.0;
  double sy = 1.0;
  double shear = 0.0;
  double elastic_amplitude = 0.0;
  int elastic_grid = 8;
  std::vector<double> elastic_x;  // elastic_grid^2 control displacements, px
  std::vector<double> elastic_y;
  std::uint64_t seed = 0;

  static MotionField identity();
  bool is_identity() const noexcept;

  // Displacement of output pixel (x, y): source = (x, y) - displacement.
  void source_position(double x, double y, int height, int width, double& sx_out, double& sy_out) const;
  double mean_displacement(int height, int width) const;
};

struct MotionBounds {
  double rotation_deg;
  double translation_px;
  double scale;
  double shear;
  double elastic_px;
};

constexpr int kMaxMotionLevel = 5;

MotionBounds motion_bounds(int level, int height = 256, int width = 256);
MotionField sample_motion(int level, std::uint64_t seed, int height = 256, int width = 256);

// Bilinear resampling with edge replication.
ImageFrame warp(const ImageFrame& frame, const MotionField& motion);

ImageFrame generate_vessel_tree(const PhantomConfig& config, std::uint64_t seed);
ImageFrame generate_background(const PhantomConfig& config, std::uint64_t seed);

// Lambert-Beer additive composition: clip(background + fraction * vessel, 0, 1).
ImageFrame compose_live(const ImageFrame& background, const ImageFrame& vessel, double contrast_fraction);

// clip(live - mask, 0, 1)
ImageFrame subtract(const ImageFrame& live, const ImageFrame& mask);

double contrast_fraction(int live_index, int ramp);

struct DSASequence {
  std::string id;
  PhantomConfig config;
  int level = 0;
  std::uint64_t seed = 0;
  std::vector<ImageFrame> masks;
  std::vector<ImageFrame> lives;
  std::vector<ImageFrame> vessels_gt;
  std::vector<ImageFrame> weak_labels;
  ImageFrame background_canonical;
  ImageFrame vessel_canonical;
  std::vector<MotionField> mask_motion;
  std::vector<MotionField> live_motion;
  std::vector<double> contrast;
};

DSASequence make_sequence(const PhantomConfig& config, int level, std::uint64_t seed);

}  // namespace vccdsa
