#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "test_support.hpp"
#include "vccdsa/error.hpp"
#include "vccdsa/phantom.hpp"

using namespace vccdsa;

namespace {

// Size of the largest 4-connected set of pixels whose forward-difference
// gradient magnitude exceeds thr.
int largest_gradient_component(const ImageFrame& f, double thr) {
  const int h = f.height(), w = f.width();
  auto grad = [&](int y, int x) {
    const double gx = x + 1 < w ? f(y, x + 1) - f(y, x) : 0.0;
    const double gy = y + 1 < h ? f(y + 1, x) - f(y, x) : 0.0;
    return std::hypot(gx, gy);
  };
  std::vector<char> seen(static_cast<std::size_t>(h * w), 0);
  int best = 0;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      if (seen[y0 * w + x0] || grad(y0, x0) <= thr) continue;
      std::vector<int> stack{y0 * w + x0};
      seen[y0 * w + x0] = 1;
      int n = 0;
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        ++n;
        const int py = p / w, px = p % w;
        const int nb[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
        for (const auto& d : nb) {
          const int qy = py + d[0], qx = px + d[1];
          if (qy < 0 || qx < 0 || qy >= h || qx >= w || seen[qy * w + qx] || grad(qy, qx) <= thr) continue;
          seen[qy * w + qx] = 1;
          stack.push_back(qy * w + qx);
        }
      }
      best = std::max(best, n);
    }
  }
  return best;
}

double mean_displacement_over_seeds(int level, int seeds) {
  double s = 0.0;
  for (int k = 0; k < seeds; ++k) s += sample_motion(level, 9000 + k, 64, 64).mean_displacement(64, 64);
  return s / seeds;
}

}  // namespace

TEST_SUITE("phantom") {
  TEST_CASE("empty tree rasterizes to zero") {
    PhantomConfig c;
    c.vessel.branch_count = 0;
    const ImageFrame v = generate_vessel_tree(c, 123);
    CHECK(v.max_value() == 0.0f);
    CHECK(v.min_value() == 0.0f);
  }

  TEST_CASE("generators are deterministic") {
    PhantomConfig c;
    CHECK(generate_vessel_tree(c, 42) == generate_vessel_tree(c, 42));
    CHECK(generate_background(c, 42) == generate_background(c, 42));
    CHECK(!(generate_vessel_tree(c, 42) == generate_vessel_tree(c, 43)));
    const DSASequence a = make_sequence(c, 3, 17), b = make_sequence(c, 3, 17);
    CHECK(a.masks == b.masks);
    CHECK(a.lives == b.lives);
    CHECK(a.weak_labels == b.weak_labels);
  }

  TEST_CASE("zero image size is a configuration error") {
    PhantomConfig c;
    c.height = 0;
    CHECK_THROWS_AS(generate_vessel_tree(c, 1), ConfigError);
    CHECK_THROWS_AS(generate_background(c, 1), ConfigError);
  }

  TEST_CASE("vessel values stay within [0, 0.5]") {
    PhantomConfig c;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const ImageFrame v = generate_vessel_tree(c, s);
      CHECK(v.min_value() >= 0.0f);
      CHECK(v.max_value() <= 0.5f);
    }
  }

  TEST_CASE("vessel occupancy lies in (0.5%, 20%) for 100 seeds") {
    // Measured over seeds 0..99 at 64x64: occupancy 6.6%..15.3%.
    PhantomConfig c;
    for (std::uint64_t s = 0; s < 100; ++s) {
      const ImageFrame v = generate_vessel_tree(c, s);
      const auto n = std::count_if(v.values().begin(), v.values().end(), [](float x) { return x > 0.01f; });
      const double frac = static_cast<double>(n) / static_cast<double>(v.size());
      CHECK(frac > 0.005);
      CHECK(frac < 0.20);
    }
  }

  TEST_CASE("background without structure is constant") {
    PhantomConfig c;
    c.background.bone_count = 0;
    c.distractor.tube_count = 0;
    c.background.texture_amplitude = 0.0;
    const ImageFrame b = generate_background(c, 5);
    CHECK(b.max_value() == b.min_value());
  }

  TEST_CASE("background stays within [0, 0.9]") {
    PhantomConfig c;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const ImageFrame b = generate_background(c, s);
      CHECK(b.min_value() >= 0.0f);
      CHECK(b.max_value() <= 0.9f);
    }
  }

  TEST_CASE("default background has bone edges") {
    // Reference seeds 0..19: smallest largest-component size measured at 7 px.
    PhantomConfig c;
    for (std::uint64_t s = 0; s < 20; ++s) {
      CAPTURE(s);
      CHECK(largest_gradient_component(generate_background(c, s), 0.1) >= 4);
    }
  }

  TEST_CASE("level 0 motion is the exact identity") {
    for (std::uint64_t s = 0; s < 10; ++s) {
      const MotionField m = sample_motion(0, s);
      CHECK(m.is_identity());
      CHECK(m.rotation_deg == 0.0);
      CHECK(m.dx == 0.0);
      CHECK(m.dy == 0.0);
      CHECK(m.sx == 1.0);
      CHECK(m.sy == 1.0);
      CHECK(m.shear == 0.0);
      CHECK(m.elastic_amplitude == 0.0);
    }
  }

  TEST_CASE("motion parameters respect the level bounds") {
    for (int level = 1; level <= kMaxMotionLevel; ++level) {
      const MotionBounds b = motion_bounds(level);
      for (std::uint64_t s = 0; s < 200; ++s) {
        const MotionField m = sample_motion(level, s);
        CHECK(std::abs(m.rotation_deg) <= b.rotation_deg);
        CHECK(std::abs(m.dx) <= b.translation_px);
        CHECK(std::abs(m.dy) <= b.translation_px);
        CHECK(std::abs(m.sx - 1.0) <= b.scale);
        CHECK(std::abs(m.sy - 1.0) <= b.scale);
        CHECK(std::abs(m.shear) <= b.shear);
        for (double e : m.elastic_x) CHECK(std::abs(e) <= b.elastic_px);
        for (double e : m.elastic_y) CHECK(std::abs(e) <= b.elastic_px);
      }
    }
  }

  TEST_CASE("motion bounds are non-decreasing in level") {
    for (int level = 1; level <= kMaxMotionLevel; ++level) {
      const MotionBounds a = motion_bounds(level - 1), b = motion_bounds(level);
      CHECK(b.rotation_deg >= a.rotation_deg);
      CHECK(b.translation_px >= a.translation_px);
      CHECK(b.scale >= a.scale);
      CHECK(b.shear >= a.shear);
      CHECK(b.elastic_px >= a.elastic_px);
    }
  }

  TEST_CASE("level out of range is an argument error") {
    CHECK_THROWS_AS(sample_motion(-1, 0), ArgumentError);
    CHECK_THROWS_AS(sample_motion(6, 0), ArgumentError);
  }

  TEST_CASE("level 3 mean displacement lies between levels 2 and 4") {
    const double l2 = mean_displacement_over_seeds(2, 1000);
    const double l3 = mean_displacement_over_seeds(3, 1000);
    const double l4 = mean_displacement_over_seeds(4, 1000);
    CHECK(l2 < l3);
    CHECK(l3 < l4);
  }

  TEST_CASE("mean displacement increases strictly from level 1 to 5") {
    double prev = 0.0;
    for (int level = 1; level <= kMaxMotionLevel; ++level) {
      const double d = mean_displacement_over_seeds(level, 500);
      CHECK(d > prev);
      prev = d;
    }
  }

  TEST_CASE("identity warp is bit-identical") {
    const ImageFrame f = test::random_frame(32, 48, 9);
    CHECK(warp(f, MotionField::identity()) == f);
  }

  TEST_CASE("integer translation shifts interior pixels exactly") {
    const ImageFrame f = test::random_frame(32, 32, 10);
    MotionField m;
    m.dx = 3.0;
    const ImageFrame g = warp(f, m);
    for (int y = 0; y < 32; ++y)
      for (int x = 3; x < 32; ++x) CHECK(g(y, x) == f(y, x - 3));
  }

  TEST_CASE("rotating by 5 degrees and back loses little") {
    // Reference frames at 256x256: worst interior MAD over seeds 0..9 measured at 0.003.
    PhantomConfig c;
    c.height = c.width = 256;
    MotionField fwd, back;
    fwd.rotation_deg = 5.0;
    back.rotation_deg = -5.0;
    for (std::uint64_t s = 0; s < 5; ++s) {
      const ImageFrame f = compose_live(generate_background(c, s), generate_vessel_tree(c, s), 1.0);
      const ImageFrame g = warp(warp(f, fwd), back);
      double d = 0.0;
      int n = 0;
      for (int y = 32; y < 224; ++y)
        for (int x = 32; x < 224; ++x, ++n) d += std::abs(g(y, x) - f(y, x));
      CHECK(d / n < 0.01);
    }
  }

  TEST_CASE("compose_live follows additive composition") {
    const ImageFrame b = test::random_frame(16, 16, 4, 0.0f, 0.6f);
    CHECK(compose_live(b, ImageFrame(16, 16), 0.7) == b);
    CHECK(compose_live(b, test::random_frame(16, 16, 5, 0.0f, 0.4f), 0.0) == b);
    const ImageFrame mixed = compose_live(ImageFrame(16, 16, 0.3f), ImageFrame(16, 16, 0.4f), 0.5);
    for (float v : mixed.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-7));
    CHECK_THROWS_AS(compose_live(b, ImageFrame(16, 24), 0.5), ArgumentError);
  }

  TEST_CASE("subtract clips and cancels") {
    const ImageFrame x = test::random_frame(16, 16, 6);
    CHECK(subtract(x, x).max_value() == 0.0f);
    const ImageFrame b = test::random_frame(16, 16, 7, 0.0f, 0.5f);
    const ImageFrame v = test::random_frame(16, 16, 8, 0.0f, 0.4f);
    const ImageFrame live = compose_live(b, v, 1.0);
    CHECK(max_abs_diff(subtract(live, b), v) < 1e-6);
    CHECK_THROWS_AS(subtract(x, ImageFrame(16, 24)), ArgumentError);
  }

  TEST_CASE("contrast ramps linearly then holds") {
    CHECK(contrast_fraction(0, 3) == doctest::Approx(1.0 / 3));
    CHECK(contrast_fraction(1, 3) == doctest::Approx(2.0 / 3));
    CHECK(contrast_fraction(2, 3) == 1.0);
    CHECK(contrast_fraction(7, 3) == 1.0);
  }

  TEST_CASE("sequence structure matches the configuration") {
    PhantomConfig c;
    const DSASequence s = make_sequence(c, 2, 99);
    CHECK(s.masks.size() == static_cast<std::size_t>(c.mask_frames));
    CHECK(s.lives.size() == static_cast<std::size_t>(c.live_frames));
    CHECK(s.vessels_gt.size() == s.lives.size());
    CHECK(s.weak_labels.size() == s.lives.size());
    CHECK(s.live_motion.size() == s.lives.size());
    CHECK(s.mask_motion.size() == s.masks.size());
    for (const auto* frames : {&s.masks, &s.lives, &s.vessels_gt, &s.weak_labels}) {
      for (const auto& f : *frames) {
        CHECK(f.min_value() >= 0.0f);
        CHECK(f.max_value() <= 1.0f);
      }
    }
    for (std::size_t t = 0; t < s.lives.size(); ++t) {
      const ImageFrame expect = compose_live(warp(s.background_canonical, s.live_motion[t]),
                                             warp(s.vessel_canonical, s.live_motion[t]), s.contrast[t]);
      CHECK(max_abs_diff(expect, s.lives[t]) < 1e-6);
      CHECK(s.weak_labels[t] == subtract(s.lives[t], s.masks[0]));
    }
  }

  TEST_CASE("level 0 subtraction recovers the ground truth") {
    PhantomConfig c;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const DSASequence s = make_sequence(c, 0, seed);
      for (std::size_t t = 0; t < s.lives.size(); ++t) {
        for (const auto& mask : s.masks) {
          const ImageFrame d = subtract(s.lives[t], mask);
          for (std::size_t i = 0; i < d.size(); ++i) {
            if (s.lives[t].data()[i] < 1.0f) CHECK(std::abs(d.data()[i] - s.vessels_gt[t].data()[i]) < 1e-6);
          }
        }
        CHECK(max_abs_diff(s.weak_labels[t], s.vessels_gt[t]) < 1e-6);
      }
    }
  }

  TEST_CASE("moving masks leave off-vessel residuals") {
    PhantomConfig c;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const DSASequence s = make_sequence(c, 3, seed);
      double r = 0.0;
      for (std::size_t t = 0; t < s.lives.size(); ++t)
        for (std::size_t i = 0; i < s.lives[t].size(); ++i)
          if (s.vessels_gt[t].data()[i] == 0.0f) r += std::abs(s.weak_labels[t].data()[i]);
      CHECK(r > 0.0);
      const DSASequence s2 = make_sequence(c, 2, seed);
      double e = 0.0;
      for (std::size_t i = 0; i < s2.lives[0].size(); ++i)
        if (s2.vessels_gt[0].data()[i] == 0.0f) e += s2.weak_labels[0].data()[i] * s2.weak_labels[0].data()[i];
      CHECK(e > 0.0);
    }
  }

  TEST_CASE("masks are pairwise distinct for moving levels") {
    PhantomConfig c;
    for (int level = 1; level <= kMaxMotionLevel; ++level) {
      const DSASequence s = make_sequence(c, level, 1234);
      for (std::size_t i = 0; i < s.masks.size(); ++i)
        for (std::size_t j = i + 1; j < s.masks.size(); ++j) CHECK(!(s.masks[i] == s.masks[j]));
    }
  }

  TEST_CASE("mask frame count below two is rejected") {
    PhantomConfig c;
    c.mask_frames = 1;
    CHECK_THROWS_AS(c.validate(), DataError);
  }
}
