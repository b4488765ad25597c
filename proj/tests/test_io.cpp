#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "test_support.hpp"
#include "vccdsa/dataset_io.hpp"
#include "vccdsa/error.hpp"
#include "vccdsa/phantom.hpp"
#include "vccdsa/png_io.hpp"

using namespace vccdsa;
namespace fs = std::filesystem;

TEST_SUITE("io") {
  TEST_CASE("png16 round trip is within one quantization step") {
    const auto dir = test::scratch_dir("png16");
    const ImageFrame f = test::random_frame(24, 40, 77);
    write_png16(dir / "f.png", f);
    const ImageFrame g = read_png16(dir / "f.png");
    REQUIRE(g.height() == 24);
    REQUIRE(g.width() == 40);
    CHECK(max_abs_diff(f, g) <= 0.5 / 65535.0 + 1e-7);
    // Already quantized values survive exactly.
    write_png16(dir / "g.png", g);
    CHECK(read_png16(dir / "g.png") == g);
  }

  TEST_CASE("png16 clamps out-of-range values") {
    const auto dir = test::scratch_dir("png16_clamp");
    ImageFrame f(16, 16, 0.5f);
    f(0, 0) = -0.3f;
    f(1, 1) = 1.7f;
    write_png16(dir / "f.png", f);
    const ImageFrame g = read_png16(dir / "f.png");
    CHECK(g(0, 0) == 0.0f);
    CHECK(g(1, 1) == 1.0f);
  }

  TEST_CASE("reading a missing or corrupt png raises IoError") {
    const auto dir = test::scratch_dir("png_bad");
    CHECK_THROWS_AS(read_png16(dir / "missing.png"), IoError);
    std::ofstream(dir / "bad.png") << "not a png";
    CHECK_THROWS_AS(read_png16(dir / "bad.png"), IoError);
  }

  TEST_CASE("sequence round trip") {
    const auto dir = test::scratch_dir("sequence");
    PhantomConfig c;
    c.height = c.width = 32;
    const DSASequence s = make_sequence(c, 2, 4242);
    write_sequence(s, dir / "seq");
    for (const char* name : {"mask_0000.png", "live_0000.png", "gt_0000.png", "label_0000.png", "manifest.json"})
      CHECK(fs::exists(dir / "seq" / name));
    const DSASequence r = read_sequence(dir / "seq");
    CHECK(r.level == 2);
    CHECK(r.seed == 4242);
    REQUIRE(r.masks.size() == s.masks.size());
    REQUIRE(r.lives.size() == s.lives.size());
    for (std::size_t i = 0; i < s.masks.size(); ++i) CHECK(max_abs_diff(r.masks[i], s.masks[i]) < 1e-4);
    for (std::size_t i = 0; i < s.lives.size(); ++i) {
      CHECK(max_abs_diff(r.lives[i], s.lives[i]) < 1e-4);
      CHECK(max_abs_diff(r.vessels_gt[i], s.vessels_gt[i]) < 1e-4);
      CHECK(max_abs_diff(r.weak_labels[i], s.weak_labels[i]) < 1e-4);
    }
    CHECK(r.background_canonical == s.background_canonical);
    CHECK(r.vessel_canonical == s.vessel_canonical);
  }

  TEST_CASE("phantom config json round trip") {
    PhantomConfig c;
    c.height = 48;
    c.vessel.branch_count = 5;
    c.background.peak = 0.7;
    c.noise_sigma = 0.01;
    const PhantomConfig r = phantom_config_from_json(phantom_config_to_json(c));
    CHECK(r.height == 48);
    CHECK(r.vessel.branch_count == 5);
    CHECK(r.background.peak == 0.7);
    CHECK(r.noise_sigma == 0.01);
    CHECK(phantom_config_to_json(r) == phantom_config_to_json(c));
  }

  TEST_CASE("reading a directory without a manifest raises IoError") {
    const auto dir = test::scratch_dir("sequence_missing");
    CHECK_THROWS_AS(read_sequence(dir), IoError);
  }
}
