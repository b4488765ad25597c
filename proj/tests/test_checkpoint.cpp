#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"
#include "vccdsa/checkpoint.hpp"
#include "vccdsa/error.hpp"

using namespace vccdsa;

namespace {

ArchConfig tiny() {
  ArchConfig a;
  a.scale_factor = 0.125;
  return a;
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip preserves parameters and outputs") {
    const auto dir = test::scratch_dir("ckpt");
    const Network<float> net(tiny(), 21);
    save_checkpoint(dir / "c.bin", net, 17);
    CHECK(std::filesystem::exists(sidecar_path(dir / "c.bin")));
    const Checkpoint c = load_checkpoint(dir / "c.bin");
    CHECK(c.step == 17);
    CHECK(!c.optimizer.has_value());
    CHECK(c.network.parameter_hash() == net.parameter_hash());
    CHECK(c.network.seed() == 21u);
    const ImageFrame m = test::random_frame(16, 16, 1), l = test::random_frame(16, 16, 2);
    CHECK(forward(c.network, m, l) == forward(net, m, l));
  }

  TEST_CASE("optimizer state is stored when given") {
    const auto dir = test::scratch_dir("ckpt_adam");
    const Network<float> net(tiny(), 22);
    AdamState st;
    st.reset(net.parameter_count());
    st.m[3] = 0.5f;
    st.v[7] = 0.25f;
    st.step = 9;
    save_checkpoint(dir / "c.bin", net, 9, &st);
    const Checkpoint c = load_checkpoint(dir / "c.bin");
    REQUIRE(c.optimizer.has_value());
    CHECK(c.optimizer->m == st.m);
    CHECK(c.optimizer->v == st.v);
    CHECK(c.optimizer->step == 9);
  }

  TEST_CASE("sidecar describes the network") {
    const auto dir = test::scratch_dir("ckpt_sidecar");
    ArchConfig a = tiny();
    a.input_channels = 1;
    const Network<float> net(a, 23);
    save_checkpoint(dir / "c.bin", net, 1);
    std::ifstream in(sidecar_path(dir / "c.bin"));
    const auto j = nlohmann::json::parse(in);
    CHECK(j.at("format_version") == kCheckpointFormatVersion);
    CHECK(j.at("parameter_count") == net.parameter_count());
    CHECK(j.at("seed") == 23);
    const ArchConfig r = arch_from_json(arch_to_json(a));
    CHECK(r.input_channels == 1);
    CHECK(r.scale_factor == a.scale_factor);
    CHECK(count_parameters(r) == count_parameters(a));
  }

  TEST_CASE("corruption is detected") {
    const auto dir = test::scratch_dir("ckpt_bad");
    const Network<float> net(tiny(), 24);
    save_checkpoint(dir / "c.bin", net, 1);
    {
      std::fstream f(dir / "c.bin", std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(64);
      f.put('\x7f');
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "c.bin"), IoError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.bin"), IoError);
  }
}
