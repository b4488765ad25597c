#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"
#include "vccdsa/error.hpp"
#include "vccdsa/mdss.hpp"
#include "vccdsa/phantom.hpp"
#include "vccdsa/png_io.hpp"
#include "vccdsa/rng.hpp"

using namespace vccdsa;

namespace {

TrainSample sample_of(const std::string& seq, float live, float label) {
  TrainSample s;
  s.mask_i = ImageFrame(16, 16, 0.1f);
  s.mask_j = ImageFrame(16, 16, 0.2f);
  s.live = ImageFrame(16, 16, live);
  s.weak_label = ImageFrame(16, 16, label);
  s.provenance.sequence_id = seq;
  return s;
}

MdssConfig always_mix() {
  MdssConfig c;
  c.mix_probability = 1.0;
  c.warmup_steps = 0;
  c.insert_every = 1;
  return c;
}

}  // namespace

TEST_SUITE("mdss") {
  TEST_CASE("bank is FIFO with bounded capacity") {
    VascularBank bank(3);
    CHECK(bank.empty());
    for (int k = 0; k < 5; ++k) bank.insert(ImageFrame(16, 16, 0.1f * k), "s" + std::to_string(k), k);
    CHECK(bank.size() == 3u);
    const auto snap = bank.snapshot();
    CHECK((*snap)[0].id == 2u);
    CHECK((*snap)[2].id == 4u);
    CHECK((*snap)[0].source_sequence == "s2");
    const MdssStats st = bank.stats();
    CHECK(st.inserts == 5u);
    CHECK(st.evictions == 2u);
    CHECK_THROWS_AS(VascularBank(0), ConfigError);
  }

  TEST_CASE("inserted frames are clipped copies") {
    VascularBank bank(2);
    ImageFrame f(16, 16, 1.4f);
    f(0, 0) = -0.2f;
    bank.insert(f, "a", 1);
    const auto snap = bank.snapshot();
    CHECK((*snap)[0].frame.max_value() == 1.0f);
    CHECK((*snap)[0].frame.min_value() == 0.0f);
  }

  TEST_CASE("snapshots are not affected by later inserts") {
    VascularBank bank(2);
    bank.insert(ImageFrame(16, 16, 0.1f), "a", 1);
    const auto before = bank.snapshot();
    bank.insert(ImageFrame(16, 16, 0.2f), "b", 2);
    bank.insert(ImageFrame(16, 16, 0.3f), "c", 3);
    CHECK(before->size() == 1u);
    CHECK((*before)[0].source_sequence == "a");
  }

  TEST_CASE("concurrent readers see consistent snapshots") {
    VascularBank bank(8);
    std::thread writer([&] {
      for (int k = 0; k < 500; ++k) bank.insert(ImageFrame(16, 16, 0.5f), "w", k);
    });
    bool ok = true;
    for (int k = 0; k < 500; ++k) {
      const auto snap = bank.snapshot();
      if (snap->size() > 8u) ok = false;
      for (std::size_t i = 1; i < snap->size(); ++i)
        if ((*snap)[i].id != (*snap)[i - 1].id + 1) ok = false;
    }
    writer.join();
    CHECK(ok);
    CHECK(bank.size() == 8u);
  }

  TEST_CASE("bank update respects warmup, cadence and gate") {
    MdssConfig c;
    c.warmup_steps = 20;
    c.insert_every = 10;
    c.quality_gate = 0.02;
    VascularBank bank(4);
    const ImageFrame p(16, 16, 0.3f);
    CHECK(!bank_update(bank, p, 0.0, "a", 10, c));  // warmup
    CHECK(!bank_update(bank, p, 0.0, "a", 25, c));  // cadence
    CHECK(!bank_update(bank, p, 0.03, "a", 30, c));  // gate
    CHECK(bank_update(bank, p, 0.02, "a", 30, c));
    CHECK(bank.size() == 1u);
    CHECK(bank.stats().rejections == 1u);
    c.enabled = false;
    CHECK(!bank_update(bank, p, 0.0, "a", 40, c));
  }

  TEST_CASE("warmup defaults to a fifth of the run") {
    MdssConfig c;
    CHECK(c.resolved(2000).warmup_steps == 400);
    c.warmup_steps = 7;
    CHECK(c.resolved(2000).warmup_steps == 7);
  }

  TEST_CASE("mixup adds the entry to live, label and ground truth only") {
    VascularBank bank(4);
    bank.insert(ImageFrame(16, 16, 0.3f), "other", 1);
    Rng rng(1);
    auto [s, gt] = mixup_apply(sample_of("mine", 0.5f, 0.2f), ImageFrame(16, 16, 0.1f), bank, rng, always_mix());
    CHECK(s.provenance.mixup.applied);
    CHECK(s.provenance.mixup.source_sequence == "other");
    CHECK(s.live(3, 3) == doctest::Approx(0.8f));
    CHECK(s.weak_label(3, 3) == doctest::Approx(0.5f));
    CHECK(gt(3, 3) == doctest::Approx(0.4f));
    CHECK(s.mask_i == ImageFrame(16, 16, 0.1f));
    CHECK(s.mask_j == ImageFrame(16, 16, 0.2f));
    CHECK(bank.stats().mixes == 1u);
  }

  TEST_CASE("mixup clips at one") {
    VascularBank bank(4);
    bank.insert(ImageFrame(16, 16, 0.9f), "other", 1);
    Rng rng(2);
    auto [s, gt] = mixup_apply(sample_of("mine", 0.5f, 0.3f), ImageFrame{}, bank, rng, always_mix());
    CHECK(s.live.max_value() == 1.0f);
    CHECK(s.weak_label.max_value() <= 1.0f);
    CHECK(gt.empty());
  }

  TEST_CASE("mixup never uses an entry from the same sequence") {
    VascularBank bank(4);
    bank.insert(ImageFrame(16, 16, 0.3f), "mine", 1);
    Rng rng(3);
    const TrainSample in = sample_of("mine", 0.5f, 0.2f);
    for (int k = 0; k < 50; ++k) {
      auto [s, gt] = mixup_apply(in, ImageFrame{}, bank, rng, always_mix());
      CHECK(!s.provenance.mixup.applied);
      CHECK(s.live == in.live);
    }
    bank.insert(ImageFrame(16, 16, 0.1f), "b", 2);
    for (int k = 0; k < 50; ++k) {
      auto [s, gt] = mixup_apply(in, ImageFrame{}, bank, rng, always_mix());
      CHECK(s.provenance.mixup.source_sequence == "b");
    }
  }

  TEST_CASE("empty bank or zero probability leaves samples unchanged") {
    VascularBank bank(4);
    Rng rng(4);
    const TrainSample in = sample_of("mine", 0.5f, 0.2f);
    auto [a, ga] = mixup_apply(in, ImageFrame{}, bank, rng, always_mix());
    CHECK(a.live == in.live);
    bank.insert(ImageFrame(16, 16, 0.3f), "other", 1);
    MdssConfig c = always_mix();
    c.mix_probability = 0.0;
    for (int k = 0; k < 20; ++k) CHECK(!mixup_apply(in, ImageFrame{}, bank, rng, c).first.provenance.mixup.applied);
  }

  TEST_CASE("mix probability is respected") {
    VascularBank bank(4);
    bank.insert(ImageFrame(16, 16, 0.3f), "other", 1);
    Rng rng(5);
    MdssConfig c = always_mix();
    c.mix_probability = 0.5;
    int mixed = 0;
    for (int k = 0; k < 2000; ++k) mixed += mixup_apply(sample_of("mine", 0.5f, 0.2f), ImageFrame{}, bank, rng, c).first.provenance.mixup.applied;
    CHECK(mixed > 900);
    CHECK(mixed < 1100);
  }

  TEST_CASE("bank snapshot export") {
    const auto dir = test::scratch_dir("bank");
    VascularBank bank(4);
    bank.insert(ImageFrame(16, 16, 0.25f), "a", 3);
    bank.insert(ImageFrame(16, 16, 0.5f), "b", 6);
    export_bank_snapshot(bank, dir);
    CHECK(std::filesystem::exists(dir / "entry_0000.png"));
    CHECK(std::filesystem::exists(dir / "entry_0001.png"));
    std::ifstream in(dir / "index.json");
    const auto j = nlohmann::json::parse(in);
    CHECK(j.at("capacity") == 4);
    CHECK(j.at("entries").size() == 2u);
    CHECK(j.at("entries")[1].at("source_sequence") == "b");
    CHECK(read_png16(dir / "entry_0000.png")(0, 0) == doctest::Approx(0.25f).epsilon(1e-4));
  }

  TEST_CASE("config validation") {
    MdssConfig c;
    c.mix_probability = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = MdssConfig{};
    c.insert_every = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("mixup keeps level-0 subtraction exact") {
    PhantomConfig pc;
    pc.height = pc.width = 32;
    const DSASequence own = make_sequence(pc, 0, 41), other = make_sequence(pc, 0, 42);
    VascularBank bank(4);
    bank.insert(other.vessels_gt.back(), "other", 1);
    Rng rng(2);
    for (std::size_t t = 0; t < own.lives.size(); ++t) {
      TrainSample x;
      x.mask_i = own.masks[0];
      x.mask_j = own.masks[1];
      x.live = own.lives[t];
      x.weak_label = own.weak_labels[t];
      x.provenance.sequence_id = "own";
      auto [y, gt] = mixup_apply(x, own.vessels_gt[t], bank, rng, always_mix());
      REQUIRE(y.provenance.mixup.applied);
      const ImageFrame d = subtract(y.live, y.mask_i);
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (y.live.data()[i] >= 1.0f) continue;
        CHECK(std::fabs(d.data()[i] - gt.data()[i]) < 1e-6f);
      }
    }
  }
}
