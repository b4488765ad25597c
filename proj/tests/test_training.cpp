#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "test_support.hpp"
#include "vccdsa/error.hpp"
#include "vccdsa/network.hpp"
#include "vccdsa/phantom.hpp"
#include "vccdsa/rng.hpp"
#include "vccdsa/training.hpp"

using namespace vccdsa;

namespace {

std::vector<DSASequence> small_dataset(int count, int level = 2) {
  PhantomConfig c;
  c.height = c.width = 32;
  std::vector<DSASequence> data;
  for (int i = 0; i < count; ++i) data.push_back(make_sequence(c, level, 500 + i));
  return data;
}

ArchConfig small_arch() {
  ArchConfig a;
  a.scale_factor = 0.125;
  return a;
}

TrainConfig small_train(int steps) {
  TrainConfig t = TrainConfig::desk_scale();
  t.batch_size = 2;
  t.crop_size = 32;
  t.total_steps = steps;
  t.learning_rate = 1e-3;
  t.mdss.warmup_steps = 2;
  t.mdss.insert_every = 1;
  t.mdss.quality_gate = 1.0;
  return t;
}

TrainSample sample_from(const DSASequence& s, int i, int j, int t) {
  TrainSample x;
  x.mask_i = s.masks[i];
  x.mask_j = s.masks[j];
  x.live = s.lives[t];
  x.weak_label = s.weak_labels[t];
  return x;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("mask pairs are distinct and uniform over ordered pairs") {
    Rng rng(1);
    std::map<std::pair<int, int>, int> counts;
    const int draws = 24000;
    for (int k = 0; k < draws; ++k) {
      const auto p = sample_mask_pair_indices(4, rng);
      REQUIRE(p.first != p.second);
      CHECK(p.first >= 0);
      CHECK(p.second < 4);
      ++counts[p];
    }
    CHECK(counts.size() == 12u);
    for (const auto& [pair, n] : counts) CHECK(std::abs(n - draws / 12) < draws / 12 / 10);
  }

  TEST_CASE("one mask frame cannot form a pair") {
    Rng rng(2);
    CHECK_THROWS_AS(sample_mask_pair_indices(1, rng), DataError);
    DSASequence s = small_dataset(1).front();
    s.masks.resize(1);
    CHECK_THROWS_AS(sample_mask_pair(s, rng), DataError);
    CHECK_THROWS_AS(make_train_sample(s, 0, rng), DataError);
  }

  TEST_CASE("loss terms") {
    const ImageFrame a = test::random_frame(16, 16, 1), b = test::random_frame(16, 16, 2);
    CHECK(fidelity_loss(a, a) == 0.0);
    CHECK(consistency_loss(a, a) == 0.0);
    CHECK(consistency_loss(a, b) == doctest::Approx(consistency_loss(b, a)));
    CHECK(fidelity_loss(ImageFrame(16, 16, 0.25f), ImageFrame(16, 16, 0.5f)) == doctest::Approx(0.25));
    LossConfig cfg;
    cfg.lambda = 0.85;
    CHECK(total_loss(0.2, 0.4, 0.1, cfg) == doctest::Approx(0.15 * 0.3 + 0.85 * 0.1));
    cfg.lambda = 0.0;
    CHECK(total_loss(0.2, 0.4, 0.1, cfg) == doctest::Approx(0.3));
    cfg.lambda = 1.0;
    CHECK(total_loss(0.2, 0.4, 0.1, cfg) == doctest::Approx(0.1));
    cfg.lambda = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(fidelity_loss(a, ImageFrame(16, 24)), ArgumentError);
  }

  TEST_CASE("training sample carries provenance") {
    const DSASequence s = small_dataset(1).front();
    Rng rng(3);
    const TrainSample x = make_train_sample(s, 2, rng);
    CHECK(x.provenance.sequence_id == s.id);
    CHECK(x.provenance.live_index == 2);
    CHECK(x.provenance.mask_i_index != x.provenance.mask_j_index);
    CHECK(x.mask_i == s.masks[x.provenance.mask_i_index]);
    CHECK(x.mask_j == s.masks[x.provenance.mask_j_index]);
    CHECK(x.live == s.lives[2]);
    CHECK(x.weak_label == s.weak_labels[2]);
    CHECK_THROWS_AS(make_train_sample(s, 99, rng), ArgumentError);
  }

  TEST_CASE("disabled augmentation is a center crop") {
    AugmentParams p;
    p.flip = p.rotate = p.translate_scale = p.random_crop = false;
    CHECK(!p.any());
    const ImageFrame f = test::random_frame(48, 48, 4);
    Rng rng(5);
    const AugmentTransform t = draw_augmentation(rng, p, 48, 48, 32);
    CHECK(t.crop_y == 8);
    CHECK(t.crop_x == 8);
    CHECK(apply_augmentation(f, t) == crop(f, 8, 8, 32, 32));
    const AugmentTransform full = draw_augmentation(rng, p, 48, 48, 48);
    CHECK(apply_augmentation(f, full) == f);
    CHECK_THROWS_AS(draw_augmentation(rng, p, 24, 24, 32), DataError);
  }

  TEST_CASE("augmentation applies one transform to every frame") {
    const DSASequence s = small_dataset(1).front();
    AugmentParams p;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      TrainSample x = sample_from(s, 0, 0, 3);
      Rng rng(seed);
      auto [y, gt] = augment(x, s.lives[3], rng, p, 24);
      CHECK(y.mask_i == y.mask_j);
      CHECK(y.live == gt);
      CHECK(y.live.height() == 24);
      CHECK(y.weak_label.width() == 24);
    }
  }

  TEST_CASE("augmentation parameters stay within bounds") {
    AugmentParams p;
    Rng rng(6);
    int flips = 0, rotations = 0, affines = 0;
    for (int k = 0; k < 400; ++k) {
      const AugmentTransform t = draw_augmentation(rng, p, 64, 64, 48);
      CHECK(std::abs(t.affine.rotation_deg) <= p.max_rotation_deg);
      CHECK(std::abs(t.affine.dx) <= p.max_translation * 64);
      CHECK(std::abs(t.affine.sx - 1.0) <= p.max_scale_delta);
      CHECK(t.crop_y >= 0);
      CHECK(t.crop_y <= 16);
      flips += t.flip != FlipKind::none;
      rotations += t.affine.rotation_deg != 0.0;
      affines += t.affine.sx != 1.0;
    }
    CHECK(flips > 50);
    CHECK(rotations > 50);
    CHECK(affines > 50);
  }

  TEST_CASE("equal masks give zero consistency loss") {
    const DSASequence s = small_dataset(1).front();
    const Network<float> net(small_arch(), 1);
    std::vector<TrainSample> batch{sample_from(s, 1, 1, 0), sample_from(s, 2, 2, 4)};
    const auto ev = loss_and_gradient<float>(net, batch, LossConfig{}, false, {});
    CHECK(ev.l_con == 0.0);
    CHECK(ev.l_fid1 == ev.l_fid2);
    batch = {sample_from(s, 0, 3, 0)};
    CHECK(loss_and_gradient<float>(net, batch, LossConfig{}, false, {}).l_con > 0.0);
  }

  TEST_CASE("live-only loss has no consistency term") {
    const DSASequence s = small_dataset(1).front();
    ArchConfig a = small_arch();
    a.input_channels = 1;
    const Network<float> net(a, 2);
    const std::vector<TrainSample> batch{sample_from(s, 0, 1, 0)};
    const auto ev = loss_and_gradient<float>(net, batch, LossConfig{}, true, {});
    CHECK(ev.l_con == 0.0);
    CHECK(ev.l_fid2 == ev.l_fid1);
    CHECK(ev.v_j.values.empty());
    CHECK_THROWS_AS(loss_and_gradient<float>(net, batch, LossConfig{}, false, {}), ConfigError);
  }

  TEST_CASE("adam matches the reference update") {
    TrainConfig cfg;
    std::vector<float> p{0.5f, -0.25f, 1.0f};
    AdamState st;
    double m[3] = {}, v[3] = {}, ref[3] = {0.5, -0.25, 1.0};
    const double grads[3][3] = {{0.1, -0.2, 0.0}, {0.3, 0.1, -0.05}, {-0.2, 0.4, 0.2}};
    for (int t = 1; t <= 3; ++t) {
      std::vector<float> g(grads[t - 1], grads[t - 1] + 3);
      adam_update(p, g, st, cfg);
      for (int k = 0; k < 3; ++k) {
        m[k] = 0.9 * m[k] + 0.1 * grads[t - 1][k];
        v[k] = 0.999 * v[k] + 0.001 * grads[t - 1][k] * grads[t - 1][k];
        const double mh = m[k] / (1 - std::pow(0.9, t)), vh = v[k] / (1 - std::pow(0.999, t));
        ref[k] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.adam_epsilon);
      }
    }
    CHECK(st.step == 3);
    for (int k = 0; k < 3; ++k) CHECK(p[k] == doctest::Approx(ref[k]).epsilon(1e-5));
  }

  TEST_CASE("divergence guard") {
    DivergenceGuard g;
    CHECK_THROWS_AS(g.observe(1, std::numeric_limits<double>::quiet_NaN()), DivergenceError);
    DivergenceGuard h;
    for (int s = 1; s <= 10; ++s) h.observe(s, 1.0);
    for (int s = 11; s < 110; ++s) h.observe(s, 11.0);
    h.observe(110, 1.0);  // streak broken after 99 steps
    for (int s = 111; s < 210; ++s) h.observe(s, 11.0);
    try {
      h.observe(210, 11.0);
      FAIL("guard did not trip");
    } catch (const DivergenceError& e) {
      CHECK(e.step() == 210);
    }
  }

  TEST_CASE("non-finite loss raises a divergence error") {
    const DSASequence s = small_dataset(1).front();
    Network<float> net(small_arch(), 3);
    std::vector<TrainSample> batch{sample_from(s, 0, 1, 0)};
    batch[0].weak_label(0, 0) = std::numeric_limits<float>::infinity();
    AdamState st;
    const std::uint64_t before = net.parameter_hash();
    CHECK_THROWS_AS(train_step(net, batch, small_train(1), st, 1), DivergenceError);
    CHECK(net.parameter_hash() == before);
  }

  TEST_CASE("train config validation") {
    TrainConfig c;
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.crop_size = 60;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(TrainConfig::desk_scale().batch_size == 4);
    CHECK(TrainConfig::desk_scale().crop_size == 64);
  }

  TEST_CASE("training is deterministic") {
    const auto data = small_dataset(3);
    Network<float> a(small_arch(), 4), b(small_arch(), 4);
    const TrainResult ra = Trainer(a, data, small_train(6)).run();
    const TrainResult rb = Trainer(b, data, small_train(6)).run();
    CHECK(ra.records == rb.records);
    CHECK(ra.parameter_hash == rb.parameter_hash);
    for (const auto& r : ra.records) CHECK(r.wall_ms == 0.0);
  }

  TEST_CASE("background loading does not change results") {
    const auto data = small_dataset(3);
    Network<float> a(small_arch(), 5), b(small_arch(), 5);
    TrainConfig threaded = small_train(6);
    threaded.deterministic = false;
    const TrainResult ra = Trainer(a, data, small_train(6)).run();
    const TrainResult rb = Trainer(b, data, threaded).run();
    REQUIRE(ra.records.size() == rb.records.size());
    for (std::size_t i = 0; i < ra.records.size(); ++i) {
      CHECK(ra.records[i].l_total == rb.records[i].l_total);
      CHECK(rb.records[i].wall_ms > 0.0);
    }
    CHECK(ra.parameter_hash == rb.parameter_hash);
  }

  TEST_CASE("batches do not depend on the bank switch") {
    const auto data = small_dataset(3);
    Network<float> net(small_arch(), 6);
    TrainConfig off = small_train(4);
    off.mdss.enabled = false;
    const Trainer ton(net, data, small_train(4)), toff(net, data, off);
    for (int step = 1; step <= 4; ++step) {
      const auto x = ton.draw_batch(step), y = toff.draw_batch(step);
      for (std::size_t b = 0; b < x.size(); ++b) {
        CHECK(x[b].sample.live == y[b].sample.live);
        CHECK(x[b].sample.mask_i == y[b].sample.mask_i);
        CHECK(x[b].sample.provenance.sequence_id == y[b].sample.provenance.sequence_id);
      }
    }
  }

  TEST_CASE("epochs visit every live frame once") {
    const auto data = small_dataset(2);
    Network<float> net(small_arch(), 7);
    TrainConfig c = small_train(6);
    c.batch_size = 2;
    c.augment.flip = c.augment.rotate = c.augment.translate_scale = c.augment.random_crop = false;
    const Trainer t(net, data, c);
    std::map<std::pair<std::string, int>, int> seen;
    for (int step = 1; step <= 6; ++step)
      for (const auto& item : t.draw_batch(step)) ++seen[{item.sample.provenance.sequence_id, item.sample.provenance.live_index}];
    CHECK(seen.size() == 12u);
    for (const auto& [k, n] : seen) CHECK(n == 1);
  }

  TEST_CASE("loss decreases on a small problem") {
    const auto data = small_dataset(4);
    Network<float> net(small_arch(), 8);
    TrainConfig c = small_train(60);
    c.mdss.enabled = false;
    const TrainResult r = Trainer(net, data, c).run();
    double first = 0, last = 0;
    for (int i = 0; i < 10; ++i) {
      first += r.records[i].l_total;
      last += r.records[r.records.size() - 1 - i].l_total;
    }
    CHECK(last < first);
  }

  TEST_CASE("bank fills during training") {
    const auto data = small_dataset(3);
    Network<float> net(small_arch(), 9);
    Trainer t(net, data, small_train(8));
    const TrainResult r = t.run();
    // One candidate per step from step 2 on; steps where every sample was mixed offer none.
    CHECK(r.mdss.inserts >= 1u);
    CHECK(r.mdss.inserts <= 7u);
    CHECK(r.mdss.rejections == 0u);
    CHECK(r.bank_size == r.mdss.inserts);
    TrainConfig live = small_train(8);
    live.live_only = true;
    ArchConfig a = small_arch();
    a.input_channels = 1;
    Network<float> ln(a, 9);
    const TrainResult lr = Trainer(ln, data, live).run();
    CHECK(lr.bank_size == 0u);
    for (const auto& rec : lr.records) CHECK(rec.l_con == 0.0);
  }

  TEST_CASE("train log layout") {
    std::ostringstream os;
    write_train_log_header(os);
    write_train_log_row(os, TrainRecord{7, 0.5, 0.25, 0.125, 0.3, 0.0});
    CHECK(os.str() == "step,L_fid1,L_fid2,L_con,L_total,wall_ms\n7,0.5,0.25,0.125,0.3,0.000\n");
  }

  TEST_CASE("flips are involutions") {
    const ImageFrame f = test::random_frame(32, 32, 8);
    for (FlipKind k : {FlipKind::horizontal, FlipKind::vertical}) {
      AugmentTransform t;
      t.flip = k;
      t.crop_size = 32;
      const ImageFrame once = apply_augmentation(f, t);
      CHECK(once != f);
      CHECK(apply_augmentation(once, t) == f);
    }
  }

  TEST_CASE("augmentation keeps level-0 subtraction exact") {
    const DSASequence s = small_dataset(1, 0).front();
    AugmentParams p;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      const int t = static_cast<int>(seed % s.lives.size());
      auto [y, gt] = augment(sample_from(s, 0, 1, t), s.vessels_gt[static_cast<std::size_t>(t)], rng, p, 24);
      const ImageFrame d = subtract(y.live, y.mask_i);
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (y.live.data()[i] >= 1.0f) continue;
        CHECK(std::fabs(d.data()[i] - gt.data()[i]) < 1e-6f);
      }
    }
  }

  TEST_CASE("zero tail with lambda one has zero gradient") {
    const DSASequence s = small_dataset(1).front();
    Network<float> net(small_arch(), 3);
    for (float& w : net.weights("tail")) w = 0.0f;
    const std::vector<TrainSample> batch{sample_from(s, 0, 1, 2), sample_from(s, 2, 3, 5)};
    std::vector<float> grad(net.parameter_count(), 0.0f);
    const auto ev = loss_and_gradient<float>(net, batch, LossConfig{1.0}, false, grad);
    CHECK(ev.l_con == 0.0);
    CHECK(ev.l_total == 0.0);
    for (float g : grad) REQUIRE(g == 0.0f);
  }

  TEST_CASE("lambda zero leaves only the fidelity gradients") {
    const DSASequence s = small_dataset(1).front();
    const Network<float> net(small_arch(), 4);
    const LossConfig zero{0.0};
    const std::size_t n = net.parameter_count();
    auto grad_of = [&](int i, int j) {
      std::vector<float> g(n, 0.0f);
      loss_and_gradient<float>(net, {sample_from(s, i, j, 4)}, zero, false, g);
      return g;
    };
    // With equal masks each branch carries half the fidelity weight.
    const auto both = grad_of(0, 3), first = grad_of(0, 0), second = grad_of(3, 3);
    double worst = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      worst = std::max(worst, std::fabs(static_cast<double>(both[k]) - 0.5 * (first[k] + second[k])));
      scale = std::max(scale, std::fabs(static_cast<double>(both[k])));
    }
    CHECK(scale > 0.0);
    CHECK(worst <= 1e-5 * scale);
  }

  TEST_CASE("a single batch can be overfitted") {
    const auto data = small_dataset(2);
    Network<float> net(ArchConfig::desk_scale(), 10);
    TrainConfig c = TrainConfig::desk_scale();
    c.mdss.enabled = false;
    std::vector<TrainSample> batch{sample_from(data[0], 0, 1, 3), sample_from(data[1], 2, 3, 5)};
    AdamState adam;
    double first = 0.0, last = 0.0;
    for (int step = 1; step <= 500; ++step) {
      const StepResult r = train_step(net, batch, c, adam, step);
      if (step == 1) first = r.record.l_total;
      last = r.record.l_total;
    }
    // Measured 0.114 of the first-step loss on this batch (0.184 on a 64x64
    // batch of four); frozen with some slack.
    CHECK(last <= 0.15 * first);
  }
}
