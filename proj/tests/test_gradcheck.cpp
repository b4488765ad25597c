#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "vccdsa/network.hpp"
#include "vccdsa/rng.hpp"
#include "vccdsa/training.hpp"

using namespace vccdsa;

namespace {

ArchConfig tiny_arch() {
  ArchConfig a;
  a.scale_factor = 0.0625;
  return a;
}

void check_gradient(Network<double>& net, const LossConfig& cfg, bool live_only) {
  const oracle::GradcheckResult r = oracle::gradcheck(net, oracle::gradcheck_batch(2, 16), cfg, live_only);
  CHECK(r.checked == 50);
  CHECK(r.max_rel_error < 1e-3);
}

}  // namespace

TEST_SUITE("gradcheck") {
  TEST_CASE("dual-branch gradient matches finite differences") {
    Network<double> net(tiny_arch(), 7);
    LossConfig cfg;
    cfg.lambda = 0.85;
    check_gradient(net, cfg, false);
  }

  TEST_CASE("fidelity-only gradient matches finite differences") {
    Network<double> net(tiny_arch(), 8);
    LossConfig cfg;
    cfg.lambda = 0.0;
    check_gradient(net, cfg, false);
  }

  TEST_CASE("live-only gradient matches finite differences") {
    ArchConfig a = tiny_arch();
    a.input_channels = 1;
    Network<double> net(a, 9);
    check_gradient(net, LossConfig{}, true);
  }

  TEST_CASE("float and double gradients agree") {
    const auto batch = oracle::gradcheck_batch(2, 16);
    Network<double> nd(tiny_arch(), 10);
    Network<float> nf(tiny_arch(), 10);
    std::vector<double> gd(nd.parameter_count(), 0.0);
    std::vector<float> gf(nf.parameter_count(), 0.0f);
    const auto ed = loss_and_gradient<double>(nd, batch, LossConfig{}, false, gd);
    const auto ef = loss_and_gradient<float>(nf, batch, LossConfig{}, false, gf);
    CHECK(ef.l_total == doctest::Approx(ed.l_total).epsilon(1e-4));
    double num = 0, den = 0;
    for (std::size_t i = 0; i < gd.size(); ++i) {
      num += (gd[i] - gf[i]) * (gd[i] - gf[i]);
      den += gd[i] * gd[i];
    }
    CHECK(std::sqrt(num / den) < 1e-2);
  }
}
