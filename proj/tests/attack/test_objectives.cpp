/* Copyright 2026 The advgen Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "advgen/attack/objectives.hpp"
#include "testing/gradcheck.hpp"

using namespace advgen;
using attack::DistillConfig;
using Vd = ag::Variable<double>;
using advgen::testing::gradcheck;
using advgen::testing::random_tensor;

namespace {

template <typename T>
nn::FeatureBundle<T> bundle(std::vector<std::pair<int, ag::Variable<T>>> blocks) {
  nn::FeatureBundle<T> b;
  b.blocks = std::move(blocks);
  return b;
}

/// Build a feature tensor [N, ...] whose per-sample cosine against `other`
/// equals the requested value (2-D per-sample layout).
Tensor<double> unit2(double x, double y) { return Tensor<double>({1, 2}, {x, y}); }

}  // namespace

TEST_CASE("adv_loss worked examples") {
  auto f = Vd::constant(Tensor<double>({2, 3}, {1, 2, 3, -1, 0, 2}));
  SECTION("identical features give 1") {
    REQUIRE(attack::adv_loss(f, f).value()[0] == Catch::Approx(1.0).epsilon(1e-9));
  }
  SECTION("antipodal features give -1") {
    Tensor<double> neg = f.value().clone();
    neg.scale_(-1.0);
    auto g = Vd::constant(neg);
    REQUIRE(attack::adv_loss(f, g).value()[0] == Catch::Approx(-1.0).epsilon(1e-9));
  }
  SECTION("orthogonal features give 0") {
    auto a = Vd::constant(unit2(1, 0));
    auto b = Vd::constant(unit2(0, 1));
    REQUIRE(attack::adv_loss(a, b).value()[0] == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("range is [-1, 1] on random features") {
    Rng rng(3);
    auto a = Vd::constant(random_tensor({8, 20}, rng));
    auto b = Vd::constant(random_tensor({8, 20}, rng));
    const double v = attack::adv_loss(a, b).value()[0];
    REQUIRE(v >= -1.0);
    REQUIRE(v <= 1.0);
  }
}

TEST_CASE("block_weights worked examples") {
  SECTION("zero logits are uniform") {
    auto w = attack::block_weights(Vd::constant(Tensor<double>({2})));
    REQUIRE(w.value()[0] == Catch::Approx(0.5));
    REQUIRE(w.value()[1] == Catch::Approx(0.5));
  }
  SECTION("constant shift invariance") {
    for (double c : {-3.0, 0.0, 11.5}) {
      auto w = attack::block_weights(Vd::constant(Tensor<double>::full({3}, c)));
      for (int i = 0; i < 3; ++i) REQUIRE(w.value()[i] == Catch::Approx(1.0 / 3).epsilon(1e-12));
    }
  }
  SECTION("(ln 2, 0) maps to (2/3, 1/3)") {
    auto w = attack::block_weights(Vd::constant(Tensor<double>({2}, {std::log(2.0), 0.0})));
    REQUIRE(w.value()[0] == Catch::Approx(2.0 / 3).epsilon(1e-12));
    REQUIRE(w.value()[1] == Catch::Approx(1.0 / 3).epsilon(1e-12));
  }
  SECTION("simplex property on random logits") {
    Rng rng(5);
    auto w = attack::block_weights(Vd::constant(random_tensor({5}, rng, 3.0)));
    double sum = 0;
    for (int i = 0; i < 5; ++i) {
      REQUIRE(w.value()[i] > 0.0);
      REQUIRE(w.value()[i] < 1.0);
      sum += w.value()[i];
    }
    REQUIRE(std::abs(sum - 1.0) < 1e-7);
  }
}

TEST_CASE("distill_loss worked examples") {
  DistillConfig cfg;
  cfg.tau = 0.6;
  cfg.early_blocks = {1, 2};
  auto logits = Vd::constant(Tensor<double>({2}));  // uniform weights

  SECTION("cosines above tau give zero loss") {
    // block cosines 0.8 and 0.9 via 2-D unit vectors
    auto s1 = Vd::constant(unit2(1, 0));
    auto t1 = Vd::constant(unit2(0.8, std::sqrt(1 - 0.64)));
    auto s2 = Vd::constant(unit2(1, 0));
    auto t2 = Vd::constant(unit2(0.9, std::sqrt(1 - 0.81)));
    auto res = attack::distill_loss<double>(bundle<double>({{1, s1}, {2, s2}}),
                                            bundle<double>({{1, t1}, {2, t2}}), cfg, logits);
    REQUIRE(res.loss.value()[0] == Catch::Approx(0.0).margin(1e-9));
    REQUIRE(res.per_block[0] == Catch::Approx(0.0).margin(1e-9));
    REQUIRE(res.per_block[1] == Catch::Approx(0.0).margin(1e-9));
  }
  SECTION("cos=(0.4, 0.6) at tau=0.6 gives 0.5*0.2") {
    auto s1 = Vd::constant(unit2(1, 0));
    auto t1 = Vd::constant(unit2(0.4, std::sqrt(1 - 0.16)));
    auto s2 = Vd::constant(unit2(1, 0));
    auto t2 = Vd::constant(unit2(0.6, std::sqrt(1 - 0.36)));
    auto res = attack::distill_loss<double>(bundle<double>({{1, s1}, {2, s2}}),
                                            bundle<double>({{1, t1}, {2, t2}}), cfg, logits);
    REQUIRE(res.loss.value()[0] == Catch::Approx(0.1).epsilon(1e-9));
    REQUIRE(res.per_block[0] == Catch::Approx(0.2).epsilon(1e-9));
    REQUIRE(res.per_block[1] == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("identical taps give zero for any tau <= 1") {
    Rng rng(11);
    auto s = Vd::constant(random_tensor({2, 3, 2, 2}, rng));
    for (double tau : {-0.5, 0.0, 0.6, 1.0}) {
      cfg.tau = tau;
      cfg.early_blocks = {1};
      auto lg = Vd::constant(Tensor<double>({1}));
      auto res = attack::distill_loss<double>(bundle<double>({{1, s}}),
                                              bundle<double>({{1, s}}), cfg, lg);
      REQUIRE(res.loss.value()[0] <= 1e-9);
    }
  }
}

TEST_CASE("distill_loss structural and gradient-freedom guards") {
  DistillConfig cfg;
  cfg.early_blocks = {1, 2};
  auto logits = Vd::constant(Tensor<double>({2}));
  Rng rng(13);
  auto s = Vd::constant(random_tensor({1, 2, 2, 2}, rng));

  SECTION("missing block") {
    REQUIRE_THROWS_AS(attack::distill_loss<double>(bundle<double>({{1, s}}),
                                                   bundle<double>({{1, s}}), cfg, logits),
                      StructuralError);
  }
  SECTION("teacher taps must not require grad") {
    auto t = Vd::leaf(random_tensor({1, 2, 2, 2}, rng), true);
    cfg.early_blocks = {1};
    auto lg = Vd::constant(Tensor<double>({1}));
    REQUIRE_THROWS_AS(
        attack::distill_loss<double>(bundle<double>({{1, s}}), bundle<double>({{1, t}}), cfg, lg),
        StructuralError);
  }
  SECTION("logits length must match early blocks") {
    auto lg = Vd::constant(Tensor<double>({3}));
    REQUIRE_THROWS_AS(attack::distill_loss<double>(bundle<double>({{1, s}, {2, s}}),
                                                   bundle<double>({{1, s}, {2, s}}), cfg, lg),
                      StructuralError);
  }
}

TEST_CASE("distill gradients match finite differences (2 random blocks)") {
  Rng rng(17);
  DistillConfig cfg;
  cfg.tau = 0.9;  // keep the hinge active so gradients flow
  cfg.early_blocks = {1, 2};
  auto s1 = Vd::leaf(random_tensor({2, 4, 3, 3}, rng), true);
  auto s2 = Vd::leaf(random_tensor({2, 4, 3, 3}, rng), true);
  auto t1 = Vd::constant(random_tensor({2, 4, 3, 3}, rng));
  auto t2 = Vd::constant(random_tensor({2, 4, 3, 3}, rng));
  auto logits = Vd::leaf(Tensor<double>({2}, {0.3, -0.2}), true);

  for (bool per_sample : {false, true}) {
    cfg.per_sample_hinge = per_sample;
    auto build = [&] {
      return attack::distill_loss<double>(bundle<double>({{1, s1}, {2, s2}}),
                                          bundle<double>({{1, t1}, {2, t2}}), cfg, logits)
          .loss;
    };
    INFO("per_sample_hinge=" << per_sample);
    REQUIRE(gradcheck(build, {s1, s2, logits}, 1e-4) < 1e-4);
  }
}

TEST_CASE("cosine scale invariance carries into the hinge terms") {
  Rng rng(19);
  DistillConfig cfg;
  cfg.tau = 0.95;
  cfg.early_blocks = {1};
  auto logits = Vd::constant(Tensor<double>({1}));
  auto s = random_tensor({2, 3, 2, 2}, rng);
  auto t = Vd::constant(random_tensor({2, 3, 2, 2}, rng));
  auto r1 = attack::distill_loss<double>(bundle<double>({{1, Vd::constant(s)}}),
                                         bundle<double>({{1, t}}), cfg, logits);
  Tensor<double> scaled = s.clone();
  scaled.scale_(7.5);
  auto r2 = attack::distill_loss<double>(bundle<double>({{1, Vd::constant(scaled)}}),
                                         bundle<double>({{1, t}}), cfg, logits);
  REQUIRE(std::abs(r1.per_block[0] - r2.per_block[0]) < 1e-6);
}

TEST_CASE("hinge nonnegativity on random inputs") {
  Rng rng(23);
  DistillConfig cfg;
  cfg.early_blocks = {1, 2};
  auto logits = Vd::constant(random_tensor({2}, rng));
  for (int trial = 0; trial < 20; ++trial) {
    cfg.tau = rng.uniform(-1.0, 1.0);
    auto s1 = Vd::constant(random_tensor({3, 2, 2, 2}, rng));
    auto s2 = Vd::constant(random_tensor({3, 2, 2, 2}, rng));
    auto t1 = Vd::constant(random_tensor({3, 2, 2, 2}, rng));
    auto t2 = Vd::constant(random_tensor({3, 2, 2, 2}, rng));
    auto res = attack::distill_loss<double>(bundle<double>({{1, s1}, {2, s2}}),
                                            bundle<double>({{1, t1}, {2, t2}}), cfg, logits);
    REQUIRE(res.loss.value()[0] >= 0.0);
    REQUIRE(res.loss.value()[0] <= cfg.tau + 1.0 + 1e-9);
  }
}

TEST_CASE("total_loss worked examples and affinity") {
  auto adv = Vd::constant(Tensor<double>::scalar(0.3));
  auto dis = Vd::constant(Tensor<double>::scalar(0.1));
  REQUIRE(attack::total_loss(adv, dis, 0.7).value()[0] == Catch::Approx(0.37).epsilon(1e-12));
  REQUIRE(attack::total_loss(adv, dis, 0.0).value()[0] == Catch::Approx(0.3).epsilon(1e-12));
  auto zero = Vd::constant(Tensor<double>::scalar(0.0));
  REQUIRE(attack::total_loss(adv, zero, 0.7).value()[0] == Catch::Approx(0.3).epsilon(1e-12));
  REQUIRE_THROWS_AS(attack::total_loss(adv, dis, -0.5), ConfigError);

  // affine in distill with slope lambda
  const double lambda = 1.3;
  auto d1 = Vd::constant(Tensor<double>::scalar(0.25));
  auto d2 = Vd::constant(Tensor<double>::scalar(0.75));
  const double t1 = attack::total_loss(adv, d1, lambda).value()[0];
  const double t2 = attack::total_loss(adv, d2, lambda).value()[0];
  REQUIRE((t2 - t1) / (0.75 - 0.25) == Catch::Approx(lambda).epsilon(1e-12));
}

TEST_CASE("loss breakdown identity: total == adv + lambda * distill") {
  Rng rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    const double a = rng.normal(), d = std::abs(rng.normal()), l = std::abs(rng.normal());
    auto adv = Vd::constant(Tensor<double>::scalar(a));
    auto dis = Vd::constant(Tensor<double>::scalar(d));
    REQUIRE(std::abs(attack::total_loss(adv, dis, l).value()[0] - (a + l * d)) < 1e-7);
  }
}
