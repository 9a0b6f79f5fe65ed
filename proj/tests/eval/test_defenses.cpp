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

#include "advgen/eval/defenses.hpp"

using namespace advgen;
using eval::DefenseKind;
using eval::DefenseSpec;

namespace {
Tensor<float> random_batch(std::int64_t n, std::int64_t hw, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t({n, 3, hw, hw});
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform());
  return t;
}
}  // namespace

TEST_CASE("bdr quantizer worked example: 0.5 at 4 bits is 8/15") {
  Tensor<float> x({1, 3, 1, 1});
  x.fill(0.5f);
  auto q = eval::bdr(x, 4);
  REQUIRE(q[0] == Catch::Approx(8.0 / 15.0).epsilon(1e-7));
}

TEST_CASE("bdr at 8 bits is the identity on 8-bit-quantized input") {
  Tensor<float> x({1, 3, 4, 4});
  Rng rng(3);
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    x[i] = static_cast<float>(rng.below(256)) / 255.0f;
  }
  auto q = eval::bdr(x, 8);
  REQUIRE(bitwise_equal(q, x));
}

TEST_CASE("bdr output takes at most 2^bits distinct levels") {
  auto x = random_batch(1, 8, 5);
  auto q = eval::bdr(x, 3);
  std::set<float> levels(q.data(), q.data() + q.numel());
  REQUIRE(levels.size() <= 8);
  for (float v : levels) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
}

TEST_CASE("randomization is reproducible under a fixed seed") {
  auto x = random_batch(2, 32, 7);
  DefenseSpec spec;
  spec.kind = DefenseKind::kRandomization;
  spec.seed = 999;
  auto a = eval::defend(x, spec);
  auto b = eval::defend(x, spec);
  REQUIRE(bitwise_equal(a, b));

  spec.seed = 1000;
  auto c = eval::defend(x, spec);
  REQUIRE_FALSE(bitwise_equal(a, c));
}

TEST_CASE("randomization pads to the canonical canvas") {
  auto x = random_batch(2, 32, 9);
  DefenseSpec spec;
  spec.kind = DefenseKind::kRandomization;
  auto out = eval::defend(x, spec);
  REQUIRE(out.dim(2) == static_cast<std::int64_t>(std::ceil(1.1 * 32)));
  REQUIRE(out.dim(3) == out.dim(2));
  REQUIRE(out.min() >= 0.0f);
  REQUIRE(out.max() <= 1.0f);
}

TEST_CASE("jpeg round-trip stays in range and approximates the input") {
  auto x = random_batch(1, 16, 11);
  DefenseSpec spec;
  spec.kind = DefenseKind::kJPEG;
  spec.jpeg_quality = 95;
  auto out = eval::defend(x, spec);
  REQUIRE(out.shape() == x.shape());
  REQUIRE(out.min() >= 0.0f);
  REQUIRE(out.max() <= 1.0f);
  // high quality keeps the reconstruction close on smooth-ish content
  double mean_err = 0;
  for (std::int64_t i = 0; i < x.numel(); ++i) mean_err += std::abs(out[i] - x[i]);
  mean_err /= static_cast<double>(x.numel());
  REQUIRE(mean_err < 0.2);
}

TEST_CASE("defense spec parsing and validation") {
  auto bdr = DefenseSpec::parse("bdr:6");
  REQUIRE(bdr.kind == DefenseKind::kBDR);
  REQUIRE(bdr.bits == 6);
  auto jpeg = DefenseSpec::parse("jpeg:50");
  REQUIRE(jpeg.kind == DefenseKind::kJPEG);
  REQUIRE(jpeg.jpeg_quality == 50);
  auto rp = DefenseSpec::parse("rp:42");
  REQUIRE(rp.kind == DefenseKind::kRandomization);
  REQUIRE(rp.seed == 42);
  REQUIRE(DefenseSpec::parse("randomization").kind == DefenseKind::kRandomization);

  REQUIRE_THROWS_AS(DefenseSpec::parse("fog"), ConfigError);
  REQUIRE_THROWS_AS(DefenseSpec::parse("bdr:0"), ConfigError);
  REQUIRE_THROWS_AS(DefenseSpec::parse("bdr:9"), ConfigError);
  REQUIRE_THROWS_AS(DefenseSpec::parse("jpeg:0"), ConfigError);
}

TEST_CASE("defend validates input layout") {
  Tensor<float> bad({2, 1, 8, 8});
  DefenseSpec spec;
  REQUIRE_THROWS_AS(eval::defend(bad, spec), StructuralError);
}
