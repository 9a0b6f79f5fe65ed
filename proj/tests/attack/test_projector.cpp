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

#include "advgen/attack/projector.hpp"
#include "advgen/core/rng.hpp"

using namespace advgen;
using attack::PerturbationBudget;
using attack::project;

namespace {
Tensor<float> filled(Shape s, float v) { return Tensor<float>::full(std::move(s), v); }
}  // namespace

TEST_CASE("budget conversion is exact") {
  auto b = PerturbationBudget::from_255(10);
  REQUIRE(b.epsilon_unit() == 10.0 / 255.0);
  REQUIRE_THROWS_AS(PerturbationBudget::from_255(-1), ConfigError);
}

TEST_CASE("projection worked examples") {
  const Shape s{1, 1, 1, 1};
  SECTION("interior point untouched") {
    auto out = project(filled(s, 0.5f), filled(s, 0.51f), PerturbationBudget{10});
    REQUIRE(out[0] == 0.51f);
  }
  SECTION("budget clamp binds") {
    auto out = project(filled(s, 0.5f), filled(s, 0.7f), PerturbationBudget{10});
    REQUIRE(out[0] == Catch::Approx(0.5 + 10.0 / 255.0).epsilon(1e-6));
  }
  SECTION("valid-range clamp dominates") {
    auto out = project(filled(s, 0.01f), filled(s, -0.2f), PerturbationBudget{10});
    REQUIRE(out[0] == 0.0f);  // 0.01 - 10/255 < 0
  }
}

TEST_CASE("projection properties on random triples") {
  Rng rng(99);
  const Shape s{4, 3, 6, 6};
  for (int trial = 0; trial < 50; ++trial) {
    const double eps255 = rng.uniform(0.0, 32.0);
    const float eps = static_cast<float>(eps255 / 255.0);
    Tensor<float> x(s), a(s);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      x[i] = static_cast<float>(rng.uniform());
      a[i] = static_cast<float>(rng.uniform(-0.5, 1.5));
    }
    auto out = project(x, a, PerturbationBudget{eps255});
    auto out2 = project(x, out, PerturbationBudget{eps255});
    float budget_violation = 0, lo = 1, hi = 0;
    bool idempotent = true;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      budget_violation = std::max(budget_violation, std::abs(out[i] - x[i]) - eps);
      lo = std::min(lo, out[i]);
      hi = std::max(hi, out[i]);
      idempotent = idempotent && (out2[i] == out[i]);
    }
    REQUIRE(budget_violation <= 1e-7f);
    REQUIRE(lo >= 0.0f);
    REQUIRE(hi <= 1.0f);
    REQUIRE(idempotent);
  }
}

TEST_CASE("identity: in-budget in-range images pass through") {
  Rng rng(7);
  const Shape s{2, 3, 4, 4};
  Tensor<float> x(s), a(s);
  const float eps = 8.0f / 255.0f;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    x[i] = static_cast<float>(rng.uniform(0.2, 0.8));
    a[i] = std::min(std::max(x[i] + static_cast<float>(rng.uniform(-0.9, 0.9)) * eps, 0.0f), 1.0f);
  }
  auto out = project(x, a, PerturbationBudget{8});
  REQUIRE(bitwise_equal(out, a));
}

TEST_CASE("monotone in eps: smaller budgets never deviate more") {
  Rng rng(13);
  const Shape s{2, 3, 5, 5};
  Tensor<float> x(s), a(s);
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    x[i] = static_cast<float>(rng.uniform());
    a[i] = static_cast<float>(rng.uniform(-0.3, 1.3));
  }
  auto p1 = project(x, a, PerturbationBudget{4});
  auto p2 = project(x, a, PerturbationBudget{12});
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    REQUIRE(std::abs(p1[i] - x[i]) <= std::abs(p2[i] - x[i]) + 1e-7f);
  }
}

TEST_CASE("zero budget returns the clean image exactly") {
  Rng rng(21);
  const Shape s{2, 3, 4, 4};
  Tensor<float> x(s), a(s);
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    x[i] = static_cast<float>(rng.uniform());
    a[i] = static_cast<float>(rng.uniform());
  }
  auto out = project(x, a, PerturbationBudget{0});
  REQUIRE(bitwise_equal(out, x));
}

TEST_CASE("projection rejects shape mismatches") {
  Tensor<float> x({1, 3, 4, 4}), a({1, 3, 8, 8});
  REQUIRE_THROWS_AS(project(x, a, PerturbationBudget{10}), StructuralError);
}

TEST_CASE("projection is differentiable a.e. with pass/block gradient") {
  auto x = ag::Variable<float>::constant(Tensor<float>({1, 1, 1, 3}, {0.5f, 0.5f, 0.5f}));
  auto a = ag::Variable<float>::leaf(Tensor<float>({1, 1, 1, 3}, {0.52f, 0.9f, -0.4f}), true);
  auto out = project(x, a, PerturbationBudget{10});
  auto loss = ag::sum_all(out);
  loss.backward();
  REQUIRE(a.grad()[0] == 1.0f);  // interior: gradient passes
  REQUIRE(a.grad()[1] == 0.0f);  // clipped above
  REQUIRE(a.grad()[2] == 0.0f);  // clipped below
}
