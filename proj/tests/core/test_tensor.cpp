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

#include "advgen/core/rng.hpp"
#include "advgen/core/tensor.hpp"

using namespace advgen;

TEST_CASE("tensor construction and indexing") {
  Tensor<float> t({2, 3, 4, 5});
  REQUIRE(t.numel() == 120);
  REQUIRE(t.dim(2) == 4);
  t.at(1, 2, 3, 4) = 7.0f;
  REQUIRE(t[119] == 7.0f);
  REQUIRE(t.min() == 0.0f);
}

TEST_CASE("tensor shares storage across copies, clone detaches") {
  Tensor<float> a({4});
  Tensor<float> b = a;
  b[0] = 3.0f;
  REQUIRE(a[0] == 3.0f);
  Tensor<float> c = a.clone();
  c[0] = 9.0f;
  REQUIRE(a[0] == 3.0f);
}

TEST_CASE("reshape validates element count and shares data") {
  Tensor<float> a({2, 6});
  a[5] = 2.5f;
  auto b = a.reshape({3, 4});
  REQUIRE(b[5] == 2.5f);
  REQUIRE_THROWS_AS(a.reshape({5, 5}), StructuralError);
}

TEST_CASE("tensor reductions") {
  Tensor<double> a({2, 2}, {1.0, -2.0, 3.0, -4.0});
  REQUIRE(a.sum() == Catch::Approx(-2.0));
  REQUIRE(a.abs_max() == 4.0);
  REQUIRE(a.max() == 3.0);
  REQUIRE(a.all_finite());
  a[1] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_FALSE(a.all_finite());
}

TEST_CASE("rng reproducibility and state restore") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.uniform() == b.uniform());
  const std::string snap = a.state();
  std::vector<double> ahead;
  for (int i = 0; i < 10; ++i) ahead.push_back(a.normal());
  Rng c;
  c.restore(snap);
  for (int i = 0; i < 10; ++i) REQUIRE(c.normal() == ahead[static_cast<std::size_t>(i)]);
}

TEST_CASE("rng normal has sane moments") {
  Rng rng(7);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    sum += v;
    sq += v * v;
  }
  REQUIRE(std::abs(sum / n) < 0.03);
  REQUIRE(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("checksum changes when any byte changes") {
  Tensor<float> a({8});
  const auto h0 = a.checksum();
  a[3] = 1e-20f;
  REQUIRE(a.checksum() != h0);
}
