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
#include <algorithm>
#include <filesystem>

#include "advgen/core/rng.hpp"
#include "advgen/eval/metrics.hpp"

using namespace advgen;
using eval::MetricReport;
using eval::PredictionRecord;

namespace {

/// Independent brute-force oracle: materialize the sets C and I and count
/// membership straight from the definitions.
MetricReport oracle(const std::vector<PredictionRecord>& records) {
  std::vector<PredictionRecord> C, I;
  for (const auto& r : records) {
    (r.clean == r.label ? C : I).push_back(r);
  }
  MetricReport m;
  m.n_total = static_cast<std::int64_t>(records.size());
  m.n_clean_correct = static_cast<std::int64_t>(C.size());
  m.n_clean_wrong = static_cast<std::int64_t>(I.size());
  std::int64_t acc = 0, fr = 0;
  for (const auto& r : records) {
    if (r.adv == r.label) ++acc;
    if (r.adv != r.clean) ++fr;
  }
  m.accuracy = static_cast<double>(acc) / static_cast<double>(records.size());
  m.fr = static_cast<double>(fr) / static_cast<double>(records.size());
  if (!C.empty()) {
    std::int64_t hits = 0;
    for (const auto& r : C) {
      if (r.clean == r.label && r.adv != r.label) ++hits;
    }
    m.asr = static_cast<double>(hits) / static_cast<double>(C.size());
  }
  if (!I.empty()) {
    std::int64_t hits = 0;
    for (const auto& r : I) {
      if (r.clean != r.label && r.adv == r.label) ++hits;
    }
    m.acr = static_cast<double>(hits) / static_cast<double>(I.size());
  }
  return m;
}

std::vector<PredictionRecord> random_records(Rng& rng, std::size_t n, int classes) {
  std::vector<PredictionRecord> out(n);
  for (auto& r : out) {
    r.label = static_cast<int>(rng.below(classes));
    r.clean = static_cast<int>(rng.below(classes));
    r.adv = static_cast<int>(rng.below(classes));
  }
  return out;
}

bool same_opt(const std::optional<double>& a, const std::optional<double>& b) {
  if (a.has_value() != b.has_value()) return false;
  return !a || *a == *b;
}

}  // namespace

TEST_CASE("worked 5-record example") {
  std::vector<PredictionRecord> recs = {
      {0, 0, 1}, {0, 1, 1}, {1, 1, 0}, {1, 2, 1}, {2, 2, 2}};
  auto m = eval::compute_metrics(recs);
  REQUIRE(m.n_total == 5);
  REQUIRE(m.n_clean_correct == 3);
  REQUIRE(m.n_clean_wrong == 2);
  REQUIRE(m.accuracy == Catch::Approx(0.4));
  REQUIRE(*m.asr == Catch::Approx(2.0 / 3.0));
  REQUIRE(m.fr == Catch::Approx(0.6));
  REQUIRE(*m.acr == Catch::Approx(0.5));
}

TEST_CASE("no prediction change: everything zero, accuracy = |C|/|D|") {
  std::vector<PredictionRecord> recs = {{0, 0, 0}, {1, 2, 2}, {1, 1, 1}, {2, 0, 0}};
  auto m = eval::compute_metrics(recs);
  REQUIRE(m.fr == 0.0);
  REQUIRE(*m.asr == 0.0);
  REQUIRE(*m.acr == 0.0);
  REQUIRE(m.accuracy == Catch::Approx(0.5));
}

TEST_CASE("all clean-correct, all attacked: ASR 1, FR 1, ACR undefined") {
  std::vector<PredictionRecord> recs = {{0, 0, 1}, {1, 1, 2}, {2, 2, 0}};
  auto m = eval::compute_metrics(recs);
  REQUIRE(*m.asr == 1.0);
  REQUIRE(m.fr == 1.0);
  REQUIRE(m.accuracy == 0.0);
  REQUIRE_FALSE(m.acr.has_value());  // |I| = 0
}

TEST_CASE("empty input is an explicit error") {
  REQUIRE_THROWS_AS(eval::compute_metrics({}), DataError);
}

TEST_CASE("oracle equivalence on 1000 random record sets") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = 1 + rng.below(50);
    auto recs = random_records(rng, n, 5);
    const auto a = eval::compute_metrics(recs);
    const auto b = oracle(recs);
    REQUIRE(a.n_total == b.n_total);
    REQUIRE(a.n_clean_correct == b.n_clean_correct);
    REQUIRE(a.n_clean_wrong == b.n_clean_wrong);
    REQUIRE(a.accuracy == b.accuracy);
    REQUIRE(a.fr == b.fr);
    REQUIRE(same_opt(a.asr, b.asr));
    REQUIRE(same_opt(a.acr, b.acr));
  }
}

TEST_CASE("decomposition: FR|D| >= ASR|C| + ACR|I|, equality without wrong-to-wrong") {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    auto recs = random_records(rng, 1 + rng.below(40), 4);
    auto m = eval::compute_metrics(recs);
    const double lhs = m.fr * static_cast<double>(m.n_total);
    const double rhs = (m.asr ? *m.asr * m.n_clean_correct : 0.0) +
                       (m.acr ? *m.acr * m.n_clean_wrong : 0.0);
    REQUIRE(lhs >= rhs - 1e-9);
    std::int64_t wrong_to_different_wrong = 0;
    for (const auto& r : recs) {
      if (r.clean != r.label && r.adv != r.clean && r.adv != r.label) {
        ++wrong_to_different_wrong;
      }
    }
    REQUIRE(lhs == Catch::Approx(rhs + wrong_to_different_wrong).margin(1e-9));
  }
}

TEST_CASE("permutation invariance and rate ranges") {
  Rng rng(31);
  auto recs = random_records(rng, 37, 6);
  auto m1 = eval::compute_metrics(recs);
  auto shuffled = recs;
  rng.shuffle(shuffled);
  auto m2 = eval::compute_metrics(shuffled);
  REQUIRE(m1.accuracy == m2.accuracy);
  REQUIRE(m1.fr == m2.fr);
  REQUIRE(same_opt(m1.asr, m2.asr));
  REQUIRE(same_opt(m1.acr, m2.acr));
  for (double v : {m1.accuracy, m1.fr, m1.asr.value_or(0.0), m1.acr.value_or(0.0)}) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
}

TEST_CASE("aggregate averages defined rates only") {
  MetricReport a;
  a.n_total = 4;
  a.accuracy = 0.5;
  a.fr = 0.25;
  a.asr = 1.0;  // acr undefined
  MetricReport b;
  b.n_total = 4;
  b.accuracy = 0.25;
  b.fr = 0.75;
  b.asr = 0.5;
  b.acr = 0.5;
  auto t = eval::aggregate({{"m1", a}, {"m2", b}});
  REQUIRE(*t.mean_accuracy == Catch::Approx(0.375));
  REQUIRE(*t.mean_fr == Catch::Approx(0.5));
  REQUIRE(*t.mean_asr == Catch::Approx(0.75));
  REQUIRE(*t.mean_acr == Catch::Approx(0.5));  // single defined entry
  const auto table = eval::format_table(t);
  REQUIRE(table.find("m1") != std::string::npos);
  REQUIRE(table.find("n/a") != std::string::npos);
  REQUIRE(table.find("excluded from the mean") != std::string::npos);
}

TEST_CASE("metric report json round-trip keeps nulls") {
  std::vector<PredictionRecord> recs = {{0, 0, 1}, {1, 1, 0}};
  auto m = eval::compute_metrics(recs);  // |I| = 0 -> acr null
  auto j = m.to_json();
  REQUIRE(j.at("acr").is_null());
  auto back = MetricReport::from_json(j);
  REQUIRE(back.accuracy == m.accuracy);
  REQUIRE_FALSE(back.acr.has_value());
  REQUIRE(back.asr.has_value());
}

TEST_CASE("record dump round-trips through csv") {
  Rng rng(13);
  auto recs = random_records(rng, 23, 5);
  const auto path = std::filesystem::temp_directory_path() / "advgen_records_test.csv";
  eval::write_records(path, recs);
  auto back = eval::read_records(path);
  REQUIRE(back.size() == recs.size());
  const auto m1 = eval::compute_metrics(recs);
  const auto m2 = eval::compute_metrics(back);
  REQUIRE(m1.accuracy == m2.accuracy);
  REQUIRE(m1.fr == m2.fr);
  REQUIRE(same_opt(m1.asr, m2.asr));
  REQUIRE(same_opt(m1.acr, m2.acr));
}

TEST_CASE("psnr utility") {
  Tensor<float> a({1, 3, 4, 4});
  a.fill(0.5f);
  Tensor<float> b = a.clone();
  REQUIRE(std::isinf(io::psnr(a, b)));
  b[0] += 0.1f;
  const double v = io::psnr(a, b);
  REQUIRE(v > 20.0);
  REQUIRE(v < 60.0);
  Tensor<float> c({1, 3, 2, 2});
  REQUIRE_THROWS_AS(io::psnr(a, c), StructuralError);
}
