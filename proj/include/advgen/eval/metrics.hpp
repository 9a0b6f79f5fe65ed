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

#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advgen/common.hpp"

namespace advgen::eval {

/// Per-sample outcome: ground truth, clean prediction, adversarial prediction.
struct PredictionRecord {
  int label = 0;
  int clean = 0;
  int adv = 0;
};

/// The four attack metrics plus the set sizes that define them. Over the
/// evaluation set D, with C = {clean == label} and I = D \ C:
///   accuracy = |{adv == label}| / |D|        (adversarial top-1)
///   asr      = |{x in C : adv != label}| / |C|
///   fr       = |{adv != clean}| / |D|
///   acr      = |{x in I : adv == label}| / |I|
/// asr/acr are undefined (null) when their denominator is empty; undefined
/// rates are excluded from aggregation.
struct MetricReport {
  std::int64_t n_total = 0;
  std::int64_t n_clean_correct = 0;
  std::int64_t n_clean_wrong = 0;
  double accuracy = 0.0;
  double fr = 0.0;
  std::optional<double> asr;
  std::optional<double> acr;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"n_total", n_total},
                        {"n_clean_correct", n_clean_correct},
                        {"n_clean_wrong", n_clean_wrong},
                        {"accuracy", accuracy},
                        {"fr", fr}};
    j["asr"] = asr ? nlohmann::json(*asr) : nlohmann::json(nullptr);
    j["acr"] = acr ? nlohmann::json(*acr) : nlohmann::json(nullptr);
    return j;
  }

  static MetricReport from_json(const nlohmann::json& j) {
    MetricReport r;
    r.n_total = j.at("n_total").get<std::int64_t>();
    r.n_clean_correct = j.at("n_clean_correct").get<std::int64_t>();
    r.n_clean_wrong = j.at("n_clean_wrong").get<std::int64_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.fr = j.at("fr").get<double>();
    if (!j.at("asr").is_null()) r.asr = j.at("asr").get<double>();
    if (!j.at("acr").is_null()) r.acr = j.at("acr").get<double>();
    return r;
  }
};

inline MetricReport compute_metrics(const std::vector<PredictionRecord>& records) {
  if (records.empty()) throw DataError("compute_metrics: empty record list");
  MetricReport r;
  r.n_total = static_cast<std::int64_t>(records.size());
  std::int64_t adv_correct = 0, asr_hits = 0, fr_hits = 0, acr_hits = 0;
  for (const auto& rec : records) {
    const bool clean_correct = rec.clean == rec.label;
    if (clean_correct) {
      ++r.n_clean_correct;
      if (rec.adv != rec.label) ++asr_hits;
    } else {
      ++r.n_clean_wrong;
      if (rec.adv == rec.label) ++acr_hits;
    }
    if (rec.adv == rec.label) ++adv_correct;
    if (rec.adv != rec.clean) ++fr_hits;
  }
  r.accuracy = static_cast<double>(adv_correct) / static_cast<double>(r.n_total);
  r.fr = static_cast<double>(fr_hits) / static_cast<double>(r.n_total);
  if (r.n_clean_correct > 0) {
    r.asr = static_cast<double>(asr_hits) / static_cast<double>(r.n_clean_correct);
  }
  if (r.n_clean_wrong > 0) {
    r.acr = static_cast<double>(acr_hits) / static_cast<double>(r.n_clean_wrong);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Aggregation across victims
// ---------------------------------------------------------------------------

struct AggregateRow {
  std::string victim;
  MetricReport report;
};

struct AggregateTable {
  std::vector<AggregateRow> rows;
  // exact arithmetic means over rows where the rate is defined
  std::optional<double> mean_accuracy, mean_asr, mean_fr, mean_acr;
};

inline AggregateTable aggregate(const std::vector<AggregateRow>& rows) {
  AggregateTable t;
  t.rows = rows;
  double acc = 0, fr = 0, asr = 0, acr = 0;
  int n = 0, n_asr = 0, n_acr = 0;
  for (const auto& row : rows) {
    acc += row.report.accuracy;
    fr += row.report.fr;
    ++n;
    if (row.report.asr) {
      asr += *row.report.asr;
      ++n_asr;
    }
    if (row.report.acr) {
      acr += *row.report.acr;
      ++n_acr;
    }
  }
  if (n > 0) {
    t.mean_accuracy = acc / n;
    t.mean_fr = fr / n;
  }
  if (n_asr > 0) t.mean_asr = asr / n_asr;
  if (n_acr > 0) t.mean_acr = acr / n_acr;
  return t;
}

inline std::string format_rate(const std::optional<double>& v) {
  if (!v) return "   n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << std::setw(6) << (*v * 100.0);
  return os.str();
}

/// Aligned text table: one row per victim, a mean row, rates in percent.
/// Undefined rates print as n/a and are flagged beneath the table.
inline std::string format_table(const AggregateTable& t) {
  std::ostringstream os;
  std::size_t name_w = 6;
  for (const auto& row : t.rows) name_w = std::max(name_w, row.victim.size());
  os << std::left << std::setw(static_cast<int>(name_w)) << "victim"
     << "  |D|    |C|    |I|    Acc%   ASR%   FR%    ACR%\n";
  os << std::string(name_w + 50, '-') << "\n";
  bool any_undefined = false;
  for (const auto& row : t.rows) {
    const auto& r = row.report;
    os << std::left << std::setw(static_cast<int>(name_w)) << row.victim << "  "
       << std::right << std::setw(5) << r.n_total << "  " << std::setw(5)
       << r.n_clean_correct << "  " << std::setw(5) << r.n_clean_wrong << "  "
       << format_rate(r.accuracy) << " " << format_rate(r.asr) << " "
       << format_rate(r.fr) << " " << format_rate(r.acr) << "\n";
    any_undefined = any_undefined || !r.asr || !r.acr;
  }
  os << std::string(name_w + 50, '-') << "\n";
  os << std::left << std::setw(static_cast<int>(name_w)) << "mean"
     << "                        " << format_rate(t.mean_accuracy) << " "
     << format_rate(t.mean_asr) << " " << format_rate(t.mean_fr) << " "
     << format_rate(t.mean_acr) << "\n";
  if (any_undefined) {
    os << "note: n/a rates have empty denominators and are excluded from the mean\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Per-record dumps (id, label, clean, adv) as delimited rows
// ---------------------------------------------------------------------------

inline void write_records(const std::filesystem::path& path,
                          const std::vector<PredictionRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write record dump '" + path.string() + "'");
  out << "id,label,clean,adv\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    out << i << "," << records[i].label << "," << records[i].clean << ","
        << records[i].adv << "\n";
  }
}

inline std::vector<PredictionRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open record dump '" + path.string() + "'");
  std::vector<PredictionRecord> records;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first && line.rfind("id,", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    PredictionRecord r;
    long id = 0;
    if (std::sscanf(line.c_str(), "%ld,%d,%d,%d", &id, &r.label, &r.clean, &r.adv) != 4) {
      throw DataError("malformed record line: '" + line + "'");
    }
    records.push_back(r);
  }
  if (records.empty()) throw DataError("record dump '" + path.string() + "' is empty");
  return records;
}

}  // namespace advgen::eval
