// Copyright 2026-present the icecache project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include <json.hpp>

#include "icecache/engine.hpp"
#include "icecache/workload.hpp"

namespace icecache {

inline constexpr int kReportSchemaVersion = 1;

struct BenchOptions {
  WorkloadSpec workload;
  EngineConfig engine;  // shape fields are overwritten from the workload
  std::size_t steps = 100;
};

struct ReportRow {
  std::size_t step = 0;
  TokenId token = 0;
  StepMetrics metrics;
};

struct Aggregates {
  std::size_t steps = 0;
  double mean_recall = 1.0;
  double mean_hit_rate = 1.0;
  double mean_covered_mass = 1.0;
  double mean_rel_error = 0.0;
  std::uint64_t total_pages_loaded = 0;
  std::uint64_t total_bytes = 0;
  std::uint64_t total_transactions = 0;
  std::uint64_t total_dci_queries = 0;
  std::uint64_t total_rotations = 0;
  std::optional<double> mean_baseline_hit_rate;

  friend bool operator==(const Aggregates&, const Aggregates&) = default;
};

struct Report {
  BenchOptions options;  // effective options after shape reconciliation
  std::size_t prompt_tokens = 0;
  std::vector<ReportRow> rows;
  Aggregates aggregates;
};

/// Means and totals over rows; empty input gives the neutral values.
Aggregates aggregate(const std::vector<ReportRow>& rows);

/// Prefill plus `steps` decode steps in evaluation mode. Runs the engine's
/// invariant walk after prefill and after the last step.
Report run_bench(const BenchOptions& options);

nlohmann::json config_json(const BenchOptions& options);
nlohmann::json to_json(const Report& report);
void write_csv(std::ostream& out, const Report& report);

}  // namespace icecache
