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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icecache/types.hpp"

namespace icecache {

struct WorkloadShape {
  std::size_t layers = 0;
  std::size_t kv_heads = 0;
  std::size_t q_groups = 0;  // query heads per kv head
  std::size_t key_dim = 0;
  std::size_t value_dim = 0;
  std::size_t n_tokens = 0;

  /// Floats per (token, layer, kv head) record: key, value, then one query
  /// per query head of the group.
  std::size_t record_floats() const { return key_dim + value_dim + q_groups * key_dim; }
  std::size_t total_floats() const { return n_tokens * layers * kv_heads * record_floats(); }

  void validate() const;
  friend bool operator==(const WorkloadShape&, const WorkloadShape&) = default;
};

/// Pre-generated q/k/v streams, token-major then layer then kv head, exactly
/// the payload order of the trace file.
class Workload {
 public:
  Workload() = default;
  explicit Workload(WorkloadShape shape);

  const WorkloadShape& shape() const { return shape_; }

  std::span<const float> key(std::size_t token, std::size_t layer, std::size_t head) const;
  std::span<const float> value(std::size_t token, std::size_t layer, std::size_t head) const;
  std::span<const float> query(std::size_t token, std::size_t layer, std::size_t head,
                               std::size_t group) const;
  std::span<float> key(std::size_t token, std::size_t layer, std::size_t head);
  std::span<float> value(std::size_t token, std::size_t layer, std::size_t head);
  std::span<float> query(std::size_t token, std::size_t layer, std::size_t head,
                         std::size_t group);

  std::span<const float> raw() const { return data_; }
  std::span<float> raw() { return data_; }

  // Generator metadata; absent for traces.
  std::vector<std::uint32_t> cluster_of;         // per token, clustered kind
  std::vector<std::uint32_t> query_cluster_of;   // per token, clustered kind
  std::optional<TokenId> needle;                 // planted_needle kind

 private:
  std::size_t offset(std::size_t token, std::size_t layer, std::size_t head) const;

  WorkloadShape shape_;
  std::vector<float> data_;
};

enum class WorkloadKind { kClustered, kPlantedNeedle, kUniform, kTraceFile };

const char* to_string(WorkloadKind kind);
WorkloadKind parse_workload_kind(const std::string& name);

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::kClustered;
  std::size_t n_tokens = 4096;    // prompt length
  std::size_t decode_steps = 0;   // extra tokens appended after the prompt
  std::size_t layers = 4;
  std::size_t kv_heads = 2;
  std::size_t q_groups = 1;
  std::size_t key_dim = 64;
  std::size_t value_dim = 64;
  std::size_t clusters = 32;
  double cluster_spread = 0.1;
  double needle_gain = 1.0;
  // Relative perturbation separating layers and heads; small values make
  // neighbouring layers agree on which tokens matter.
  double layer_jitter = 0.05;
  std::uint64_t seed = 0;
  std::string trace_path;

  void validate() const;
};

/// Deterministic in `spec.seed`. Clustered keys are drawn around `clusters`
/// Gaussian centers and every query aims at one center. The planted needle
/// sits in the middle of the prompt at needle_gain * c along the held-out
/// query direction, c being the largest haystack key norm.
Workload generate_workload(const WorkloadSpec& spec);

}  // namespace icecache
