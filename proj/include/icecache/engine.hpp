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
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "icecache/attention.hpp"
#include "icecache/dci.hpp"
#include "icecache/pagestore.hpp"
#include "icecache/types.hpp"
#include "icecache/workload.hpp"

namespace icecache {

struct EngineConfig {
  std::size_t layers = 4;
  std::size_t kv_heads = 2;
  std::size_t query_heads_per_group = 1;
  std::size_t key_dim = 64;
  std::size_t value_dim = 64;
  std::size_t page_size = 16;
  std::size_t token_budget = 64;  // kUnbounded selects every indexed token
  double promotion_ratio = 0.1;
  std::size_t sink_pages = 1;
  std::size_t window_pages = 2;
  std::size_t skip_layers = 2;
  std::size_t reuse_stride = 0;  // 0 = off, otherwise anchor spacing >= 2
  std::size_t beam = 0;          // 0 = 2 * token_budget
  std::size_t visit_cap = 0;     // 0 = SearchBudget::for_k default
  bool exhaustive_search = false;
  std::size_t parent_beam = 8;
  std::size_t scalar_bytes = 4;
  std::uint64_t seed = 0;
  bool evaluate = false;  // exact oracle metrics every step
  bool baseline = false;  // token-order paging comparison (needs evaluate)
  std::size_t workers = 1;

  void validate() const;
  SearchBudget search_budget() const;
  DciOptions dci_options(std::size_t layer, std::size_t head) const;
};

struct StepMetrics {
  double recall_at_k = 1.0;
  double page_hit_rate = 1.0;
  double covered_attention_mass = 1.0;
  double approx_rel_error = 0.0;
  std::uint64_t pages_loaded = 0;
  std::uint64_t bytes = 0;
  std::uint64_t transactions = 0;
  std::uint64_t dci_queries = 0;
  std::uint64_t rotations = 0;
  std::optional<double> baseline_hit_rate;
};

struct StepResult {
  TokenId token = 0;
  // outputs[layer][kv_head * query_heads_per_group + group]
  std::vector<std::vector<AttentionOutput>> outputs;
  // Selected indexed pages per [layer][kv_head]; empty for skipped layers.
  std::vector<std::vector<std::vector<PageId>>> selected_pages;
  StepMetrics metrics;
};

struct PipelineEstimate {
  double serial = 0.0;
  double pipelined = 0.0;
};

/// Three-stage (prefill compute, offload, indexing) layer pipeline:
/// serial = L (tp + to + ti); pipelined = L max(tp, to, ti) plus the two
/// smaller stage times as fill/drain.
PipelineEstimate pipeline_estimate(double t_prefill, double t_offload,
                                   double t_index, std::size_t layers);

/// Token-order page used by the comparison baseline.
struct OrderedPage {
  std::vector<TokenId> tokens;
  std::vector<float> lo;
  std::vector<float> hi;

  void add(TokenId token, std::span<const float> key);
  /// Per-page upper bound on q.k over the page's keys.
  double upper_bound(std::span<const float> query) const;
};

/// Cache state of one (layer, kv head).
struct HeadState {
  HeadState(std::size_t key_dim, std::size_t value_dim, std::size_t scalar_bytes)
      : store(key_dim, value_dim, scalar_bytes) {}

  std::optional<DciTree> tree;  // absent for skipped layers
  TierStore store;
  PageTable table;
  std::vector<PageId> sink_pages;
  std::deque<PageId> window_pages;
  std::vector<Entry> log;  // every cached token, in token order
  std::vector<OrderedPage> ordered_pages;
};

/// Drives prefill and decode over a pre-generated workload.
///
/// Heads inside a layer are independent and may run on separate workers;
/// layers run in order.
class Engine {
 public:
  explicit Engine(EngineConfig config);

  /// Lays out the first `prompt_tokens` tokens: sink pages, window pages and
  /// (for layers past skip_layers) an indexed middle region.
  void prefill(const Workload& workload, std::size_t prompt_tokens);

  /// Processes token `token` (must be the next one after the cache tail).
  StepResult decode_step(const Workload& workload, TokenId token);

  /// Top-k indexed tokens for `query` in (layer, head).
  std::vector<TokenId> select_tokens(std::span<const float> query,
                                     std::size_t layer, std::size_t head) const;
  /// Pages holding select_tokens(query).
  std::vector<PageId> page_select(std::span<const float> query, std::size_t layer,
                                  std::size_t head) const;

  bool is_anchor(std::size_t layer) const;

  /// Reuse-mode selection for one head group. Anchor layers run a fresh
  /// selection per query and remember the token sets; other layers map the
  /// latest anchor's token sets through their own page table.
  std::vector<PageId> select_with_reuse(std::size_t layer, std::size_t head,
                                        std::span<const std::span<const float>> queries,
                                        std::size_t* dci_queries = nullptr);

  const EngineConfig& config() const { return config_; }
  const HeadState& head(std::size_t layer, std::size_t kv_head) const;
  std::size_t tokens_cached() const { return tokens_cached_; }
  std::size_t prompt_tokens() const { return prompt_tokens_; }
  std::uint64_t total_dci_queries() const { return total_dci_queries_; }

  /// Tree, page-store and token-accounting invariants; throws
  /// InvariantViolation naming the module.
  void check_invariants() const;

 private:
  struct HeadStep;

  HeadState& head_mut(std::size_t layer, std::size_t kv_head);
  void prefill_head(const Workload& wl, std::size_t layer, std::size_t head);
  void step_head(const Workload& wl, TokenId token, std::size_t layer,
                 std::size_t head, HeadStep& out);
  void rotate_window(HeadState& hs, HeadStep& out);
  void evaluate_head(const HeadState& hs, std::span<const std::span<const float>> queries,
                     const std::vector<std::vector<TokenId>>& retrieved,
                     const std::vector<KvView>& loaded,
                     const std::vector<AttentionOutput>& outputs,
                     std::size_t pages_selected, HeadStep& out) const;

  EngineConfig config_;
  std::vector<HeadState> heads_;
  // reuse_tokens_[kv_head][group]: token set of the latest anchor layer.
  std::vector<std::vector<std::vector<TokenId>>> reuse_tokens_;
  std::size_t prompt_tokens_ = 0;
  std::size_t tokens_cached_ = 0;
  std::uint64_t total_dci_queries_ = 0;
  bool prefilled_ = false;
};

}  // namespace icecache
