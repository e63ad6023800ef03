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

#include "icecache/engine.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>
#include <thread>

#include "icecache/error.hpp"
#include "icecache/geometry.hpp"
#include "icecache/rng.hpp"

namespace icecache {

// ------------------------------------------------------------ configuration

void EngineConfig::validate() const {
  if (layers == 0 || kv_heads == 0 || query_heads_per_group == 0) {
    throw ConfigError("layers, kv_heads and query_heads_per_group must be positive");
  }
  if (key_dim == 0 || value_dim == 0) {
    throw ConfigError("embedding dimensions must be positive");
  }
  if (page_size == 0) {
    throw ConfigError("page size must be positive");
  }
  if (token_budget == 0) {
    throw ConfigError("token budget must be >= 1");
  }
  if (!(promotion_ratio > 0.0 && promotion_ratio < 1.0)) {
    throw ConfigError("promotion ratio must lie in (0, 1)");
  }
  if (window_pages < 2) {
    throw ConfigError("at least two window pages are required");
  }
  if (reuse_stride == 1) {
    throw ConfigError("reuse stride must be 0 (off) or >= 2");
  }
  if (baseline && !evaluate) {
    throw ConfigError("the token-order baseline needs evaluation mode");
  }
  if (workers == 0) {
    throw ConfigError("workers must be >= 1");
  }
  if (parent_beam == 0 || scalar_bytes == 0) {
    throw ConfigError("parent_beam and scalar_bytes must be positive");
  }
}

SearchBudget EngineConfig::search_budget() const {
  if (exhaustive_search) {
    return SearchBudget::exhaustive(token_budget);
  }
  SearchBudget b = SearchBudget::for_k(token_budget);
  if (beam != 0) {
    b.beam = std::max(beam, token_budget);
  }
  if (visit_cap != 0) {
    b.visit_cap = std::max(visit_cap, token_budget);
  }
  return b;
}

DciOptions EngineConfig::dci_options(std::size_t layer, std::size_t head) const {
  DciOptions o;
  o.promotion_ratio = promotion_ratio;
  o.seed = Rng(seed).split("tree").split(layer, head).seed();
  o.parent_beam = parent_beam;
  o.parent_visit_cap = std::max<std::size_t>(64, parent_beam);
  return o;
}

PipelineEstimate pipeline_estimate(double t_prefill, double t_offload,
                                   double t_index, std::size_t layers) {
  for (double t : {t_prefill, t_offload, t_index}) {
    if (!(t >= 0.0) || !std::isfinite(t)) {
      throw InputError("pipeline stage times must be finite and non-negative");
    }
  }
  std::array<double, 3> stages{t_prefill, t_offload, t_index};
  std::sort(stages.begin(), stages.end());
  const auto n = static_cast<double>(layers);
  // Shared grouping keeps pipelined <= serial under rounding: for n >= 1,
  // fl(n * minor) >= minor.
  const double minor = stages[0] + stages[1];
  PipelineEstimate est;
  est.serial = n * stages[2] + n * minor;
  est.pipelined = layers == 0 ? 0.0 : n * stages[2] + minor;
  return est;
}

// ------------------------------------------------------------ token-order pages

void OrderedPage::add(TokenId token, std::span<const float> key) {
  if (tokens.empty()) {
    lo.assign(key.begin(), key.end());
    hi.assign(key.begin(), key.end());
  } else {
    for (std::size_t i = 0; i < key.size(); ++i) {
      lo[i] = std::min(lo[i], key[i]);
      hi[i] = std::max(hi[i], key[i]);
    }
  }
  tokens.push_back(token);
}

double OrderedPage::upper_bound(std::span<const float> query) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < query.size(); ++i) {
    const double q = query[i];
    acc += std::max(q * lo[i], q * hi[i]);
  }
  return acc;
}

// ------------------------------------------------------------ engine

struct Engine::HeadStep {
  std::vector<AttentionOutput> outputs;
  std::vector<PageId> selected;
  TransferStats transfers;
  std::uint64_t dci_queries = 0;
  std::uint64_t rotations = 0;
  bool indexed = false;
  std::size_t samples = 0;
  double recall = 0.0;
  double hit = 0.0;
  double mass = 0.0;
  double error = 0.0;
  double baseline_hit = 0.0;
};

Engine::Engine(EngineConfig config) : config_(std::move(config)) {
  config_.validate();
}

HeadState& Engine::head_mut(std::size_t layer, std::size_t kv_head) {
  return heads_.at(layer * config_.kv_heads + kv_head);
}

const HeadState& Engine::head(std::size_t layer, std::size_t kv_head) const {
  if (layer >= config_.layers || kv_head >= config_.kv_heads) {
    throw InputError("head index out of range");
  }
  return heads_.at(layer * config_.kv_heads + kv_head);
}

namespace {

void check_shape(const EngineConfig& cfg, const WorkloadShape& sh) {
  if (sh.layers != cfg.layers || sh.kv_heads != cfg.kv_heads ||
      sh.q_groups != cfg.query_heads_per_group || sh.key_dim != cfg.key_dim ||
      sh.value_dim != cfg.value_dim) {
    throw ConfigError("workload shape does not match the engine config");
  }
}

Entry make_entry(const Workload& wl, TokenId t, std::size_t l, std::size_t h) {
  const auto k = wl.key(t, l, h);
  const auto v = wl.value(t, l, h);
  return Entry{t, Vector(k.begin(), k.end()), Vector(v.begin(), v.end())};
}

void append_page_views(const Page& page, std::vector<KvView>& views) {
  for (const Entry& e : page.entries) {
    views.push_back({e.token, e.key, e.value});
  }
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      fn(i);
    }
    return;
  }
  const std::size_t pool = std::min(workers, n);
  std::vector<std::exception_ptr> errors(pool);
  std::vector<std::thread> threads;
  threads.reserve(pool);
  for (std::size_t w = 0; w < pool; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += pool) {
          fn(i);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) {
    t.join();
  }
  for (auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
}

// Threshold score of the k-th best entry; tokens scoring at least this much
// count as oracle top-k, which keeps the metrics tie-aware.
double kth_score(std::vector<double> scores, std::size_t k) {
  std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   scores.end(), std::greater<>());
  return scores[k - 1];
}

}  // namespace

void Engine::prefill(const Workload& workload, std::size_t prompt_tokens) {
  check_shape(config_, workload.shape());
  if (prompt_tokens == 0 || prompt_tokens > workload.shape().n_tokens) {
    throw ConfigError("prompt length must be in [1, workload tokens]");
  }
  heads_.clear();
  heads_.reserve(config_.layers * config_.kv_heads);
  for (std::size_t i = 0; i < config_.layers * config_.kv_heads; ++i) {
    heads_.emplace_back(config_.key_dim, config_.value_dim, config_.scalar_bytes);
  }
  reuse_tokens_.assign(config_.kv_heads,
                       std::vector<std::vector<TokenId>>(config_.query_heads_per_group));
  prompt_tokens_ = prompt_tokens;
  tokens_cached_ = prompt_tokens;
  total_dci_queries_ = 0;

  for (std::size_t l = 0; l < config_.layers; ++l) {
    parallel_for(config_.kv_heads, config_.workers,
                 [&](std::size_t h) { prefill_head(workload, l, h); });
  }
  prefilled_ = true;
}

void Engine::prefill_head(const Workload& wl, std::size_t layer, std::size_t head) {
  HeadState& hs = head_mut(layer, head);
  const std::size_t n = prompt_tokens_;
  hs.log.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    hs.log.push_back(make_entry(wl, static_cast<TokenId>(t), layer, head));
  }
  if (layer < config_.skip_layers) {
    return;
  }

  const std::size_t s = config_.page_size;
  const std::size_t sink_tokens = std::min(n, config_.sink_pages * s);
  const std::size_t rest = n - sink_tokens;
  const std::size_t window_tokens =
      std::min(rest, (config_.window_pages - 1) * s + rest % s);
  const std::size_t middle_end = n - window_tokens;

  for (std::size_t t = 0; t < sink_tokens; ++t) {
    if (hs.sink_pages.empty() || hs.store.page(hs.sink_pages.back()).full()) {
      hs.sink_pages.push_back(hs.store.allocate(PageRole::kSink, s));
    }
    hs.store.append(hs.sink_pages.back(), hs.log[t]);
  }

  double max_sq = 0.0;
  for (const Entry& e : hs.log) {
    max_sq = std::max(max_sq, squared_norm(e.key));
  }
  const KeyScale scale(max_sq > 0.0 ? kKeyScaleHeadroom * std::sqrt(max_sq) : 1.0);
  const DciOptions options = config_.dci_options(layer, head);

  if (middle_end > sink_tokens) {
    std::vector<TokenId> ids;
    std::vector<Vector> keys;
    ids.reserve(middle_end - sink_tokens);
    keys.reserve(middle_end - sink_tokens);
    for (std::size_t t = sink_tokens; t < middle_end; ++t) {
      ids.push_back(static_cast<TokenId>(t));
      keys.push_back(hs.log[t].key);
    }
    hs.tree.emplace(DciTree::build(ids, keys, options, scale));
    for (std::size_t t = sink_tokens; t < middle_end; ++t) {
      const NodeId node = hs.tree->node_of(static_cast<TokenId>(t));
      place_in_node(hs.store, hs.table, node, hs.log[t], s);
      if (hs.ordered_pages.empty() || hs.ordered_pages.back().tokens.size() >= s) {
        hs.ordered_pages.emplace_back();
      }
      hs.ordered_pages.back().add(static_cast<TokenId>(t), hs.log[t].key);
    }
  } else {
    hs.tree.emplace(config_.key_dim, scale, options);
  }

  for (std::size_t t = middle_end; t < n; ++t) {
    if (hs.window_pages.empty() || hs.store.page(hs.window_pages.back()).full()) {
      hs.window_pages.push_back(hs.store.allocate(PageRole::kWindow, s));
    }
    hs.store.append(hs.window_pages.back(), hs.log[t]);
  }
  if (hs.window_pages.empty() || hs.store.page(hs.window_pages.back()).full()) {
    hs.window_pages.push_back(hs.store.allocate(PageRole::kWindow, s));
  }
}

bool Engine::is_anchor(std::size_t layer) const {
  if (config_.reuse_stride == 0) {
    return true;
  }
  if (layer < config_.skip_layers) {
    return false;
  }
  return (layer - config_.skip_layers) % config_.reuse_stride == 0;
}

std::vector<TokenId> Engine::select_tokens(std::span<const float> query,
                                           std::size_t layer,
                                           std::size_t head) const {
  const HeadState& hs = this->head(layer, head);
  if (!hs.tree) {
    throw ConfigError("layer has no index (skipped layer)");
  }
  const TransformedPoint tq = transform_query(query);
  const std::vector<Neighbor> found =
      hs.tree->query(tq, kSentinelLevel, config_.search_budget());
  std::vector<TokenId> tokens;
  tokens.reserve(found.size());
  for (const Neighbor& nb : found) {
    tokens.push_back(nb.id);
  }
  return tokens;
}

std::vector<PageId> Engine::page_select(std::span<const float> query,
                                        std::size_t layer, std::size_t head) const {
  const std::vector<TokenId> tokens = select_tokens(query, layer, head);
  return this->head(layer, head).table.find_page_index(tokens);
}

std::vector<PageId> Engine::select_with_reuse(
    std::size_t layer, std::size_t head,
    std::span<const std::span<const float>> queries, std::size_t* dci_queries) {
  if (config_.reuse_stride == 0) {
    throw ConfigError("select_with_reuse called with reuse mode off");
  }
  if (layer < config_.skip_layers) {
    throw ConfigError("skipped layers do not select pages");
  }
  const HeadState& hs = this->head(layer, head);
  std::vector<std::vector<PageId>> per_query;
  for (std::size_t g = 0; g < queries.size(); ++g) {
    std::vector<TokenId>& remembered = reuse_tokens_.at(head).at(g);
    if (is_anchor(layer)) {
      remembered = select_tokens(queries[g], layer, head);
      if (dci_queries != nullptr) {
        ++*dci_queries;
      }
    }
    std::vector<TokenId> mapped;
    mapped.reserve(remembered.size());
    for (TokenId t : remembered) {
      if (hs.table.contains(t)) {
        mapped.push_back(t);
      }
    }
    per_query.push_back(hs.table.find_page_index(mapped));
  }
  return gqa_union<PageId>(per_query);
}

void Engine::rotate_window(HeadState& hs, HeadStep& out) {
  const std::size_t s = config_.page_size;
  const PageId newest = hs.window_pages.back();
  if (hs.store.page(newest).fill() + 1 < s) {
    return;
  }
  if (hs.window_pages.size() < config_.window_pages) {
    return;
  }
  const PageId oldest = hs.window_pages.front();
  hs.window_pages.pop_front();
  out.transfers += hs.store.offload(oldest);
  const std::vector<Entry> entries = hs.store.page(oldest).entries;
  OrderedPage ordered;
  for (const Entry& e : entries) {
    const NodeId node = hs.tree->insert(e.token, e.key);
    place_in_node(hs.store, hs.table, node, e, s);
    ordered.add(e.token, e.key);
  }
  if (!ordered.tokens.empty()) {
    hs.ordered_pages.push_back(std::move(ordered));
  }
  hs.store.release(oldest);
  ++out.rotations;
}

void Engine::step_head(const Workload& wl, TokenId token, std::size_t layer,
                       std::size_t head, HeadStep& out) {
  HeadState& hs = head_mut(layer, head);
  const std::size_t groups = config_.query_heads_per_group;
  std::vector<std::span<const float>> queries;
  for (std::size_t g = 0; g < groups; ++g) {
    queries.push_back(wl.query(token, layer, head, g));
  }
  Entry entry = make_entry(wl, token, layer, head);
  hs.log.push_back(entry);

  if (layer < config_.skip_layers) {
    std::vector<KvView> views;
    views.reserve(hs.log.size());
    for (const Entry& e : hs.log) {
      views.push_back({e.token, e.key, e.value});
    }
    for (const auto& q : queries) {
      out.outputs.push_back(full_attention(q, views));
    }
    return;
  }
  out.indexed = true;

  // Offload the oldest window page into the index before selecting, so its
  // tokens stay reachable during this step.
  rotate_window(hs, out);
  hs.store.append(hs.window_pages.back(), std::move(entry));
  if (hs.store.page(hs.window_pages.back()).full()) {
    hs.window_pages.push_back(hs.store.allocate(PageRole::kWindow, config_.page_size));
  }

  std::vector<std::vector<TokenId>> retrieved(groups);
  std::vector<PageId> selected;
  if (!hs.tree->empty()) {
    if (config_.reuse_stride != 0) {
      std::size_t queries_run = 0;
      selected = select_with_reuse(layer, head, queries, &queries_run);
      out.dci_queries += queries_run;
      for (std::size_t g = 0; g < groups; ++g) {
        for (TokenId t : reuse_tokens_[head][g]) {
          if (hs.table.contains(t)) {
            retrieved[g].push_back(t);
          }
        }
      }
    } else {
      std::vector<std::vector<PageId>> per_query(groups);
      for (std::size_t g = 0; g < groups; ++g) {
        retrieved[g] = select_tokens(queries[g], layer, head);
        ++out.dci_queries;
        per_query[g] = hs.table.find_page_index(retrieved[g]);
      }
      selected = gqa_union<PageId>(per_query);
    }
  }

  out.transfers += hs.store.backload(selected);
  hs.store.evict_unselected(selected);

  std::vector<KvView> loaded;
  for (PageId p : hs.sink_pages) {
    append_page_views(hs.store.hot_page(p), loaded);
  }
  for (PageId p : selected) {
    append_page_views(hs.store.hot_page(p), loaded);
  }
  for (PageId p : hs.window_pages) {
    append_page_views(hs.store.hot_page(p), loaded);
  }
  std::vector<TokenId> mask;
  mask.reserve(loaded.size());
  for (const KvView& v : loaded) {
    mask.push_back(v.token);
  }
  for (const auto& q : queries) {
    out.outputs.push_back(sparse_attention(q, mask, loaded));
  }
  out.selected = selected;

  if (config_.evaluate) {
    evaluate_head(hs, queries, retrieved, loaded, out.outputs, selected.size(), out);
  }
}

void Engine::evaluate_head(const HeadState& hs,
                           std::span<const std::span<const float>> queries,
                           const std::vector<std::vector<TokenId>>& retrieved,
                           const std::vector<KvView>& loaded,
                           const std::vector<AttentionOutput>& outputs,
                           std::size_t pages_selected, HeadStep& out) const {
  const std::size_t n = hs.log.size();
  std::vector<KvView> all;
  all.reserve(n);
  for (const Entry& e : hs.log) {
    all.push_back({e.token, e.key, e.value});
  }
  std::vector<char> is_loaded(n, 0);
  for (const KvView& v : loaded) {
    is_loaded[v.token] = 1;
  }
  std::vector<char> is_indexed(n, 0);
  std::size_t indexed_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (hs.table.contains(static_cast<TokenId>(t))) {
      is_indexed[t] = 1;
      ++indexed_count;
    }
  }

  // Token-order baseline loads as many pages as the semantic selection did,
  // ranked by the group-wide per-page upper bound.
  std::vector<char> baseline_loaded;
  if (config_.baseline) {
    baseline_loaded.assign(n, 0);
    for (std::size_t t = 0; t < n; ++t) {
      baseline_loaded[t] = is_indexed[t] ? 0 : 1;
    }
    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(hs.ordered_pages.size());
    for (std::size_t p = 0; p < hs.ordered_pages.size(); ++p) {
      double best = -INFINITY;
      for (const auto& q : queries) {
        best = std::max(best, hs.ordered_pages[p].upper_bound(q));
      }
      ranked.emplace_back(-best, p);
    }
    const std::size_t take = std::min(pages_selected, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take),
                      ranked.end());
    for (std::size_t i = 0; i < take; ++i) {
      for (TokenId t : hs.ordered_pages[ranked[i].second].tokens) {
        baseline_loaded[t] = 1;
      }
    }
  }

  const std::size_t budget = config_.token_budget;
  for (std::size_t g = 0; g < queries.size(); ++g) {
    const auto& q = queries[g];
    const AttentionOutput reference = full_attention(q, all);
    std::vector<double> scores(n);
    for (std::size_t t = 0; t < n; ++t) {
      scores[t] = dot(q, hs.log[t].key);
    }

    const std::size_t k_all = std::min(budget, n);
    const double tau_all = kth_score(scores, k_all);
    auto hit_rate = [&](const std::vector<char>& mask) {
      std::size_t hits = 0;
      for (std::size_t t = 0; t < n; ++t) {
        if (mask[t] && scores[t] >= tau_all) {
          ++hits;
        }
      }
      return static_cast<double>(std::min(hits, k_all)) / static_cast<double>(k_all);
    };
    out.hit += hit_rate(is_loaded);
    if (config_.baseline) {
      out.baseline_hit += hit_rate(baseline_loaded);
    }

    double mass = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      if (is_loaded[t]) {
        mass += reference.weights[t].weight;
      }
    }
    out.mass += std::min(mass, 1.0);

    double diff = 0.0;
    double norm = 0.0;
    for (std::size_t i = 0; i < reference.value_out.size(); ++i) {
      const double d = outputs[g].value_out[i] - reference.value_out[i];
      diff += d * d;
      norm += reference.value_out[i] * reference.value_out[i];
    }
    out.error += norm > 0.0 ? std::sqrt(diff / norm) : std::sqrt(diff);

    double recall = 1.0;
    const std::size_t k_idx = std::min(budget, indexed_count);
    if (k_idx > 0) {
      std::vector<double> indexed_scores;
      indexed_scores.reserve(indexed_count);
      for (std::size_t t = 0; t < n; ++t) {
        if (is_indexed[t]) {
          indexed_scores.push_back(scores[t]);
        }
      }
      const double tau = kth_score(std::move(indexed_scores), k_idx);
      std::size_t hits = 0;
      for (TokenId t : retrieved[g]) {
        if (scores[t] >= tau) {
          ++hits;
        }
      }
      recall = static_cast<double>(std::min(hits, k_idx)) / static_cast<double>(k_idx);
    }
    out.recall += recall;
    ++out.samples;
  }
}

StepResult Engine::decode_step(const Workload& workload, TokenId token) {
  if (!prefilled_) {
    throw ConfigError("decode_step before prefill");
  }
  check_shape(config_, workload.shape());
  if (token != tokens_cached_) {
    std::ostringstream os;
    os << "expected token " << tokens_cached_ << ", got " << token;
    throw InputError(os.str());
  }
  if (token >= workload.shape().n_tokens) {
    throw InputError("workload has no record for this token");
  }

  StepResult result;
  result.token = token;
  result.outputs.resize(config_.layers);
  result.selected_pages.resize(config_.layers);

  std::size_t samples = 0;
  double recall = 0.0, hit = 0.0, mass = 0.0, error = 0.0, baseline_hit = 0.0;
  TransferStats transfers;
  StepMetrics& m = result.metrics;
  m.dci_queries = 0;

  for (std::size_t l = 0; l < config_.layers; ++l) {
    std::vector<HeadStep> steps(config_.kv_heads);
    parallel_for(config_.kv_heads, config_.workers,
                 [&](std::size_t h) { step_head(workload, token, l, h, steps[h]); });
    result.selected_pages[l].resize(config_.kv_heads);
    for (std::size_t h = 0; h < config_.kv_heads; ++h) {
      HeadStep& s = steps[h];
      for (auto& o : s.outputs) {
        result.outputs[l].push_back(std::move(o));
      }
      result.selected_pages[l][h] = std::move(s.selected);
      m.pages_loaded += result.selected_pages[l][h].size();
      transfers += s.transfers;
      m.dci_queries += s.dci_queries;
      m.rotations += s.rotations;
      samples += s.samples;
      recall += s.recall;
      hit += s.hit;
      mass += s.mass;
      error += s.error;
      baseline_hit += s.baseline_hit;
    }
  }
  ++tokens_cached_;
  total_dci_queries_ += m.dci_queries;

  m.bytes = transfers.bytes_moved;
  m.transactions = transfers.transactions;
  if (samples > 0) {
    const auto s = static_cast<double>(samples);
    m.recall_at_k = recall / s;
    m.page_hit_rate = hit / s;
    m.covered_attention_mass = mass / s;
    m.approx_rel_error = error / s;
    if (config_.baseline) {
      m.baseline_hit_rate = baseline_hit / s;
    }
  } else if (config_.baseline) {
    m.baseline_hit_rate = 1.0;
  }
  return result;
}

void Engine::check_invariants() const {
  if (!prefilled_) {
    return;
  }
  for (std::size_t l = 0; l < config_.layers; ++l) {
    for (std::size_t h = 0; h < config_.kv_heads; ++h) {
      const HeadState& hs = head(l, h);
      if (hs.log.size() != tokens_cached_) {
        throw InvariantViolation("engine", "token log length disagrees with the cache");
      }
      if (l < config_.skip_layers) {
        if (hs.tree) {
          throw InvariantViolation("engine", "skipped layer owns an index");
        }
        continue;
      }
      if (!hs.tree) {
        throw InvariantViolation("engine", "indexed layer lacks a tree");
      }
      hs.tree->check_invariants();
      hs.store.check_invariants();

      if (hs.table.token_count() != hs.tree->size()) {
        throw InvariantViolation("pagestore", "page table and tree disagree on size");
      }
      for (const Entry& e : hs.log) {
        if (!hs.tree->contains(e.token)) {
          continue;
        }
        const PageId p = hs.table.page_of(e.token);
        const Page& page = hs.store.page(p);
        if (page.role != PageRole::kIndexed) {
          throw InvariantViolation("pagestore", "indexed token mapped to a resident page");
        }
        const bool in_page =
            std::any_of(page.entries.begin(), page.entries.end(),
                        [&](const Entry& x) { return x.token == e.token; });
        const auto node_pages = hs.table.pages_of(hs.tree->node_of(e.token));
        const bool page_of_node =
            std::find(node_pages.begin(), node_pages.end(), p) != node_pages.end();
        if (!in_page || !page_of_node) {
          throw InvariantViolation("pagestore", "token not stored in its node's pages");
        }
      }
      for (PageId p : hs.sink_pages) {
        if (!hs.store.is_pinned(p) || !hs.store.is_hot(p)) {
          throw InvariantViolation("pagestore", "sink page not pinned hot");
        }
      }
      for (PageId p : hs.window_pages) {
        if (!hs.store.is_pinned(p) || !hs.store.is_hot(p)) {
          throw InvariantViolation("pagestore", "window page not pinned hot");
        }
      }
      if (hs.store.total_entries() != tokens_cached_) {
        throw InvariantViolation("engine", "token accounting: pages hold " +
                                               std::to_string(hs.store.total_entries()) +
                                               " entries, expected " +
                                               std::to_string(tokens_cached_));
      }
    }
  }
}

}  // namespace icecache
