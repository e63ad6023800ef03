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

#include "icecache/attention.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "icecache/error.hpp"
#include "icecache/geometry.hpp"

namespace icecache {

double AttentionOutput::weight_of(TokenId token) const {
  const auto it = std::lower_bound(
      weights.begin(), weights.end(), token,
      [](const TokenWeight& w, TokenId t) { return w.token < t; });
  if (it == weights.end() || it->token != token) {
    return 0.0;
  }
  return it->weight;
}

namespace {

AttentionOutput softmax_attend(std::span<const float> query,
                               std::vector<const KvView*> rows) {
  if (rows.empty()) {
    throw InputError("attention needs at least one key");
  }
  std::sort(rows.begin(), rows.end(),
            [](const KvView* a, const KvView* b) { return a->token < b->token; });

  const std::size_t value_dim = rows.front()->value.size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(query.size()));
  std::vector<double> logits(rows.size());
  double max_logit = -INFINITY;
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j]->key.size() != query.size()) {
      throw InputError("attention: key and query dimensions differ");
    }
    if (rows[j]->value.size() != value_dim) {
      throw InputError("attention: value dimensions differ");
    }
    logits[j] = dot(query, rows[j]->key) * scale;
    max_logit = std::max(max_logit, logits[j]);
  }

  double denom = 0.0;
  for (double& l : logits) {
    l = std::exp(l - max_logit);
    denom += l;
  }

  AttentionOutput out;
  out.weights.reserve(rows.size());
  out.value_out.assign(value_dim, 0.0);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const double w = logits[j] / denom;
    out.weights.push_back({rows[j]->token, w});
    for (std::size_t i = 0; i < value_dim; ++i) {
      out.value_out[i] += w * static_cast<double>(rows[j]->value[i]);
    }
  }
  return out;
}

}  // namespace

AttentionOutput full_attention(std::span<const float> query,
                               std::span<const KvView> entries) {
  std::vector<const KvView*> rows;
  rows.reserve(entries.size());
  for (const KvView& e : entries) {
    rows.push_back(&e);
  }
  return softmax_attend(query, std::move(rows));
}

AttentionOutput full_attention(std::span<const float> query,
                               std::span<const Vector> keys,
                               std::span<const Vector> values) {
  if (keys.size() != values.size()) {
    throw InputError("attention: key and value counts differ");
  }
  std::vector<KvView> views(keys.size());
  for (std::size_t j = 0; j < keys.size(); ++j) {
    views[j] = {static_cast<TokenId>(j), keys[j], values[j]};
  }
  return full_attention(query, views);
}

AttentionOutput sparse_attention(std::span<const float> query,
                                 std::span<const TokenId> selected,
                                 std::span<const KvView> entries) {
  if (selected.empty()) {
    throw InputError("sparse attention: empty selection");
  }
  const std::unordered_set<TokenId> mask(selected.begin(), selected.end());
  std::vector<const KvView*> rows;
  rows.reserve(mask.size());
  std::unordered_set<TokenId> found;
  for (const KvView& e : entries) {
    if (mask.contains(e.token) && found.insert(e.token).second) {
      rows.push_back(&e);
    }
  }
  if (found.size() != mask.size()) {
    throw InputError("sparse attention: selected token missing from entries");
  }
  return softmax_attend(query, std::move(rows));
}

}  // namespace icecache
