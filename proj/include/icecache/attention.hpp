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

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "icecache/error.hpp"
#include "icecache/types.hpp"

namespace icecache {

/// Borrowed view of one cached token.
struct KvView {
  TokenId token = 0;
  std::span<const float> key;
  std::span<const float> value;
};

struct TokenWeight {
  TokenId token = 0;
  double weight = 0.0;
};

struct AttentionOutput {
  // Unmasked tokens only, ascending by token id; masked tokens weigh zero.
  std::vector<TokenWeight> weights;
  std::vector<double> value_out;

  double weight_of(TokenId token) const;
};

/// softmax(q.k / sqrt(d)) over every entry, accumulated in ascending token
/// order with the running max subtracted before exponentiation.
AttentionOutput full_attention(std::span<const float> query,
                               std::span<const KvView> entries);

/// Convenience overload; token ids are the positions in `keys`.
AttentionOutput full_attention(std::span<const float> query,
                               std::span<const Vector> keys,
                               std::span<const Vector> values);

/// Attention restricted to `selected` (mask one on selected tokens, zero
/// elsewhere) and renormalized over the selection. Every selected token must
/// be present in `entries`.
AttentionOutput sparse_attention(std::span<const float> query,
                                 std::span<const TokenId> selected,
                                 std::span<const KvView> entries);

/// Union of page-id sets; the group's query heads all read the result.
/// Ascending and deduplicated. Needs at least one set.
template <typename Id>
std::vector<Id> gqa_union(std::span<const std::vector<Id>> sets) {
  if (sets.empty()) {
    throw InputError("gqa_union needs at least one selection");
  }
  std::vector<Id> out;
  for (const auto& s : sets) {
    out.insert(out.end(), s.begin(), s.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace icecache
