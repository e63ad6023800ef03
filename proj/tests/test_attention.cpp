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

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "icecache/attention.hpp"
#include "icecache/error.hpp"
#include "icecache/geometry.hpp"
#include "oracles.hpp"

using namespace icecache;

namespace {

std::vector<KvView> views(const std::vector<Vector>& keys, const std::vector<Vector>& values) {
  std::vector<KvView> out;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    out.push_back({static_cast<TokenId>(i), keys[i], values[i]});
  }
  return out;
}

double weight_sum(const AttentionOutput& out) {
  double s = 0.0;
  for (const TokenWeight& w : out.weights) s += w.weight;
  return s;
}

}  // namespace

TEST_CASE("full attention corner cases") {
  SUBCASE("single key") {
    const std::vector<Vector> k{{1.0f, 2.0f}}, v{{3.0f, -4.0f, 5.0f}};
    const AttentionOutput out = full_attention(Vector{0.3f, 0.1f}, k, v);
    CHECK(out.weight_of(0) == 1.0);
    CHECK(out.value_out == std::vector<double>{3.0, -4.0, 5.0});
  }
  SUBCASE("two identical keys split evenly") {
    const std::vector<Vector> k{{1.0f, 1.0f}, {1.0f, 1.0f}}, v{{1.0f}, {3.0f}};
    const AttentionOutput out = full_attention(Vector{2.0f, -1.0f}, k, v);
    CHECK(out.weight_of(0) == doctest::Approx(0.5));
    CHECK(out.weight_of(1) == doctest::Approx(0.5));
    CHECK(out.value_out[0] == doctest::Approx(2.0));
  }
  SUBCASE("orthogonal query gives uniform weights") {
    const std::vector<Vector> k{{0, 1, 0}, {0, 0, 2}, {0, 3, 3}, {0, -1, 0}};
    const std::vector<Vector> v{{1}, {2}, {3}, {4}};
    const AttentionOutput out = full_attention(Vector{5, 0, 0}, k, v);
    for (TokenId t = 0; t < 4; ++t) CHECK(out.weight_of(t) == doctest::Approx(0.25));
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(full_attention(Vector{1.0f}, std::vector<KvView>{}), InputError);
  }
}

TEST_CASE("full attention matches the long double oracle") {
  Rng rng(51);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.below(300), d = 1 + rng.below(48), dv = 1 + rng.below(16);
    const auto keys = oracle::random_vectors(rng, m, d, 3.0);
    const auto values = oracle::random_vectors(rng, m, dv);
    const Vector q = oracle::random_vector(rng, d, 3.0);
    const AttentionOutput out = full_attention(q, keys, values);
    const auto ref = oracle::attention(q, keys, values, std::vector<char>(m, 1));
    CHECK(oracle::relative_error(out.value_out, ref) < 1e-9);
    CHECK(weight_sum(out) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("large logits stay finite") {
  const std::vector<Vector> k{{1000.0f}, {999.0f}, {-1000.0f}};
  const std::vector<Vector> v{{1.0f}, {2.0f}, {3.0f}};
  const AttentionOutput out = full_attention(Vector{100.0f}, k, v);
  CHECK(std::isfinite(out.value_out[0]));
  CHECK(weight_sum(out) == doctest::Approx(1.0));
}

TEST_CASE("shifting every logit by a constant leaves the weights unchanged") {
  Rng rng(52);
  // Adding a multiple of q to every key adds alpha |q|^2 to every logit.
  for (int trial = 0; trial < 30; ++trial) {
    const auto keys = oracle::random_vectors(rng, 40, 8);
    const auto values = oracle::random_vectors(rng, 40, 4);
    const Vector q = oracle::random_vector(rng, 8);
    std::vector<Vector> shifted = keys;
    const float alpha = static_cast<float>(rng.uniform(-4.0, 4.0));
    for (auto& k : shifted) {
      for (std::size_t i = 0; i < k.size(); ++i) k[i] += alpha * q[i];
    }
    const AttentionOutput a = full_attention(q, keys, values);
    const AttentionOutput b = full_attention(q, shifted, values);
    for (TokenId t = 0; t < 40; ++t) {
      CHECK(std::abs(a.weight_of(t) - b.weight_of(t)) < 1e-5);
    }
  }
}

TEST_CASE("sparse attention") {
  Rng rng(53);
  const std::size_t m = 512, d = 32;
  const auto keys = oracle::random_vectors(rng, m, d);
  const auto values = oracle::random_vectors(rng, m, d);
  const auto kv = views(keys, values);
  const Vector q = oracle::random_vector(rng, d);

  SUBCASE("selecting everything is full attention") {
    std::vector<TokenId> all(m);
    std::iota(all.begin(), all.end(), 0);
    const AttentionOutput s = sparse_attention(q, all, kv);
    const AttentionOutput f = full_attention(q, kv);
    CHECK(oracle::relative_error(s.value_out, f.value_out) < 1e-6);
  }
  SUBCASE("single token") {
    const std::vector<TokenId> one{17};
    const AttentionOutput s = sparse_attention(q, one, kv);
    CHECK(s.weight_of(17) == 1.0);
    CHECK(s.weight_of(3) == 0.0);
    for (std::size_t i = 0; i < d; ++i) CHECK(s.value_out[i] == doctest::Approx(values[17][i]));
  }
  SUBCASE("top-64 plus sink and window against the restricted oracle") {
    std::vector<char> mask(m, 0);
    for (std::size_t i : exact_topk(q, keys, 64)) mask[i] = 1;
    for (std::size_t i = 0; i < 16; ++i) mask[i] = 1;
    for (std::size_t i = m - 32; i < m; ++i) mask[i] = 1;
    std::vector<TokenId> sel;
    for (std::size_t i = 0; i < m; ++i) {
      if (mask[i]) sel.push_back(static_cast<TokenId>(i));
    }
    const AttentionOutput s = sparse_attention(q, sel, kv);
    CHECK(oracle::relative_error(s.value_out, oracle::attention(q, keys, values, mask)) < 1e-9);
    CHECK(weight_sum(s) == doctest::Approx(1.0));
    // Distance from full attention is a tracked quantity, not a gate; it must
    // stay below the trivial bound of 2.
    const auto full = oracle::attention(q, keys, values, std::vector<char>(m, 1));
    CHECK(oracle::relative_error(s.value_out, full) < 2.0);
  }
  SUBCASE("bad selections") {
    CHECK_THROWS_AS(sparse_attention(q, std::vector<TokenId>{}, kv), InputError);
    CHECK_THROWS_AS(sparse_attention(q, std::vector<TokenId>{9999}, kv), InputError);
  }
}

TEST_CASE("covered mass never shrinks when the selection grows") {
  Rng rng(54);
  for (int trial = 0; trial < 20; ++trial) {
    const auto keys = oracle::random_vectors(rng, 100, 8);
    const auto values = oracle::random_vectors(rng, 100, 2);
    const AttentionOutput full = full_attention(oracle::random_vector(rng, 8), keys, values);
    double previous = 0.0;
    double mass = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
      if (rng.uniform() < 0.5) continue;
      mass += full.weight_of(static_cast<TokenId>(i));
      CHECK(mass >= previous);
      previous = mass;
    }
    CHECK(mass <= 1.0 + 1e-12);
  }
}

TEST_CASE("group union") {
  using Sets = std::vector<std::vector<PageId>>;
  CHECK(gqa_union<PageId>(Sets{{1, 2, 3}, {1, 2, 3}}) == std::vector<PageId>{1, 2, 3});
  CHECK(gqa_union<PageId>(Sets{{1, 5}, {2, 7, 9}}).size() == 5);
  CHECK_THROWS_AS(gqa_union<PageId>(Sets{}), InputError);

  Rng rng(55);
  for (int trial = 0; trial < 200; ++trial) {
    Sets sets(1 + rng.below(5));
    std::size_t largest = 0, total = 0;
    for (auto& s : sets) {
      const std::size_t n = rng.below(20);
      for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<PageId>(rng.below(40)));
      std::sort(s.begin(), s.end());
      s.erase(std::unique(s.begin(), s.end()), s.end());
      largest = std::max(largest, s.size());
      total += s.size();
    }
    const auto u = gqa_union<PageId>(sets);
    CHECK(u.size() >= largest);
    CHECK(u.size() <= total);
    CHECK(std::is_sorted(u.begin(), u.end()));
  }
}
