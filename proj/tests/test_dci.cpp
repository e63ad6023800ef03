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

#include <algorithm>
#include <numeric>
#include <set>

#include "icecache/dci.hpp"
#include "icecache/error.hpp"
#include "icecache/geometry.hpp"
#include "icecache/pagestore.hpp"
#include "oracles.hpp"

using namespace icecache;

namespace {

std::vector<TokenId> iota_ids(std::size_t n, TokenId first = 0) {
  std::vector<TokenId> ids(n);
  std::iota(ids.begin(), ids.end(), first);
  return ids;
}

DciOptions opts(std::uint64_t seed, double r = 0.1) {
  DciOptions o;
  o.seed = seed;
  o.promotion_ratio = r;
  return o;
}

std::vector<std::size_t> ids_of(const std::vector<Neighbor>& found) {
  std::vector<std::size_t> out;
  for (const Neighbor& n : found) out.push_back(n.id);
  return out;
}

double mean_recall(const DciTree& tree, const std::vector<Vector>& keys,
                   const std::vector<Vector>& queries, const SearchBudget& budget) {
  double total = 0.0;
  for (const Vector& q : queries) {
    const auto found = ids_of(tree.query(transform_query(q), kSentinelLevel, budget));
    total += oracle::recall_at_k(q, keys, found, budget.k);
  }
  return total / static_cast<double>(queries.size());
}

std::vector<Vector> cluster_queries(Rng& rng, const oracle::Clustered& data, std::size_t n,
                                    double spread) {
  std::vector<Vector> out;
  for (std::size_t i = 0; i < n; ++i) {
    Vector q = data.centers[rng.below(data.centers.size())];
    for (float& x : q) x += static_cast<float>(spread * rng.normal());
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace

TEST_CASE("level draws follow the geometric law") {
  Rng rng(21);
  for (double r : {0.1, 0.25, 0.5}) {
    const int draws = 100000;
    std::vector<int> at_least(6, 0);
    for (int i = 0; i < draws; ++i) {
      const int level = assign_level(r, rng);
      REQUIRE(level >= 1);
      for (int l = 1; l <= std::min(level, 5); ++l) ++at_least[l];
    }
    for (int l = 1; l <= 3; ++l) {
      const double expect = std::pow(r, l - 1);
      CHECK(std::abs(at_least[l] / static_cast<double>(draws) - expect) < 0.01);
    }
  }
}

TEST_CASE("tiny promotion ratio keeps every point at level one") {
  Rng rng(22);
  for (int i = 0; i < 10000; ++i) {
    CHECK(assign_level(1e-12, rng) == 1);
  }
  CHECK_THROWS_AS(assign_level(0.0, rng), ConfigError);
  CHECK_THROWS_AS(assign_level(1.0, rng), ConfigError);
}

TEST_CASE("single key builds a one-level tree") {
  const std::vector<Vector> keys{{1.0f, 2.0f, 3.0f}};
  const DciTree tree = DciTree::build(iota_ids(1, 7), keys, opts(1));
  CHECK(tree.levels() == 1);
  CHECK(tree.size() == 1);
  CHECK(tree.node_count() == 1);
  CHECK(tree.node(tree.root()).members == std::vector<TokenId>{7});
  CHECK_FALSE(tree.node(tree.root()).parent.has_value());
  tree.check_invariants();
}

TEST_CASE("build rejects malformed input") {
  const std::vector<Vector> keys{{1.0f, 0.0f}, {0.0f, 1.0f}};
  const std::vector<TokenId> dup{3, 3};
  CHECK_THROWS_AS(DciTree::build(dup, keys, opts(1)), InputError);
  const std::vector<Vector> ragged{{1.0f, 0.0f}, {1.0f}};
  CHECK_THROWS(DciTree::build(iota_ids(2), ragged, opts(1)));
  DciOptions bad = opts(1);
  bad.promotion_ratio = 1.5;
  CHECK_THROWS_AS(DciTree::build(iota_ids(2), keys, bad), ConfigError);
}

TEST_CASE("structure invariants hold after batch build") {
  Rng rng(23);
  for (double r : {0.05, 0.1, 0.3}) {
    const auto keys = oracle::random_vectors(rng, 3000, 12);
    const DciTree tree = DciTree::build(iota_ids(keys.size()), keys, opts(rng.next_u64(), r));
    tree.check_invariants();
    // Every point is a member of exactly one node.
    std::multiset<TokenId> seen;
    for (NodeId n = 0; n < tree.node_count(); ++n) {
      const DciNodeView v = tree.node(n);
      for (TokenId t : v.members) {
        seen.insert(t);
        CHECK(tree.level_of(t) == v.level);
        const auto parent = tree.parent_of(t);
        if (v.level == tree.levels()) {
          CHECK_FALSE(parent.has_value());
        } else {
          REQUIRE(parent.has_value());
          CHECK(tree.level_of(*parent) == v.level + 1);
        }
      }
    }
    CHECK(seen.size() == keys.size());
    for (TokenId t = 0; t < keys.size(); ++t) CHECK(seen.count(t) == 1);
    // No level is empty.
    for (std::size_t count : tree.level_histogram()) CHECK(count > 0);
  }
}

TEST_CASE("points under a parent share its cluster") {
  Rng rng(24);
  const auto data = oracle::clustered(rng, 2000, 16, 2, 0.1);
  const DciTree tree = DciTree::build(iota_ids(data.keys.size()), data.keys, opts(5));
  std::size_t bottom = 0, agree = 0;
  for (TokenId t = 0; t < data.keys.size(); ++t) {
    if (tree.level_of(t) != 1 || tree.levels() == 1) continue;
    ++bottom;
    agree += data.label[*tree.parent_of(t)] == data.label[t] ? 1 : 0;
  }
  REQUIRE(bottom > 0);
  CHECK(static_cast<double>(agree) / static_cast<double>(bottom) >= 0.95);
}

TEST_CASE("every indexed key retrieves itself") {
  Rng rng(25);
  const auto keys = oracle::random_vectors(rng, 5000, 32);
  const DciTree tree = DciTree::build(iota_ids(keys.size()), keys, opts(6));
  // The 1-NN budget the index itself uses to find parents.
  const SearchBudget budget{1, tree.options().parent_beam, tree.options().parent_visit_cap};
  std::size_t ok = 0;
  const std::size_t samples = 500;
  for (std::size_t i = 0; i < samples; ++i) {
    const auto t = static_cast<TokenId>(rng.below(keys.size()));
    const TransformedPoint self = transform_key(keys[t], tree.scale());
    const auto found = tree.query(self, kSentinelLevel, budget);
    ok += (!found.empty() && found[0].id == t) ? 1 : 0;
  }
  CHECK(static_cast<double>(ok) / samples >= 0.99);
}

TEST_CASE("exhaustive budget returns the exact top-k") {
  Rng rng(26);
  for (int instance = 0; instance < 50; ++instance) {
    const std::size_t n = 50 + rng.below(1951);
    const std::size_t d = 4 + rng.below(29);
    const auto keys = oracle::random_vectors(rng, n, d);
    const DciTree tree = DciTree::build(iota_ids(n), keys, opts(rng.next_u64(), 0.2));
    const Vector q = oracle::random_vector(rng, d);
    const std::size_t k = 1 + rng.below(64);
    const auto found = ids_of(tree.query(transform_query(q), kSentinelLevel,
                                         SearchBudget::exhaustive(k)));
    auto expect = oracle::mips_order(q, keys);
    expect.resize(std::min(k, n));
    std::sort(expect.begin(), expect.end());
    auto got = found;
    std::sort(got.begin(), got.end());
    CHECK(got == expect);
  }
}

TEST_CASE("k at least the point count returns every id") {
  Rng rng(27);
  const auto keys = oracle::random_vectors(rng, 700, 8);
  const DciTree tree = DciTree::build(iota_ids(700), keys, opts(2));
  auto got = ids_of(tree.query(transform_query(oracle::random_vector(rng, 8)),
                               kSentinelLevel, SearchBudget::exhaustive(1000)));
  std::sort(got.begin(), got.end());
  std::vector<std::size_t> all(700);
  std::iota(all.begin(), all.end(), 0);
  CHECK(got == all);
}

TEST_CASE("results are sorted by distance then id") {
  Rng rng(28);
  const auto keys = oracle::random_vectors(rng, 1500, 16);
  const DciTree tree = DciTree::build(iota_ids(1500), keys, opts(3));
  const auto found = tree.query(transform_query(oracle::random_vector(rng, 16)),
                                kSentinelLevel, SearchBudget::for_k(40));
  REQUIRE(found.size() == 40);
  for (std::size_t i = 1; i < found.size(); ++i) {
    const bool ordered = found[i - 1].distance < found[i].distance ||
                         (found[i - 1].distance == found[i].distance &&
                          found[i - 1].id < found[i].id);
    CHECK(ordered);
  }
}

TEST_CASE("target level restricts the result to that level") {
  Rng rng(29);
  const auto keys = oracle::random_vectors(rng, 4000, 8);
  const DciTree tree = DciTree::build(iota_ids(4000), keys, opts(4, 0.3));
  REQUIRE(tree.levels() >= 2);
  const TransformedPoint q = transform_query(oracle::random_vector(rng, 8));
  for (int level = 1; level <= tree.levels(); ++level) {
    for (const Neighbor& n : tree.query(q, level, SearchBudget::for_k(5))) {
      CHECK(tree.level_of(n.id) == level);
    }
  }
  // Levels beyond the top clamp to it.
  for (const Neighbor& n : tree.query(q, tree.levels() + 3, SearchBudget::for_k(5))) {
    CHECK(tree.level_of(n.id) == tree.levels());
  }
}

TEST_CASE("prioritized node search") {
  Rng rng(30);
  // A ratio this small leaves everything in the ROOT node.
  const std::size_t n = 256;
  const auto keys = oracle::random_vectors(rng, n, 16);
  const DciTree tree = DciTree::build(iota_ids(n), keys, opts(8, 1e-9));
  REQUIRE(tree.levels() == 1);
  REQUIRE(tree.node(tree.root()).members.size() == n);

  SUBCASE("full visit cap equals brute force") {
    for (int trial = 0; trial < 30; ++trial) {
      const Vector q = oracle::random_vector(rng, 16);
      const std::size_t k = 1 + rng.below(40);
      auto got = ids_of(tree.pdci_query(transform_query(q), tree.root(), k, n));
      auto expect = oracle::mips_order(q, keys);
      expect.resize(k);
      CHECK(got == expect);
    }
  }
  SUBCASE("k equal to the member count ranks everything") {
    const Vector q = oracle::random_vector(rng, 16);
    CHECK(ids_of(tree.pdci_query(transform_query(q), tree.root(), n, n)) ==
          oracle::mips_order(q, keys));
  }
  SUBCASE("small visit cap still returns k members") {
    const auto found = tree.pdci_query(transform_query(oracle::random_vector(rng, 16)),
                                       tree.root(), 10, 20);
    CHECK(found.size() == 10);
  }
  SUBCASE("single-member node") {
    const std::vector<Vector> one{{0.5f, 0.5f}};
    const DciTree t1 = DciTree::build(iota_ids(1, 42), one, opts(1));
    const auto found = t1.pdci_query(transform_query(Vector{-1.0f, 0.2f}), t1.root(), 3, 3);
    REQUIRE(found.size() == 1);
    CHECK(found[0].id == 42);
  }
}

TEST_CASE("recall at 32 on clustered keys") {
  Rng rng(31);
  const auto data = oracle::clustered(rng, 10000, 64, 32, 0.1);
  const DciTree tree = DciTree::build(iota_ids(data.keys.size()), data.keys, opts(9));
  const auto queries = cluster_queries(rng, data, 50, 0.1);
  SearchBudget budget = SearchBudget::for_k(32);
  budget.beam = 64;
  CHECK(mean_recall(tree, data.keys, queries, budget) >= 0.90);
}

TEST_CASE("recall does not decrease with the beam") {
  Rng rng(32);
  const auto data = oracle::clustered(rng, 6000, 32, 16, 0.3);
  const DciTree tree = DciTree::build(iota_ids(data.keys.size()), data.keys, opts(10));
  const auto queries = cluster_queries(rng, data, 40, 0.3);
  const std::size_t k = 16;
  double previous = 0.0;
  for (std::size_t beam : {k, 2 * k, 4 * k}) {
    SearchBudget b{k, beam, std::max<std::size_t>(64, 2 * beam)};
    const double r = mean_recall(tree, data.keys, queries, b);
    CHECK(r >= previous - 1e-12);
    previous = r;
  }
}

TEST_CASE("same seed gives the same tree and answers") {
  Rng rng(33);
  const auto keys = oracle::random_vectors(rng, 3000, 16);
  const DciTree a = DciTree::build(iota_ids(3000), keys, opts(77));
  const DciTree b = DciTree::build(iota_ids(3000), keys, opts(77));
  REQUIRE(a.node_count() == b.node_count());
  for (TokenId t = 0; t < 3000; ++t) {
    CHECK(a.level_of(t) == b.level_of(t));
    CHECK(a.parent_of(t) == b.parent_of(t));
  }
  for (int i = 0; i < 20; ++i) {
    const TransformedPoint q = transform_query(oracle::random_vector(rng, 16));
    const auto ra = a.query(q, kSentinelLevel, SearchBudget::for_k(16));
    const auto rb = b.query(q, kSentinelLevel, SearchBudget::for_k(16));
    CHECK(ids_of(ra) == ids_of(rb));
  }
}

TEST_CASE("dynamic insertion") {
  SUBCASE("first insert into an empty tree") {
    DciTree tree(3, KeyScale(2.0), opts(1));
    CHECK(tree.empty());
    CHECK(tree.query(transform_query(Vector{1, 0, 0}), kSentinelLevel,
                     SearchBudget::for_k(4))
              .empty());
    TierStore store(3, 3);
    PageTable table;
    const NodeId node = tree.insert(5, Vector{1.0f, 0.0f, 0.0f});
    place_in_node(store, table, node, Entry{5, {1, 0, 0}, {0, 0, 1}}, 16);
    CHECK(tree.levels() == 1);
    CHECK(tree.node_count() == 1);
    CHECK(table.pages_of(node).size() == 1);
    CHECK(store.page(table.page_of(5)).fill() == 1);
    tree.check_invariants();
  }

  SUBCASE("overflowing a leaf opens a second page") {
    const std::size_t s = 16;
    DciTree tree(2, KeyScale(10.0), opts(2, 1e-9));
    TierStore store(2, 2);
    PageTable table;
    std::set<NodeId> nodes;
    for (TokenId t = 0; t <= s; ++t) {
      const Vector k{1.0f, 0.01f * static_cast<float>(t)};
      const NodeId node = tree.insert(t, k);
      nodes.insert(node);
      place_in_node(store, table, node, Entry{t, k, k}, s);
    }
    REQUIRE(nodes.size() == 1);
    const auto pages = table.pages_of(*nodes.begin());
    REQUIRE(pages.size() == 2);
    CHECK(store.page(pages[0]).fill() == s);
    CHECK(store.page(pages[1]).fill() == 1);
  }

  SUBCASE("keys beyond the scale are clamped and counted") {
    DciTree tree(2, KeyScale(1.0), opts(3));
    tree.insert(0, Vector{0.5f, 0.0f});
    tree.insert(1, Vector{3.0f, 0.0f});
    CHECK(tree.scale_violations() == 1);
    tree.check_invariants();
  }

  SUBCASE("duplicate ids and wrong dimensions are rejected") {
    DciTree tree(2, KeyScale(1.0), opts(3));
    tree.insert(0, Vector{0.5f, 0.0f});
    CHECK_THROWS_AS(tree.insert(0, Vector{0.1f, 0.0f}), InputError);
    CHECK_THROWS_AS(tree.insert(1, Vector{0.1f}), InputError);
  }

  SUBCASE("incremental tree keeps its invariants and recall") {
    Rng rng(34);
    const auto data = oracle::clustered(rng, 3000, 32, 16, 0.2);
    const KeyScale c = key_scale_for(data.keys);
    DciTree inc(32, c, opts(11));
    for (TokenId t = 0; t < data.keys.size(); ++t) inc.insert(t, data.keys[t]);
    inc.check_invariants();
    const DciTree batch = DciTree::build(iota_ids(data.keys.size()), data.keys, opts(11), c);
    const auto queries = cluster_queries(rng, data, 50, 0.2);
    const SearchBudget b = SearchBudget::for_k(32);
    const double ri = mean_recall(inc, data.keys, queries, b);
    const double rb = mean_recall(batch, data.keys, queries, b);
    CHECK(std::abs(ri - rb) <= 0.05);
  }
}

TEST_CASE("search budget validation") {
  CHECK_THROWS_AS((SearchBudget{0, 1, 1}.validate()), ConfigError);
  CHECK_THROWS_AS((SearchBudget{4, 2, 64}.validate()), ConfigError);
  CHECK_THROWS_AS((SearchBudget{4, 8, 2}.validate()), ConfigError);
  const SearchBudget b = SearchBudget::for_k(64);
  CHECK(b.beam == 128);
  CHECK(b.visit_cap == 256);
  CHECK(SearchBudget::for_k(kUnbounded).beam == kUnbounded);
}
