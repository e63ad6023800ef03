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

#include "icecache/error.hpp"
#include "icecache/geometry.hpp"
#include "oracles.hpp"

using namespace icecache;

TEST_CASE("zero key lifts to the pole") {
  const Vector k(4, 0.0f);
  const TransformedPoint p = transform_key(k, KeyScale(1.0));
  REQUIRE(p.dim() == 5);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(p.data[i] == 0.0);
  }
  CHECK(p.data[4] == 1.0);
  CHECK(p.kind == PointKind::kKey);
}

TEST_CASE("key on the scale sphere has a vanishing tail") {
  const Vector k{3.0f, 4.0f};
  const TransformedPoint p = transform_key(k, KeyScale(5.0));
  CHECK(p.data[0] == doctest::Approx(0.6));
  CHECK(p.data[1] == doctest::Approx(0.8));
  CHECK(p.data[2] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("lifted key and query norms are one") {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t d = 1 + rng.below(40);
    const Vector k = oracle::random_vector(rng, d);
    const Vector q = oracle::random_vector(rng, d);
    const double c = static_cast<double>(oracle::norm(k)) * rng.uniform(1.0, 3.0);
    const TransformedPoint tk = transform_key(k, KeyScale(c));
    const TransformedPoint tq = transform_query(q);
    double nk = 0.0, nq = 0.0;
    for (double x : tk.data) nk += x * x;
    for (double x : tq.data) nq += x * x;
    CHECK(std::sqrt(nk) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::sqrt(nq) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(tq.data.back() == 0.0);
  }
}

TEST_CASE("lifted distance expands to 2 - 2 q.k / (c |q|)") {
  Rng rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const Vector k = oracle::random_vector(rng, 16);
    const Vector q = oracle::random_vector(rng, 16);
    const double c = 1.05 * static_cast<double>(oracle::norm(k)) + rng.uniform();
    const TransformedPoint tk = transform_key(k, KeyScale(c));
    const TransformedPoint tq = transform_query(q);
    const double dist = squared_distance(tq.data, tk.data);
    const long double closed = 2.0L - 2.0L * oracle::dot(q, k) / (c * oracle::norm(q));
    CHECK(std::abs(dist - static_cast<double>(closed)) < 1e-6);
    CHECK(std::abs(dist - static_cast<double>(oracle::lifted_distance(q, k, c))) < 1e-6);
  }
}

TEST_CASE("query lift of a basis vector and its multiples") {
  Vector e1(5, 0.0f);
  e1[0] = 1.0f;
  Vector three_e1 = e1;
  three_e1[0] = 3.0f;
  const TransformedPoint a = transform_query(e1);
  const TransformedPoint b = transform_query(three_e1);
  const std::vector<double> expect{1, 0, 0, 0, 0, 0};
  CHECK(a.data == expect);
  CHECK(b.data == expect);
  CHECK(a.kind == PointKind::kQuery);
}

TEST_CASE("query lift is invariant under positive scaling") {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const Vector q = oracle::random_vector(rng, 8);
    // Powers of two keep the float scaling exact.
    const float alpha = std::ldexp(1.0f, static_cast<int>(rng.below(20)) - 10);
    Vector scaled = q;
    for (float& x : scaled) x *= alpha;
    CHECK(transform_query(q).data == transform_query(scaled).data);
  }
}

TEST_CASE("degenerate inputs are rejected") {
  CHECK_THROWS_AS(transform_query(Vector(3, 0.0f)), DegenerateQuery);
  CHECK_THROWS_AS(KeyScale(0.0), ConfigError);
  CHECK_THROWS_AS(KeyScale(-1.0), ConfigError);
  CHECK_THROWS_AS(KeyScale(std::nan("")), ConfigError);
  CHECK_THROWS_AS(transform_key(Vector{2.0f, 0.0f}, KeyScale(1.0)), ScaleViolation);
}

TEST_CASE("clamped transform keeps unit norm and flags the overshoot") {
  bool clamped = false;
  const TransformedPoint p = transform_key_clamped(Vector{2.0f, 0.0f}, KeyScale(1.0), &clamped);
  CHECK(clamped);
  CHECK(p.data.back() == 0.0);
  CHECK(p.data[0] == doctest::Approx(2.0));
  const TransformedPoint ok =
      transform_key_clamped(Vector{0.5f, 0.0f}, KeyScale(1.0), &clamped);
  CHECK_FALSE(clamped);
  CHECK(ok.data.back() == doctest::Approx(std::sqrt(0.75)));
}

TEST_CASE("key scale uses headroom over the largest norm") {
  const std::vector<Vector> keys{{3.0f, 4.0f}, {1.0f, 0.0f}};
  CHECK(key_scale_for(keys).value() == doctest::Approx(5.25));
  CHECK(key_scale_for(std::vector<Vector>{{0.0f, 0.0f}}).value() == 1.0);
}

TEST_CASE("exact_topk on small hand instances") {
  const std::vector<Vector> basis{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  CHECK(exact_topk(Vector{0, 1, 0}, basis, 1) == std::vector<std::size_t>{1});

  const std::vector<Vector> keys{{1.0f, 0.0f}, {0.9f, 0.1f}, {0.0f, 1.0f}};
  CHECK(exact_topk(Vector{1.0f, 0.0f}, keys, 2) == std::vector<std::size_t>{0, 1});

  // Ties resolve to the smaller index.
  const std::vector<Vector> twins{{1, 0}, {0, 1}, {1, 0}};
  CHECK(exact_topk(Vector{1, 0}, twins, 2) == std::vector<std::size_t>{0, 2});
  CHECK_THROWS_AS(exact_topk(Vector{1, 0}, twins, 0), InputError);
}

TEST_CASE("exact_topk with k = n is the full score ordering") {
  Rng rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    const auto keys = oracle::random_vectors(rng, 60, 8);
    const Vector q = oracle::random_vector(rng, 8);
    CHECK(exact_topk(q, keys, keys.size()) == oracle::mips_order(q, keys));
    CHECK(exact_topk(q, keys, 1000).size() == keys.size());
  }
}

TEST_CASE("nearest-neighbour order in lifted space equals inner-product order") {
  Rng rng(15);
  for (int trial = 0; trial < 100; ++trial) {
    const auto keys = oracle::random_vectors(rng, 200, 32);
    const Vector q = oracle::random_vector(rng, 32);
    const KeyScale c = key_scale_for(keys);
    const TransformedPoint tq = transform_query(q);
    std::vector<std::pair<double, std::size_t>> by_distance;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      by_distance.emplace_back(squared_distance(tq.data, transform_key(keys[i], c).data), i);
    }
    std::sort(by_distance.begin(), by_distance.end());
    std::vector<std::size_t> order;
    for (const auto& [dist, i] : by_distance) order.push_back(i);
    CHECK(order == oracle::mips_order(q, keys));
  }
}
