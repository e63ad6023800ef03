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

#include "icecache/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "icecache/error.hpp"

namespace icecache {

KeyScale::KeyScale(double c) : c_(c) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    std::ostringstream os;
    os << "key scale must be positive and finite, got " << c;
    throw ConfigError(os.str());
  }
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw InputError("dot: dimension mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

double squared_norm(std::span<const float> a) {
  double acc = 0.0;
  for (float x : a) {
    acc += static_cast<double>(x) * static_cast<double>(x);
  }
  return acc;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

namespace {

TransformedPoint lift_key(std::span<const float> key, double c, double radicand) {
  TransformedPoint out;
  out.kind = PointKind::kKey;
  out.data.resize(key.size() + 1);
  for (std::size_t i = 0; i < key.size(); ++i) {
    out.data[i] = static_cast<double>(key[i]) / c;
  }
  out.data.back() = std::sqrt(std::max(0.0, radicand));
  return out;
}

void check_finite(std::span<const float> v, const char* what) {
  for (float x : v) {
    if (!std::isfinite(x)) {
      throw InputError(std::string(what) + " has a non-finite coordinate");
    }
  }
}

}  // namespace

TransformedPoint transform_key(std::span<const float> key, KeyScale scale) {
  check_finite(key, "key");
  const double c = scale.value();
  const double norm = std::sqrt(squared_norm(key));
  if (norm > c * (1.0 + kScaleTolerance)) {
    std::ostringstream os;
    os << "key norm " << norm << " exceeds scale " << c;
    throw ScaleViolation(os.str());
  }
  return lift_key(key, c, 1.0 - (norm * norm) / (c * c));
}

TransformedPoint transform_key_clamped(std::span<const float> key,
                                       KeyScale scale, bool* clamped) {
  check_finite(key, "key");
  const double c = scale.value();
  const double sq = squared_norm(key);
  const double radicand = 1.0 - sq / (c * c);
  if (clamped != nullptr) {
    *clamped = std::sqrt(sq) > c * (1.0 + kScaleTolerance);
  }
  return lift_key(key, c, radicand);
}

TransformedPoint transform_query(std::span<const float> query) {
  check_finite(query, "query");
  const double norm = std::sqrt(squared_norm(query));
  if (norm == 0.0) {
    throw DegenerateQuery("zero query cannot be normalized");
  }
  TransformedPoint out;
  out.kind = PointKind::kQuery;
  out.data.resize(query.size() + 1);
  for (std::size_t i = 0; i < query.size(); ++i) {
    out.data[i] = static_cast<double>(query[i]) / norm;
  }
  out.data.back() = 0.0;
  return out;
}

KeyScale key_scale_for(std::span<const Vector> keys, double headroom) {
  double max_sq = 0.0;
  for (const auto& k : keys) {
    max_sq = std::max(max_sq, squared_norm(k));
  }
  if (max_sq == 0.0) {
    return KeyScale(1.0);
  }
  return KeyScale(headroom * std::sqrt(max_sq));
}

std::vector<std::size_t> exact_topk(std::span<const float> query,
                                    std::span<const Vector> keys,
                                    std::size_t k) {
  if (k == 0) {
    throw InputError("exact_topk: k must be at least 1");
  }
  std::vector<double> scores(keys.size());
  for (std::size_t j = 0; j < keys.size(); ++j) {
    scores[j] = dot(query, keys[j]);
  }
  std::vector<std::size_t> order(keys.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(k, order.size());
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) {
      return scores[a] > scores[b];
    }
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + take, order.end(), better);
  order.resize(take);
  return order;
}

}  // namespace icecache
