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
#include <span>
#include <vector>

#include "icecache/types.hpp"

namespace icecache {

// Headroom applied over the largest prefill key norm when fixing the key scale.
inline constexpr double kKeyScaleHeadroom = 1.05;

// Relative slack before a key norm above c is reported as a violation.
inline constexpr double kScaleTolerance = 1e-9;

/// Upper bound c on key norms used by the key transform. Always positive.
class KeyScale {
 public:
  explicit KeyScale(double c);

  double value() const { return c_; }

 private:
  double c_;
};

enum class PointKind { kKey, kQuery };

/// A key or query lifted into R^{d+1}. Keys land on the unit sphere; queries
/// land on the unit sphere's equator (last coordinate zero), so squared
/// Euclidean distance between the two is 2 - 2 q.k / (c |q|).
struct TransformedPoint {
  std::vector<double> data;
  PointKind kind = PointKind::kKey;

  std::size_t dim() const { return data.size(); }
};

double dot(std::span<const float> a, std::span<const float> b);
double squared_norm(std::span<const float> a);
double squared_distance(std::span<const double> a, std::span<const double> b);

/// [k/c ; sqrt(1 - |k|^2 / c^2)]. Throws ScaleViolation when |k| exceeds c by
/// more than kScaleTolerance relative; smaller overshoots clamp the radicand.
TransformedPoint transform_key(std::span<const float> key, KeyScale scale);

/// Same transform, but any overshoot clamps the radicand to zero. `clamped`
/// reports whether |k| > c (beyond rounding) so the caller can count it.
TransformedPoint transform_key_clamped(std::span<const float> key,
                                       KeyScale scale, bool* clamped);

/// [q/|q| ; 0]. Throws DegenerateQuery for the zero vector.
TransformedPoint transform_query(std::span<const float> query);

/// kKeyScaleHeadroom times the largest key norm; 1.0 when every key is zero.
KeyScale key_scale_for(std::span<const Vector> keys,
                       double headroom = kKeyScaleHeadroom);

/// Indices of the k keys with the largest inner product with q, best first,
/// ties to the smaller index. k larger than the key count returns everything.
std::vector<std::size_t> exact_topk(std::span<const float> query,
                                    std::span<const Vector> keys,
                                    std::size_t k);

}  // namespace icecache
