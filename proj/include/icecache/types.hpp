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
#include <limits>
#include <vector>

namespace icecache {

// Raw embedding as produced by the workload (keys, queries and values).
using Vector = std::vector<float>;

using TokenId = std::uint32_t;
using PageId = std::uint32_t;
using NodeId = std::uint32_t;

inline constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();

}  // namespace icecache
