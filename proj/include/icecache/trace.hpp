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

#include <cstdint>
#include <string>

#include "icecache/workload.hpp"

namespace icecache {

// Binary trace layout (all little-endian):
//   "ICET"  u32 version
//   u32 layers, kv_heads, q_groups, d, d_prime, n_tokens
//   f32 payload, token-major, then layer, then kv head; each record is
//   key[d], value[d_prime], query[d] x q_groups.
inline constexpr char kTraceMagic[4] = {'I', 'C', 'E', 'T'};
inline constexpr std::uint32_t kTraceVersion = 1;
inline constexpr std::size_t kTraceHeaderBytes = 4 + 4 + 6 * 4;

/// Throws IoError naming the byte offset of the first problem.
Workload read_trace(const std::string& path);
void write_trace(const std::string& path, const Workload& workload);

}  // namespace icecache
