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

#include "icecache/trace.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "icecache/error.hpp"

namespace icecache {

static_assert(std::endian::native == std::endian::little,
              "trace I/O assumes a little-endian host");

namespace {

[[noreturn]] void fail_at(const std::string& path, std::size_t offset,
                          const std::string& what) {
  std::ostringstream os;
  os << path << " at byte offset " << offset << ": " << what;
  throw IoError(os.str());
}

std::uint32_t read_u32(const std::array<char, kTraceHeaderBytes>& buf,
                       std::size_t at) {
  std::uint32_t v = 0;
  std::memcpy(&v, buf.data() + at, sizeof(v));
  return v;
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

}  // namespace

Workload read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail_at(path, 0, "cannot open trace file");
  }
  std::array<char, kTraceHeaderBytes> header{};
  in.read(header.data(), header.size());
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got < 4 || std::memcmp(header.data(), kTraceMagic, 4) != 0) {
    fail_at(path, 0, "bad magic, expected \"ICET\"");
  }
  if (got < kTraceHeaderBytes) {
    fail_at(path, got, "truncated header");
  }
  const std::uint32_t version = read_u32(header, 4);
  if (version != kTraceVersion) {
    fail_at(path, 4, "unsupported version " + std::to_string(version));
  }
  WorkloadShape shape;
  shape.layers = read_u32(header, 8);
  shape.kv_heads = read_u32(header, 12);
  shape.q_groups = read_u32(header, 16);
  shape.key_dim = read_u32(header, 20);
  shape.value_dim = read_u32(header, 24);
  shape.n_tokens = read_u32(header, 28);
  const std::size_t fields[] = {shape.layers, shape.kv_heads, shape.q_groups,
                                shape.key_dim, shape.value_dim, shape.n_tokens};
  for (std::size_t i = 0; i < 6; ++i) {
    if (fields[i] == 0) {
      fail_at(path, 8 + 4 * i, "header field must be positive");
    }
  }

  Workload wl(shape);
  auto raw = wl.raw();
  const std::size_t want = raw.size() * sizeof(float);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(want));
  const auto payload = static_cast<std::size_t>(in.gcount());
  if (payload < want) {
    fail_at(path, kTraceHeaderBytes + payload,
            "truncated payload, expected " + std::to_string(want) + " bytes");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    fail_at(path, kTraceHeaderBytes + want, "trailing bytes after payload");
  }
  return wl;
}

void write_trace(const std::string& path, const Workload& workload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    fail_at(path, 0, "cannot open trace file for writing");
  }
  const WorkloadShape& sh = workload.shape();
  out.write(kTraceMagic, 4);
  put_u32(out, kTraceVersion);
  for (std::size_t v : {sh.layers, sh.kv_heads, sh.q_groups, sh.key_dim,
                        sh.value_dim, sh.n_tokens}) {
    put_u32(out, static_cast<std::uint32_t>(v));
  }
  const auto raw = workload.raw();
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!out) {
    fail_at(path, kTraceHeaderBytes, "write failed");
  }
}

}  // namespace icecache
