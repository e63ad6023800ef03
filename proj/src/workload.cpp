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

#include "icecache/workload.hpp"

#include <algorithm>
#include <cmath>

#include "icecache/error.hpp"
#include "icecache/rng.hpp"
#include "icecache/trace.hpp"

namespace icecache {

void WorkloadShape::validate() const {
  if (layers == 0 || kv_heads == 0 || q_groups == 0 || key_dim == 0 ||
      value_dim == 0 || n_tokens == 0) {
    throw ConfigError("workload shape fields must all be positive");
  }
}

Workload::Workload(WorkloadShape shape) : shape_(shape) {
  shape_.validate();
  data_.assign(shape_.total_floats(), 0.0f);
}

std::size_t Workload::offset(std::size_t token, std::size_t layer,
                             std::size_t head) const {
  return ((token * shape_.layers + layer) * shape_.kv_heads + head) *
         shape_.record_floats();
}

std::span<const float> Workload::key(std::size_t token, std::size_t layer,
                                     std::size_t head) const {
  return {data_.data() + offset(token, layer, head), shape_.key_dim};
}

std::span<const float> Workload::value(std::size_t token, std::size_t layer,
                                       std::size_t head) const {
  return {data_.data() + offset(token, layer, head) + shape_.key_dim,
          shape_.value_dim};
}

std::span<const float> Workload::query(std::size_t token, std::size_t layer,
                                       std::size_t head, std::size_t group) const {
  return {data_.data() + offset(token, layer, head) + shape_.key_dim +
              shape_.value_dim + group * shape_.key_dim,
          shape_.key_dim};
}

std::span<float> Workload::key(std::size_t token, std::size_t layer,
                               std::size_t head) {
  return {data_.data() + offset(token, layer, head), shape_.key_dim};
}

std::span<float> Workload::value(std::size_t token, std::size_t layer,
                                 std::size_t head) {
  return {data_.data() + offset(token, layer, head) + shape_.key_dim,
          shape_.value_dim};
}

std::span<float> Workload::query(std::size_t token, std::size_t layer,
                                 std::size_t head, std::size_t group) {
  return {data_.data() + offset(token, layer, head) + shape_.key_dim +
              shape_.value_dim + group * shape_.key_dim,
          shape_.key_dim};
}

const char* to_string(WorkloadKind kind) {
  switch (kind) {
    case WorkloadKind::kClustered:
      return "clustered";
    case WorkloadKind::kPlantedNeedle:
      return "planted_needle";
    case WorkloadKind::kUniform:
      return "uniform";
    case WorkloadKind::kTraceFile:
      return "trace_file";
  }
  return "?";
}

WorkloadKind parse_workload_kind(const std::string& name) {
  if (name == "clustered") return WorkloadKind::kClustered;
  if (name == "planted_needle") return WorkloadKind::kPlantedNeedle;
  if (name == "uniform") return WorkloadKind::kUniform;
  if (name == "trace_file") return WorkloadKind::kTraceFile;
  throw ConfigError("unknown workload kind '" + name + "'");
}

void WorkloadSpec::validate() const {
  if (kind == WorkloadKind::kTraceFile) {
    if (trace_path.empty()) {
      throw ConfigError("trace_file workload needs a trace path");
    }
    return;
  }
  if (n_tokens == 0) {
    throw ConfigError("n_tokens must be positive");
  }
  if (kind == WorkloadKind::kClustered && clusters < 1) {
    throw ConfigError("clustered workload needs at least one cluster");
  }
  if (!(cluster_spread >= 0.0) || !(needle_gain >= 0.0) || !(layer_jitter >= 0.0)) {
    throw ConfigError("spread, gain and jitter must be non-negative");
  }
  WorkloadShape{layers, kv_heads, q_groups, key_dim, value_dim, n_tokens}.validate();
}

namespace {

void fill_normal(Rng& rng, std::span<float> out, double scale = 1.0) {
  for (float& x : out) {
    x = static_cast<float>(scale * rng.normal());
  }
}

std::vector<double> normal_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (double& x : v) {
    x = rng.normal();
  }
  return v;
}

void generate_clustered(const WorkloadSpec& spec, Workload& wl) {
  const WorkloadShape& sh = wl.shape();
  const std::size_t total = sh.n_tokens;
  Rng root(spec.seed);

  Rng base_rng = root.split("centers");
  std::vector<std::vector<double>> base(spec.clusters);
  for (auto& c : base) {
    c = normal_vector(base_rng, sh.key_dim);
  }

  // Per (layer, head) centers: the shared base plus a small perturbation.
  std::vector<std::vector<std::vector<double>>> centers(sh.layers * sh.kv_heads);
  for (std::size_t lh = 0; lh < centers.size(); ++lh) {
    Rng r = root.split("layer-centers").split(lh);
    centers[lh] = base;
    for (auto& c : centers[lh]) {
      for (double& x : c) {
        x += spec.layer_jitter * r.normal();
      }
    }
  }

  Rng label_rng = root.split("labels");
  wl.cluster_of.resize(total);
  wl.query_cluster_of.resize(total);
  for (std::size_t t = 0; t < total; ++t) {
    wl.cluster_of[t] = static_cast<std::uint32_t>(label_rng.below(spec.clusters));
    wl.query_cluster_of[t] =
        static_cast<std::uint32_t>(label_rng.below(spec.clusters));
  }

  Rng token_rng = root.split("tokens");
  std::vector<Rng> head_rngs;
  for (std::size_t lh = 0; lh < centers.size(); ++lh) {
    head_rngs.push_back(root.split("head-noise").split(lh));
  }
  const double spread = spec.cluster_spread;
  const double jitter = spec.layer_jitter;
  for (std::size_t t = 0; t < total; ++t) {
    const std::vector<double> key_latent = normal_vector(token_rng, sh.key_dim);
    const std::vector<double> query_latent = normal_vector(token_rng, sh.key_dim);
    for (std::size_t l = 0; l < sh.layers; ++l) {
      for (std::size_t h = 0; h < sh.kv_heads; ++h) {
        const std::size_t lh = l * sh.kv_heads + h;
        Rng& r = head_rngs[lh];
        const auto& kc = centers[lh][wl.cluster_of[t]];
        const auto& qc = centers[lh][wl.query_cluster_of[t]];
        auto key = wl.key(t, l, h);
        for (std::size_t i = 0; i < sh.key_dim; ++i) {
          key[i] = static_cast<float>(
              kc[i] + spread * (key_latent[i] + jitter * r.normal()));
        }
        fill_normal(r, wl.value(t, l, h));
        for (std::size_t g = 0; g < sh.q_groups; ++g) {
          auto q = wl.query(t, l, h, g);
          for (std::size_t i = 0; i < sh.key_dim; ++i) {
            q[i] = static_cast<float>(
                qc[i] + spread * (query_latent[i] + jitter * r.normal()));
          }
        }
      }
    }
  }
}

void generate_uniform(const WorkloadSpec& spec, Workload& wl) {
  Rng rng = Rng(spec.seed).split("uniform");
  for (float& x : wl.raw()) {
    x = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
}

void generate_needle(const WorkloadSpec& spec, Workload& wl) {
  const WorkloadShape& sh = wl.shape();
  const TokenId needle = static_cast<TokenId>(spec.n_tokens / 2);
  wl.needle = needle;
  Rng root(spec.seed);
  const double query_norm = std::sqrt(static_cast<double>(sh.key_dim));
  for (std::size_t l = 0; l < sh.layers; ++l) {
    for (std::size_t h = 0; h < sh.kv_heads; ++h) {
      const std::size_t lh = l * sh.kv_heads + h;
      Rng r = root.split("needle-head").split(lh);
      std::vector<double> dir = normal_vector(r, sh.key_dim);
      double norm = 0.0;
      for (double x : dir) norm += x * x;
      norm = std::sqrt(norm);
      for (double& x : dir) x /= norm;

      double max_norm = 0.0;
      for (std::size_t t = 0; t < sh.n_tokens; ++t) {
        auto key = wl.key(t, l, h);
        fill_normal(r, key, spec.cluster_spread);
        fill_normal(r, wl.value(t, l, h));
        for (std::size_t g = 0; g < sh.q_groups; ++g) {
          auto q = wl.query(t, l, h, g);
          for (std::size_t i = 0; i < sh.key_dim; ++i) {
            q[i] = static_cast<float>(query_norm * dir[i]);
          }
        }
        if (t != needle) {
          double sq = 0.0;
          for (float x : key) sq += static_cast<double>(x) * x;
          max_norm = std::max(max_norm, std::sqrt(sq));
        }
      }
      auto key = wl.key(needle, l, h);
      for (std::size_t i = 0; i < sh.key_dim; ++i) {
        key[i] = static_cast<float>(spec.needle_gain * max_norm * dir[i]);
      }
    }
  }
}

}  // namespace

Workload generate_workload(const WorkloadSpec& spec) {
  spec.validate();
  if (spec.kind == WorkloadKind::kTraceFile) {
    return read_trace(spec.trace_path);
  }
  Workload wl(WorkloadShape{spec.layers, spec.kv_heads, spec.q_groups,
                            spec.key_dim, spec.value_dim,
                            spec.n_tokens + spec.decode_steps});
  switch (spec.kind) {
    case WorkloadKind::kClustered:
      generate_clustered(spec, wl);
      break;
    case WorkloadKind::kUniform:
      generate_uniform(spec, wl);
      break;
    case WorkloadKind::kPlantedNeedle:
      generate_needle(spec, wl);
      break;
    case WorkloadKind::kTraceFile:
      break;
  }
  return wl;
}

}  // namespace icecache
