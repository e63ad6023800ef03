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

// icecache command-line driver: workload generation, benchmarks, budget
// sweeps, the token-order comparison and the prefill pipeline estimate.
//
// Exit codes: 0 ok, 2 config or input error, 3 invariant or consistency
// violation, 4 I/O error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "icecache/bench.hpp"
#include "icecache/engine.hpp"
#include "icecache/error.hpp"
#include "icecache/trace.hpp"
#include "icecache/workload.hpp"

namespace {

using namespace icecache;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInvariant = 3;
constexpr int kExitIo = 4;

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::string kind = "clustered";
  std::string trace;
  WorkloadSpec workload;
  EngineConfig engine;
  std::size_t steps = 100;
  std::string budget = "64";
  std::string out;
  std::string csv;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) {
    return *flag;
  }
  if (const char* env = std::getenv("ICECACHE_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const std::uint64_t v = std::stoull(env, &used);
      if (used == std::string(env).size()) {
        return v;
      }
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("ICECACHE_SEED is not an unsigned integer: ") + env);
  }
  return 0;
}

std::size_t parse_budget(const std::string& text) {
  if (text == "inf" || text == "unbounded") {
    return kUnbounded;
  }
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used == text.size() && v > 0) {
      return static_cast<std::size_t>(v);
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("budget must be a positive integer or 'inf': " + text);
}

void add_workload_flags(CLI::App& cmd, CommonFlags& f) {
  cmd.add_option("--seed", f.seed, "Seed for all randomness (fallback: ICECACHE_SEED)");
  cmd.add_option("--workload", f.kind, "clustered | planted_needle | uniform | trace_file")
      ->capture_default_str();
  cmd.add_option("--trace", f.trace, "Trace file (implies --workload trace_file)");
  cmd.add_option("--tokens", f.workload.n_tokens, "Prompt tokens")->capture_default_str();
  cmd.add_option("--layers", f.workload.layers)->capture_default_str();
  cmd.add_option("--kv-heads", f.workload.kv_heads)->capture_default_str();
  cmd.add_option("--q-groups", f.workload.q_groups, "Query heads per kv head")
      ->capture_default_str();
  cmd.add_option("--dim", f.workload.key_dim, "Key/query dimension")->capture_default_str();
  cmd.add_option("--value-dim", f.workload.value_dim)->capture_default_str();
  cmd.add_option("--clusters", f.workload.clusters)->capture_default_str();
  cmd.add_option("--spread", f.workload.cluster_spread)->capture_default_str();
  cmd.add_option("--needle-gain", f.workload.needle_gain)->capture_default_str();
  cmd.add_option("--layer-jitter", f.workload.layer_jitter)->capture_default_str();
}

void add_engine_flags(CLI::App& cmd, CommonFlags& f) {
  EngineConfig& e = f.engine;
  cmd.add_option("--steps", f.steps, "Decode steps")->capture_default_str();
  cmd.add_option("--budget", f.budget, "Token budget k per query head, or 'inf'")
      ->capture_default_str();
  cmd.add_option("--page-size", e.page_size)->capture_default_str();
  cmd.add_option("--ratio", e.promotion_ratio, "Level promotion ratio r")
      ->capture_default_str();
  cmd.add_option("--sink-pages", e.sink_pages)->capture_default_str();
  cmd.add_option("--window-pages", e.window_pages)->capture_default_str();
  cmd.add_option("--skip-layers", e.skip_layers)->capture_default_str();
  cmd.add_option("--reuse-stride", e.reuse_stride, "0 disables reuse")
      ->capture_default_str();
  cmd.add_option("--beam", e.beam, "Search beam (0: 2 x budget)")->capture_default_str();
  cmd.add_option("--visit-cap", e.visit_cap, "Per-node evaluations (0: default)")
      ->capture_default_str();
  cmd.add_flag("--exhaustive", e.exhaustive_search, "Exact tree search");
  cmd.add_option("--workers", e.workers, "Head-parallel workers")->capture_default_str();
  cmd.add_option("--out", f.out, "Write JSON report here instead of stdout");
  cmd.add_option("--csv", f.csv, "Also write per-step rows as CSV");
}

BenchOptions bench_options(CommonFlags& f) {
  const std::uint64_t seed = resolve_seed(f.seed);
  BenchOptions o;
  o.workload = f.workload;
  o.workload.seed = seed;
  o.workload.kind = parse_workload_kind(f.trace.empty() ? f.kind : "trace_file");
  o.workload.trace_path = f.trace;
  o.engine = f.engine;
  o.engine.seed = seed;
  o.engine.token_budget = parse_budget(f.budget);
  o.steps = f.steps;
  return o;
}

void emit_json(const nlohmann::json& j, const std::string& path) {
  if (path.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot open " + path + " for writing");
  }
  out << j.dump(2) << '\n';
  if (!out) {
    throw IoError("write failed: " + path);
  }
}

void emit_csv(const Report& report, const std::string& path) {
  if (path.empty()) {
    return;
  }
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot open " + path + " for writing");
  }
  write_csv(out, report);
  if (!out) {
    throw IoError("write failed: " + path);
  }
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kIo:
      return kExitIo;
    case ErrorKind::kConsistency:
    case ErrorKind::kInvariant:
      return kExitInvariant;
    default:
      return kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"icecache: semantic KV-cache paging simulator"};
  app.require_subcommand(1);

  CommonFlags gen_flags;
  std::string gen_path;
  std::size_t gen_steps = 0;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic workload trace file");
  add_workload_flags(*gen, gen_flags);
  gen->add_option("--decode-steps", gen_steps, "Extra tokens after the prompt")
      ->capture_default_str();
  gen->add_option("-o,--output", gen_path, "Trace file to write")->required();

  CommonFlags bench_flags;
  auto* bench = app.add_subcommand("bench", "Prefill plus decode in evaluation mode");
  add_workload_flags(*bench, bench_flags);
  add_engine_flags(*bench, bench_flags);

  CommonFlags sweep_flags;
  std::vector<std::string> sweep_budgets{"64", "128", "256"};
  std::vector<std::size_t> sweep_pages;
  auto* sweep = app.add_subcommand("sweep", "Benchmark over budgets and page sizes");
  add_workload_flags(*sweep, sweep_flags);
  add_engine_flags(*sweep, sweep_flags);
  sweep->add_option("--budgets", sweep_budgets, "Token budgets")->capture_default_str();
  sweep->add_option("--page-sizes", sweep_pages, "Page sizes (default: --page-size)");

  CommonFlags cmp_flags;
  auto* compare = app.add_subcommand(
      "compare-baseline", "Semantic versus token-order paging hit rates");
  add_workload_flags(*compare, cmp_flags);
  add_engine_flags(*compare, cmp_flags);

  double tp = 0.0, to = 0.0, ti = 0.0;
  std::size_t pipe_layers = 32;
  auto* pipe = app.add_subcommand("pipeline-est", "Serial vs layer-pipelined prefill time");
  pipe->add_option("--prefill", tp, "Prefill compute time per layer")->required();
  pipe->add_option("--offload", to, "Offload time per layer")->required();
  pipe->add_option("--index", ti, "Index build time per layer")->required();
  pipe->add_option("--layers", pipe_layers)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) {
      BenchOptions o = bench_options(gen_flags);
      if (o.workload.kind == WorkloadKind::kTraceFile) {
        throw ConfigError("gen writes synthetic workloads only");
      }
      o.workload.decode_steps = gen_steps;
      write_trace(gen_path, generate_workload(o.workload));
    } else if (*bench) {
      const Report report = run_bench(bench_options(bench_flags));
      emit_json(to_json(report), bench_flags.out);
      emit_csv(report, bench_flags.csv);
    } else if (*sweep) {
      BenchOptions base = bench_options(sweep_flags);
      if (sweep_pages.empty()) {
        sweep_pages.push_back(base.engine.page_size);
      }
      nlohmann::json runs = nlohmann::json::array();
      for (std::size_t s : sweep_pages) {
        for (const std::string& b : sweep_budgets) {
          BenchOptions o = base;
          o.engine.page_size = s;
          o.engine.token_budget = parse_budget(b);
          const nlohmann::json j = to_json(run_bench(o));
          runs.push_back({{"page_size", s},
                          {"token_budget", j["config"]["engine"]["token_budget"]},
                          {"aggregates", j["aggregates"]}});
        }
      }
      emit_json({{"schema_version", kReportSchemaVersion},
                 {"config", config_json(base)},
                 {"runs", std::move(runs)}},
                sweep_flags.out);
    } else if (*compare) {
      BenchOptions o = bench_options(cmp_flags);
      o.engine.baseline = true;
      const Report report = run_bench(o);
      emit_json(to_json(report), cmp_flags.out);
      emit_csv(report, cmp_flags.csv);
      const Aggregates& a = report.aggregates;
      std::cerr << "semantic hit rate " << a.mean_hit_rate << ", token-order hit rate "
                << a.mean_baseline_hit_rate.value_or(0.0) << '\n';
    } else if (*pipe) {
      const PipelineEstimate est = pipeline_estimate(tp, to, ti, pipe_layers);
      emit_json({{"schema_version", kReportSchemaVersion},
                 {"layers", pipe_layers},
                 {"serial", est.serial},
                 {"pipelined", est.pipelined},
                 {"speedup", est.pipelined > 0.0 ? est.serial / est.pipelined : 1.0}},
                "");
    }
  } catch (const Error& e) {
    std::cerr << "icecache: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "icecache: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}
