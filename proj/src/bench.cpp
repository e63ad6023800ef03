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

#include "icecache/bench.hpp"

#include <ostream>

#include "icecache/error.hpp"

namespace icecache {

Aggregates aggregate(const std::vector<ReportRow>& rows) {
  Aggregates a;
  a.steps = rows.size();
  if (rows.empty()) {
    return a;
  }
  double recall = 0.0, hit = 0.0, mass = 0.0, err = 0.0, base = 0.0;
  bool has_base = false;
  for (const ReportRow& r : rows) {
    const StepMetrics& m = r.metrics;
    recall += m.recall_at_k;
    hit += m.page_hit_rate;
    mass += m.covered_attention_mass;
    err += m.approx_rel_error;
    a.total_pages_loaded += m.pages_loaded;
    a.total_bytes += m.bytes;
    a.total_transactions += m.transactions;
    a.total_dci_queries += m.dci_queries;
    a.total_rotations += m.rotations;
    if (m.baseline_hit_rate) {
      has_base = true;
      base += *m.baseline_hit_rate;
    }
  }
  const auto n = static_cast<double>(rows.size());
  a.mean_recall = recall / n;
  a.mean_hit_rate = hit / n;
  a.mean_covered_mass = mass / n;
  a.mean_rel_error = err / n;
  if (has_base) {
    a.mean_baseline_hit_rate = base / n;
  }
  return a;
}

Report run_bench(const BenchOptions& options) {
  Report report;
  report.options = options;
  BenchOptions& eff = report.options;
  eff.workload.decode_steps = eff.workload.kind == WorkloadKind::kTraceFile ? 0 : options.steps;
  eff.workload.validate();

  const Workload wl = generate_workload(eff.workload);
  const WorkloadShape& sh = wl.shape();
  if (sh.n_tokens <= options.steps) {
    throw ConfigError("workload has no prompt left after reserving decode steps");
  }
  report.prompt_tokens = sh.n_tokens - options.steps;

  EngineConfig& cfg = eff.engine;
  cfg.layers = sh.layers;
  cfg.kv_heads = sh.kv_heads;
  cfg.query_heads_per_group = sh.q_groups;
  cfg.key_dim = sh.key_dim;
  cfg.value_dim = sh.value_dim;
  cfg.evaluate = true;

  Engine engine(cfg);
  engine.prefill(wl, report.prompt_tokens);
  engine.check_invariants();
  report.rows.reserve(options.steps);
  for (std::size_t i = 0; i < options.steps; ++i) {
    const auto token = static_cast<TokenId>(report.prompt_tokens + i);
    StepResult step = engine.decode_step(wl, token);
    report.rows.push_back({i, token, step.metrics});
  }
  engine.check_invariants();
  report.aggregates = aggregate(report.rows);
  return report;
}

namespace {

nlohmann::json budget_json(std::size_t v) {
  if (v == kUnbounded) {
    return "unbounded";
  }
  return v;
}

nlohmann::json row_json(const ReportRow& r) {
  const StepMetrics& m = r.metrics;
  nlohmann::json j = {
      {"step", r.step},
      {"token", r.token},
      {"recall_at_k", m.recall_at_k},
      {"page_hit_rate", m.page_hit_rate},
      {"covered_attention_mass", m.covered_attention_mass},
      {"approx_rel_error", m.approx_rel_error},
      {"pages_loaded", m.pages_loaded},
      {"bytes", m.bytes},
      {"transactions", m.transactions},
      {"dci_queries", m.dci_queries},
      {"rotations", m.rotations},
  };
  if (m.baseline_hit_rate) {
    j["baseline_hit_rate"] = *m.baseline_hit_rate;
  }
  return j;
}

}  // namespace

nlohmann::json config_json(const BenchOptions& o) {
  const WorkloadSpec& w = o.workload;
  const EngineConfig& e = o.engine;
  const SearchBudget b = e.search_budget();
  nlohmann::json workload = {
      {"kind", to_string(w.kind)},
      {"n_tokens", w.n_tokens},
      {"layers", w.layers},
      {"kv_heads", w.kv_heads},
      {"q_groups", w.q_groups},
      {"key_dim", w.key_dim},
      {"value_dim", w.value_dim},
      {"clusters", w.clusters},
      {"cluster_spread", w.cluster_spread},
      {"needle_gain", w.needle_gain},
      {"layer_jitter", w.layer_jitter},
      {"seed", w.seed},
  };
  if (w.kind == WorkloadKind::kTraceFile) {
    workload["trace_path"] = w.trace_path;
  }
  return {
      {"steps", o.steps},
      {"workload", workload},
      {"engine",
       {
           {"layers", e.layers},
           {"kv_heads", e.kv_heads},
           {"query_heads_per_group", e.query_heads_per_group},
           {"key_dim", e.key_dim},
           {"value_dim", e.value_dim},
           {"page_size", e.page_size},
           {"token_budget", budget_json(e.token_budget)},
           {"promotion_ratio", e.promotion_ratio},
           {"sink_pages", e.sink_pages},
           {"window_pages", e.window_pages},
           {"skip_layers", e.skip_layers},
           {"reuse_stride", e.reuse_stride},
           {"beam", budget_json(b.beam)},
           {"visit_cap", budget_json(b.visit_cap)},
           {"exhaustive_search", e.exhaustive_search},
           {"scalar_bytes", e.scalar_bytes},
           {"seed", e.seed},
           {"baseline", e.baseline},
       }},
  };
}

nlohmann::json to_json(const Report& report) {
  const Aggregates& a = report.aggregates;
  nlohmann::json rows = nlohmann::json::array();
  for (const ReportRow& r : report.rows) {
    rows.push_back(row_json(r));
  }
  nlohmann::json out = {
      {"schema_version", kReportSchemaVersion},
      {"config", config_json(report.options)},
      {"prompt_tokens", report.prompt_tokens},
      {"rows", std::move(rows)},
      {"aggregates",
       {
           {"steps", a.steps},
           {"mean_recall", a.mean_recall},
           {"mean_hit_rate", a.mean_hit_rate},
           {"mean_covered_mass", a.mean_covered_mass},
           {"mean_rel_error", a.mean_rel_error},
           {"total_pages_loaded", a.total_pages_loaded},
           {"total_bytes", a.total_bytes},
           {"total_transactions", a.total_transactions},
           {"total_dci_queries", a.total_dci_queries},
           {"total_rotations", a.total_rotations},
       }},
  };
  if (a.mean_baseline_hit_rate) {
    out["baseline"] = {
        {"semantic_hit_rate", a.mean_hit_rate},
        {"token_order_hit_rate", *a.mean_baseline_hit_rate},
        {"delta", a.mean_hit_rate - *a.mean_baseline_hit_rate},
    };
  }
  return out;
}

void write_csv(std::ostream& out, const Report& report) {
  const bool base = report.aggregates.mean_baseline_hit_rate.has_value();
  out << "step,token,recall_at_k,page_hit_rate,covered_attention_mass,approx_rel_error,"
         "pages_loaded,bytes,transactions,dci_queries,rotations";
  if (base) {
    out << ",baseline_hit_rate";
  }
  out << '\n';
  const auto old_precision = out.precision(17);
  for (const ReportRow& r : report.rows) {
    const StepMetrics& m = r.metrics;
    out << r.step << ',' << r.token << ',' << m.recall_at_k << ',' << m.page_hit_rate << ','
        << m.covered_attention_mass << ',' << m.approx_rel_error << ',' << m.pages_loaded
        << ',' << m.bytes << ',' << m.transactions << ',' << m.dci_queries << ','
        << m.rotations;
    if (base) {
      out << ',' << m.baseline_hit_rate.value_or(0.0);
    }
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace icecache
