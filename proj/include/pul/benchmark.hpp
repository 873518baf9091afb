#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pul/proxy.hpp"
#include "pul/train.hpp"

namespace pul {

// one benchmark cell: a forgetting scenario on one architecture, running a
// set of proxy methods and baselines over every plan seed
struct BenchmarkCell {
  std::string scenario;  // scenario token, e.g. "subclass:0:1"
  std::string arch;      // "linear" | "mlp1" | "mlp2"
  std::vector<ProxyKind> proxies;
  std::vector<BaselineKind> baselines;
};

struct BenchmarkPlan {
  std::string dataset;  // preset mixture name
  std::vector<std::uint64_t> seeds;
  std::size_t n_per_subclass = 500;
  std::size_t n_test_per_subclass = 200;
  int hidden = 32;
  double tol = 1e-4;  // eta line-search tolerance
  ProxyOptions proxy_opts;
  TrainConfig train;        // per-run seeds are derived from the plan seeds
  int distill_epochs = 20;  // epochs of the distillation phase
  std::vector<BenchmarkCell> cells;

  void validate() const;
};

// plan from a sectioned key=value config: one [plan], optional [train],
// one [cell] per benchmark cell; unknown keys or sections are rejected
BenchmarkPlan parse_plan(const std::string& text);

// Raw per-seed results, shaped like the released results folder:
// {dataset: {arch_kind: {"{scenario}_{arch}_raw.json": file}}} where a file
// maps the arch short name to {sub_key: [seed_entry, ...]}, wrapped in a
// {"meta", "results"} pair for subclass scenarios. A seed entry holds the
// reference rows "initial" and "retrained" plus one entry per method.
struct ResultsTree {
  nlohmann::json root = nlohmann::json::object();

  // serialization with every wall-clock field masked, so that reruns of the
  // same plan agree byte for byte
  std::string canonical() const;
  std::string hash() const;  // fnv1a64 of the canonical dump

  // structural skeleton (paths, keys, value types, no numbers); this is
  // what the layout golden pins down
  std::string layout() const;

  void save(const std::string& out_dir) const;
  static ResultsTree load(const std::string& out_dir);
};

ResultsTree run_benchmark(const BenchmarkPlan& plan, int jobs = 1);

// mean +/- std aggregation over seeds, one row per (cell, method)
std::string render_report(const ResultsTree& tree, const std::string& style);

}  // namespace pul
