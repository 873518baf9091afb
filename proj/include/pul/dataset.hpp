#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include "pul/simplex.hpp"

namespace pul {

using SampleId = std::int64_t;

struct LabeledDataset {
  Mat x;                      // n rows, d columns
  std::vector<int> y;         // class indices in [0, C)
  std::vector<int> subclass;  // -1 when untagged
  std::vector<SampleId> id;   // unique per row
  int num_classes = 0;

  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
  int dim() const { return static_cast<int>(x.cols()); }

  // n >= C, labels in range, every class present, ids unique
  void validate() const;

  std::vector<std::size_t> rows_of_class(int cls) const;

  // stable content hash over dims, ids, labels and raw feature bytes
  std::string fingerprint() const;
};

void save_dataset(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_dataset(const std::string& path);

// mean of f(row) over the dataset, deterministic row order
double mean_over(const LabeledDataset& ds, const std::function<double(std::size_t)>& f);

struct ForgetSplit {
  std::vector<SampleId> retain_ids;  // sorted ascending
  std::vector<SampleId> forget_ids;  // sorted ascending
  std::map<int, double> pi_f_class;  // forget fraction per class, every class keyed
  double pi_f_global = 0.0;

  bool is_forget(SampleId sid) const { return forget_lookup_.count(sid) != 0; }
  std::size_t forget_count() const { return forget_ids.size(); }

  // rebuilt by make_split / load paths
  std::unordered_set<SampleId> forget_lookup_;
};

// validates ids against the dataset and fills the per-class fractions;
// an empty forget list is allowed here (degenerate split)
ForgetSplit make_split(const LabeledDataset& ds, std::vector<SampleId> forget_ids);

struct ScenarioClass {
  int cls = 0;
};
struct ScenarioSubclass {
  int cls = 0;
  int sub = 0;
};
struct ScenarioRandom {
  std::size_t n_f = 0;
  std::uint64_t seed = 0;
};
using Scenario = std::variant<ScenarioClass, ScenarioSubclass, ScenarioRandom>;

// "class:0", "subclass:0:1", "random:50"; the seed feeds the random variant
Scenario parse_scenario(const std::string& token, std::uint64_t seed = 0);
std::string scenario_kind(const Scenario& sc);   // "class" | "subclass" | "random"
std::string scenario_cell_key(const Scenario& sc);  // "class0" | "sub0_1" | "rand50"

// errors when the selection is empty ("nothing to forget") or references a
// class or subclass that does not exist
ForgetSplit build_scenario(const LabeledDataset& ds, const Scenario& sc);

// rows whose id is listed, original row order, num_classes preserved
LabeledDataset subset_by_ids(const LabeledDataset& ds, const std::vector<SampleId>& ids);

}  // namespace pul
