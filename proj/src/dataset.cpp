#include "pul/dataset.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include "pul/io_util.hpp"
#include "pul/rng.hpp"

namespace pul {

void LabeledDataset::validate() const {
  const std::size_t n = size();
  if (n == 0) throw std::invalid_argument("dataset: empty");
  if (num_classes < 1) throw std::invalid_argument("dataset: num_classes < 1");
  if (n < static_cast<std::size_t>(num_classes))
    throw std::invalid_argument("dataset: fewer samples than classes");
  if (y.size() != n || id.size() != n || (!subclass.empty() && subclass.size() != n))
    throw std::invalid_argument("dataset: column length mismatch");
  std::vector<char> seen(num_classes, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] < 0 || y[i] >= num_classes)
      throw std::invalid_argument("dataset: label out of range at row " + std::to_string(i));
    seen[y[i]] = 1;
  }
  for (int c = 0; c < num_classes; ++c)
    if (!seen[c])
      throw std::invalid_argument("dataset: class " + std::to_string(c) + " has no samples");
  std::unordered_set<SampleId> ids(id.begin(), id.end());
  if (ids.size() != n) throw std::invalid_argument("dataset: duplicate sample ids");
  if (!x.allFinite()) throw std::invalid_argument("dataset: non-finite feature value");
}

std::vector<std::size_t> LabeledDataset::rows_of_class(int cls) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < size(); ++i)
    if (y[i] == cls) rows.push_back(i);
  return rows;
}

std::string LabeledDataset::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const std::int64_t hdr[3] = {static_cast<std::int64_t>(size()), dim(), num_classes};
  h = fnv1a64(hdr, sizeof hdr, h);
  h = fnv1a64(id.data(), id.size() * sizeof(SampleId), h);
  h = fnv1a64(y.data(), y.size() * sizeof(int), h);
  if (!subclass.empty()) h = fnv1a64(subclass.data(), subclass.size() * sizeof(int), h);
  for (std::size_t i = 0; i < size(); ++i) {
    for (int j = 0; j < dim(); ++j) {
      const double v = x(static_cast<Eigen::Index>(i), j);
      h = fnv1a64(&v, sizeof v, h);
    }
  }
  return to_hex(h);
}

void save_dataset(const LabeledDataset& ds, const std::string& path) {
  ds.validate();
  std::ostringstream out;
  out << ds.size() << ' ' << ds.dim() << ' ' << ds.num_classes << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.id[i] << ' ' << ds.y[i] << ' '
        << (ds.subclass.empty() ? -1 : ds.subclass[i]);
    for (int j = 0; j < ds.dim(); ++j)
      out << ' ' << fmt_g17(ds.x(static_cast<Eigen::Index>(i), j));
    out << '\n';
  }
  atomic_write(path, out.str());
}

LabeledDataset load_dataset(const std::string& path) {
  std::istringstream in(read_file(path));
  std::size_t n = 0;
  int d = 0, c = 0;
  if (!(in >> n >> d >> c))
    throw std::invalid_argument("dataset file " + path + ": bad header, want 'n d C'");
  if (d < 1 || c < 1) throw std::invalid_argument("dataset file " + path + ": bad dims");
  LabeledDataset ds;
  ds.num_classes = c;
  ds.x.resize(static_cast<Eigen::Index>(n), d);
  ds.y.resize(n);
  ds.subclass.resize(n);
  ds.id.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(in >> ds.id[i] >> ds.y[i] >> ds.subclass[i]))
      throw std::invalid_argument("dataset file " + path + ": truncated row " + std::to_string(i));
    for (int j = 0; j < d; ++j) {
      double v;
      if (!(in >> v))
        throw std::invalid_argument("dataset file " + path + ": bad value at row " +
                                    std::to_string(i));
      ds.x(static_cast<Eigen::Index>(i), j) = v;
    }
  }
  ds.validate();
  return ds;
}

double mean_over(const LabeledDataset& ds, const std::function<double(std::size_t)>& f) {
  return mean_over(ds.size(), f);
}

ForgetSplit make_split(const LabeledDataset& ds, std::vector<SampleId> forget_ids) {
  std::sort(forget_ids.begin(), forget_ids.end());
  if (std::adjacent_find(forget_ids.begin(), forget_ids.end()) != forget_ids.end())
    throw std::invalid_argument("split: duplicate forget id");

  std::unordered_map<SampleId, int> label_of;
  label_of.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) label_of.emplace(ds.id[i], ds.y[i]);

  ForgetSplit sp;
  sp.forget_ids = forget_ids;
  sp.forget_lookup_.reserve(forget_ids.size());
  std::map<int, std::int64_t> forget_per_class, total_per_class;
  for (int c = 0; c < ds.num_classes; ++c) {
    forget_per_class[c] = 0;
    total_per_class[c] = 0;
  }
  for (std::size_t i = 0; i < ds.size(); ++i) ++total_per_class[ds.y[i]];
  for (SampleId sid : forget_ids) {
    auto it = label_of.find(sid);
    if (it == label_of.end())
      throw std::invalid_argument("split: forget id " + std::to_string(sid) +
                                  " is not in the dataset");
    sp.forget_lookup_.insert(sid);
    ++forget_per_class[it->second];
  }
  sp.retain_ids.reserve(ds.size() - forget_ids.size());
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (!sp.forget_lookup_.count(ds.id[i])) sp.retain_ids.push_back(ds.id[i]);
  std::sort(sp.retain_ids.begin(), sp.retain_ids.end());
  for (int c = 0; c < ds.num_classes; ++c)
    sp.pi_f_class[c] = static_cast<double>(forget_per_class[c]) /
                       static_cast<double>(total_per_class[c]);
  sp.pi_f_global = static_cast<double>(forget_ids.size()) / static_cast<double>(ds.size());
  return sp;
}

Scenario parse_scenario(const std::string& token, std::uint64_t seed) {
  const auto parts = split(token, ':');
  if (parts.empty()) throw std::invalid_argument("scenario: empty token");
  const std::string& kind = parts[0];
  if (kind == "class") {
    if (parts.size() != 2) throw std::invalid_argument("scenario: want class:<cls>");
    return ScenarioClass{static_cast<int>(parse_int(parts[1], "scenario class"))};
  }
  if (kind == "subclass") {
    if (parts.size() != 3) throw std::invalid_argument("scenario: want subclass:<cls>:<sub>");
    return ScenarioSubclass{static_cast<int>(parse_int(parts[1], "scenario class")),
                            static_cast<int>(parse_int(parts[2], "scenario subclass"))};
  }
  if (kind == "random") {
    if (parts.size() != 2) throw std::invalid_argument("scenario: want random:<n>");
    const long long n = parse_int(parts[1], "scenario count");
    if (n < 0) throw std::invalid_argument("scenario: negative count");
    return ScenarioRandom{static_cast<std::size_t>(n), seed};
  }
  throw std::invalid_argument("scenario: unknown kind '" + kind + "'");
}

std::string scenario_kind(const Scenario& sc) {
  if (std::holds_alternative<ScenarioClass>(sc)) return "class";
  if (std::holds_alternative<ScenarioSubclass>(sc)) return "subclass";
  return "random";
}

std::string scenario_cell_key(const Scenario& sc) {
  if (const auto* c = std::get_if<ScenarioClass>(&sc))
    return "class" + std::to_string(c->cls);
  if (const auto* s = std::get_if<ScenarioSubclass>(&sc))
    return "sub" + std::to_string(s->cls) + "_" + std::to_string(s->sub);
  const auto& r = std::get<ScenarioRandom>(sc);
  return "rand" + std::to_string(r.n_f);
}

ForgetSplit build_scenario(const LabeledDataset& ds, const Scenario& sc) {
  ds.validate();
  std::vector<SampleId> forget;
  if (const auto* c = std::get_if<ScenarioClass>(&sc)) {
    if (c->cls < 0 || c->cls >= ds.num_classes)
      throw std::invalid_argument("scenario: class " + std::to_string(c->cls) +
                                  " does not exist");
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.y[i] == c->cls) forget.push_back(ds.id[i]);
  } else if (const auto* s = std::get_if<ScenarioSubclass>(&sc)) {
    if (s->cls < 0 || s->cls >= ds.num_classes)
      throw std::invalid_argument("scenario: class " + std::to_string(s->cls) +
                                  " does not exist");
    if (ds.subclass.empty())
      throw std::invalid_argument("scenario: dataset has no subclass tags");
    bool sub_exists = false;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.y[i] == s->cls && ds.subclass[i] == s->sub) {
        sub_exists = true;
        forget.push_back(ds.id[i]);
      }
    if (!sub_exists)
      throw std::invalid_argument("scenario: subclass " + std::to_string(s->sub) +
                                  " of class " + std::to_string(s->cls) + " does not exist");
  } else {
    const auto& r = std::get<ScenarioRandom>(sc);
    if (r.n_f > ds.size())
      throw std::invalid_argument("scenario: random count exceeds dataset size");
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(r.seed);
    for (std::size_t i = 0; i < r.n_f; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    for (std::size_t i = 0; i < r.n_f; ++i) forget.push_back(ds.id[idx[i]]);
  }
  if (forget.empty()) throw std::invalid_argument("nothing to forget");
  return make_split(ds, std::move(forget));
}

LabeledDataset subset_by_ids(const LabeledDataset& ds, const std::vector<SampleId>& ids) {
  std::unordered_set<SampleId> want(ids.begin(), ids.end());
  if (want.size() != ids.size()) throw std::invalid_argument("subset: duplicate id");
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (want.count(ds.id[i])) rows.push_back(i);
  if (rows.size() != ids.size())
    throw std::invalid_argument("subset: id not present in dataset");
  LabeledDataset out;
  out.num_classes = ds.num_classes;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), ds.dim());
  out.y.resize(rows.size());
  out.id.resize(rows.size());
  if (!ds.subclass.empty()) out.subclass.resize(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.x.row(static_cast<Eigen::Index>(k)) = ds.x.row(static_cast<Eigen::Index>(rows[k]));
    out.y[k] = ds.y[rows[k]];
    out.id[k] = ds.id[rows[k]];
    if (!ds.subclass.empty()) out.subclass[k] = ds.subclass[rows[k]];
  }
  return out;
}

}  // namespace pul
