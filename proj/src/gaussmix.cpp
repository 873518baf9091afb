#include "pul/gaussmix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "pul/io_util.hpp"
#include "pul/rng.hpp"

namespace pul {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}  // namespace

int GaussianMixtureSpec::num_classes() const {
  int c = 0;
  for (const auto& comp : comps) c = std::max(c, comp.cls + 1);
  return c;
}

int GaussianMixtureSpec::subclasses_of(int cls) const {
  int n = 0;
  for (const auto& comp : comps)
    if (comp.cls == cls) ++n;
  return n;
}

void GaussianMixtureSpec::validate() const {
  if (d < 1) throw std::invalid_argument("mixture: d < 1");
  if (comps.empty()) throw std::invalid_argument("mixture: no components");
  const int c = num_classes();
  std::map<int, double> wsum;
  std::set<std::pair<int, int>> seen;
  for (const auto& comp : comps) {
    if (comp.cls < 0) throw std::invalid_argument("mixture: negative class");
    if (comp.weight < 0.0) throw std::invalid_argument("mixture: negative weight");
    if (!seen.insert({comp.cls, comp.sub}).second)
      throw std::invalid_argument("mixture: duplicate (class, subclass) cell");
    if (comp.mean.size() != d) throw std::invalid_argument("mixture: mean dim mismatch");
    if (comp.cov.rows() != d || comp.cov.cols() != d)
      throw std::invalid_argument("mixture: cov dim mismatch");
    if (!((comp.cov - comp.cov.transpose()).cwiseAbs().maxCoeff() <= 1e-9))
      throw std::invalid_argument("mixture: cov not symmetric");
    Eigen::LLT<Mat> llt(comp.cov);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("mixture: cov not positive definite");
    wsum[comp.cls] += comp.weight;
  }
  for (int k = 0; k < c; ++k) {
    auto it = wsum.find(k);
    if (it == wsum.end())
      throw std::invalid_argument("mixture: class " + std::to_string(k) + " has no components");
    if (std::abs(it->second - 1.0) > 1e-9)
      throw std::invalid_argument("mixture: weights of class " + std::to_string(k) +
                                  " do not sum to 1");
  }
}

GaussianMixtureSpec preset_mixture(const std::string& name) {
  auto comp = [](int cls, int sub, double w, std::initializer_list<double> mu,
                 std::initializer_list<double> covrow) {
    GaussComponentSpec c;
    c.cls = cls;
    c.sub = sub;
    c.weight = w;
    c.mean = Vec(static_cast<Eigen::Index>(mu.size()));
    Eigen::Index i = 0;
    for (double v : mu) c.mean[i++] = v;
    const auto d = static_cast<Eigen::Index>(mu.size());
    c.cov = Mat::Zero(d, d);
    // covrow packs the full row-major matrix
    i = 0;
    for (double v : covrow) {
      c.cov(i / d, i % d) = v;
      ++i;
    }
    return c;
  };

  GaussianMixtureSpec spec;
  if (name == "blobs2") {
    // two classes, two subclasses each, mild overlap in the middle
    spec.d = 2;
    spec.comps = {
        comp(0, 0, 0.5, {-3.0, 0.0}, {1.0, 0.2, 0.2, 0.8}),
        comp(0, 1, 0.5, {0.0, 3.0}, {0.8, -0.1, -0.1, 1.1}),
        comp(1, 0, 0.5, {3.0, 0.0}, {1.1, 0.0, 0.0, 0.9}),
        comp(1, 1, 0.5, {0.0, -3.0}, {0.9, 0.15, 0.15, 1.0}),
    };
    return spec;
  }
  if (name == "blobs3") {
    // three classes on a ring, two subclasses per class
    spec.d = 2;
    spec.comps = {
        comp(0, 0, 0.5, {4.0, 1.2}, {1.0, 0.1, 0.1, 1.0}),
        comp(0, 1, 0.5, {4.0, -1.2}, {0.9, 0.0, 0.0, 1.1}),
        comp(1, 0, 0.5, {-2.0, 4.0}, {1.1, -0.15, -0.15, 0.9}),
        comp(1, 1, 0.5, {-3.6, 2.2}, {1.0, 0.0, 0.0, 1.0}),
        comp(2, 0, 0.5, {-2.0, -4.0}, {0.8, 0.1, 0.1, 1.2}),
        comp(2, 1, 0.5, {-3.6, -2.2}, {1.0, -0.1, -0.1, 0.9}),
    };
    return spec;
  }
  if (name == "homo8d3") {
    // three classes in eight dimensions with one shared covariance, the
    // closed-form linear rule is Bayes optimal here
    spec.d = 8;
    Mat cov = Mat::Identity(8, 8);
    for (int i = 0; i < 7; ++i) {
      cov(i, i + 1) = 0.25;
      cov(i + 1, i) = 0.25;
    }
    cov.diagonal().setConstant(1.2);
    for (int k = 0; k < 3; ++k) {
      GaussComponentSpec c;
      c.cls = k;
      c.sub = 0;
      c.weight = 1.0;
      c.mean = Vec::Zero(8);
      c.mean[k] = 2.4;
      c.mean[(k + 3) % 8] = -1.2;
      c.cov = cov;
      spec.comps.push_back(std::move(c));
    }
    return spec;
  }
  throw std::invalid_argument("unknown mixture preset '" + name + "'");
}

std::vector<std::string> preset_mixture_names() { return {"blobs2", "blobs3", "homo8d3"}; }

namespace {

Vec parse_vec(const std::string& s, const std::string& what) {
  const auto parts = split(s, ',');
  Vec v(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = parse_double(parts[i], what);
  return v;
}

}  // namespace

GaussianMixtureSpec parse_mixture_config(const std::string& text) {
  GaussianMixtureSpec spec;
  bool saw_mixture = false;
  for (const auto& sec : parse_config(text)) {
    if (sec.name == "mixture") {
      saw_mixture = true;
      for (const auto& [k, v] : sec.kv) {
        if (k == "d")
          spec.d = static_cast<int>(parse_int(v, "mixture.d"));
        else if (k == "seed")
          spec.seed = static_cast<std::uint64_t>(parse_int(v, "mixture.seed"));
        else
          throw std::invalid_argument("mixture config: unknown key '" + k + "'");
      }
    } else if (sec.name == "component") {
      GaussComponentSpec c;
      bool have_cov = false;
      for (const auto& [k, v] : sec.kv) {
        if (k == "class")
          c.cls = static_cast<int>(parse_int(v, "component.class"));
        else if (k == "subclass")
          c.sub = static_cast<int>(parse_int(v, "component.subclass"));
        else if (k == "weight")
          c.weight = parse_double(v, "component.weight");
        else if (k == "mean")
          c.mean = parse_vec(v, "component.mean");
        else if (k == "cov") {
          const auto rows = split(v, ';');
          c.cov.resize(static_cast<Eigen::Index>(rows.size()),
                       static_cast<Eigen::Index>(rows.size()));
          for (std::size_t i = 0; i < rows.size(); ++i) {
            const Vec r = parse_vec(rows[i], "component.cov");
            if (r.size() != c.cov.cols())
              throw std::invalid_argument("mixture config: ragged cov rows");
            c.cov.row(static_cast<Eigen::Index>(i)) = r.transpose();
          }
          have_cov = true;
        } else if (k == "diag") {
          const Vec dg = parse_vec(v, "component.diag");
          c.cov = dg.asDiagonal();
          have_cov = true;
        } else {
          throw std::invalid_argument("mixture config: unknown key '" + k + "'");
        }
      }
      if (c.mean.size() == 0 || !have_cov)
        throw std::invalid_argument("mixture config: component needs mean and cov");
      spec.comps.push_back(std::move(c));
    } else {
      throw std::invalid_argument("mixture config: unknown section [" + sec.name + "]");
    }
  }
  if (!saw_mixture) throw std::invalid_argument("mixture config: missing [mixture] section");
  spec.validate();
  return spec;
}

LabeledDataset generate(const GaussianMixtureSpec& spec, std::size_t n_per_subclass,
                        std::optional<std::uint64_t> seed, SampleId id_base) {
  spec.validate();
  if (n_per_subclass == 0) throw std::invalid_argument("generate: n_per_subclass = 0");
  const int c = spec.num_classes();

  // sort cells so the draw order is independent of spec listing order
  std::vector<const GaussComponentSpec*> cells;
  for (const auto& comp : spec.comps) cells.push_back(&comp);
  std::sort(cells.begin(), cells.end(), [](const auto* a, const auto* b) {
    return std::make_pair(a->cls, a->sub) < std::make_pair(b->cls, b->sub);
  });

  // per-class totals apportioned by weight, largest remainder
  std::map<int, std::vector<std::size_t>> cell_idx_of_class;
  for (std::size_t i = 0; i < cells.size(); ++i)
    cell_idx_of_class[cells[i]->cls].push_back(i);
  std::vector<std::size_t> counts(cells.size(), 0);
  for (int k = 0; k < c; ++k) {
    const auto& idxs = cell_idx_of_class[k];
    const std::size_t total = n_per_subclass * idxs.size();
    std::size_t assigned = 0;
    std::vector<std::pair<double, std::size_t>> remainders;
    for (std::size_t i : idxs) {
      const double target = cells[i]->weight * static_cast<double>(total);
      const auto base = static_cast<std::size_t>(std::floor(target));
      counts[i] = base;
      assigned += base;
      remainders.push_back({target - static_cast<double>(base), i});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t r = 0; assigned < total; ++r, ++assigned) counts[remainders[r].second] += 1;
  }

  std::size_t n = 0;
  for (std::size_t v : counts) n += v;
  LabeledDataset ds;
  ds.num_classes = c;
  ds.x.resize(static_cast<Eigen::Index>(n), spec.d);
  ds.y.resize(n);
  ds.subclass.resize(n);
  ds.id.resize(n);

  Rng rng(seed.value_or(spec.seed));
  std::size_t row = 0;
  Vec z(spec.d);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& cell = *cells[i];
    Eigen::LLT<Mat> llt(cell.cov);
    const Mat l = llt.matrixL();
    for (std::size_t s = 0; s < counts[i]; ++s) {
      for (int j = 0; j < spec.d; ++j) z[j] = rng.normal();
      ds.x.row(static_cast<Eigen::Index>(row)) = (cell.mean + l * z).transpose();
      ds.y[row] = cell.cls;
      ds.subclass[row] = cell.sub;
      ds.id[row] = id_base + static_cast<SampleId>(row);
      ++row;
    }
  }
  ds.validate();
  return ds;
}

double TrueModel::cell_logpdf(const Cell& c, const Vec& x) const {
  const Vec v = x - c.mean;
  const Vec w = c.llt.matrixL().solve(v);
  return -0.5 * (spec_.d * kLog2Pi + c.logdet + w.squaredNorm());
}

TrueModel::TrueModel(GaussianMixtureSpec spec, std::vector<std::pair<int, int>> forgotten_cells)
    : spec_(std::move(spec)) {
  spec_.validate();
  c_ = spec_.num_classes();
  std::set<std::pair<int, int>> gone(forgotten_cells.begin(), forgotten_cells.end());
  for (const auto& fc : gone) {
    bool found = false;
    for (const auto& comp : spec_.comps)
      if (comp.cls == fc.first && comp.sub == fc.second) found = true;
    if (!found)
      throw std::invalid_argument("true model: forgotten cell does not exist in the spec");
  }

  std::vector<double> class_mass(c_, 0.0), class_mass_r(c_, 0.0);
  for (const auto& comp : spec_.comps) {
    Cell cell;
    cell.cls = comp.cls;
    cell.sub = comp.sub;
    cell.mass = comp.weight * static_cast<double>(spec_.subclasses_of(comp.cls));
    cell.mean = comp.mean;
    cell.llt.compute(comp.cov);
    if (cell.llt.info() != Eigen::Success)
      throw NumericalError("true model: covariance not positive definite");
    const Mat l = cell.llt.matrixL();
    cell.logdet = 2.0 * l.diagonal().array().log().sum();
    cell.forgotten = gone.count({comp.cls, comp.sub}) != 0;
    cell.log_w = std::log(comp.weight);
    cell.log_w_r = -kInf;  // set below once retained class mass is known
    class_mass[comp.cls] += cell.mass;
    if (!cell.forgotten) class_mass_r[comp.cls] += cell.mass;
    cells_.push_back(std::move(cell));
  }
  double total = 0.0, total_r = 0.0;
  for (int k = 0; k < c_; ++k) {
    total += class_mass[k];
    total_r += class_mass_r[k];
  }
  if (total_r <= 0.0) throw std::invalid_argument("true model: everything forgotten");
  log_prior_.resize(c_);
  log_prior_r_.resize(c_);
  for (int k = 0; k < c_; ++k) {
    log_prior_[k] = std::log(class_mass[k] / total);
    log_prior_r_[k] =
        class_mass_r[k] > 0.0 ? std::log(class_mass_r[k] / total_r) : -kInf;
  }
  for (auto& cell : cells_) {
    if (!cell.forgotten && class_mass_r[cell.cls] > 0.0)
      cell.log_w_r = std::log(cell.mass / class_mass_r[cell.cls]);
  }
}

double TrueModel::log_density(const Vec& x, int cls) const {
  Vec terms(static_cast<Eigen::Index>(cells_.size()));
  Eigen::Index n = 0;
  for (const auto& cell : cells_)
    if (cell.cls == cls) terms[n++] = cell.log_w + cell_logpdf(cell, x);
  if (n == 0) throw std::invalid_argument("true model: unknown class");
  return log_sum_exp(terms.head(n));
}

double TrueModel::log_density_r(const Vec& x, int cls) const {
  Vec terms(static_cast<Eigen::Index>(cells_.size()));
  Eigen::Index n = 0;
  for (const auto& cell : cells_)
    if (cell.cls == cls && !cell.forgotten) terms[n++] = cell.log_w_r + cell_logpdf(cell, x);
  if (n == 0) return -kInf;
  return log_sum_exp(terms.head(n));
}

Vec TrueModel::log_posterior(const Vec& x) const {
  Vec s(c_);
  for (int k = 0; k < c_; ++k) s[k] = log_prior_[k] + log_density(x, k);
  return log_softmax(s);
}

Vec TrueModel::log_posterior_r(const Vec& x) const {
  Vec s(c_);
  for (int k = 0; k < c_; ++k) {
    s[k] = log_prior_r_[k] == -kInf ? -kInf : log_prior_r_[k] + log_density_r(x, k);
  }
  return log_softmax(s);
}

double TrueModel::log_prior(int cls) const { return log_prior_.at(cls); }
double TrueModel::log_prior_r(int cls) const { return log_prior_r_.at(cls); }

std::vector<std::pair<int, int>> forgotten_cells_for(const GaussianMixtureSpec& spec,
                                                     const Scenario& sc) {
  std::vector<std::pair<int, int>> out;
  if (const auto* c = std::get_if<ScenarioClass>(&sc)) {
    for (const auto& comp : spec.comps)
      if (comp.cls == c->cls) out.push_back({comp.cls, comp.sub});
    if (out.empty()) throw std::invalid_argument("scenario: class does not exist in spec");
  } else if (const auto* s = std::get_if<ScenarioSubclass>(&sc)) {
    out.push_back({s->cls, s->sub});
  }
  return out;  // random scenarios leave the distribution unchanged
}

std::shared_ptr<TrueModel> true_model_for(const GaussianMixtureSpec& spec, const Scenario& sc) {
  return std::make_shared<TrueModel>(spec, forgotten_cells_for(spec, sc));
}

}  // namespace pul
