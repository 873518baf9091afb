#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pul/dataset.hpp"
#include "pul/posterior.hpp"

namespace pul {

struct GaussComponentSpec {
  int cls = 0;
  int sub = 0;
  double weight = 1.0;  // within-class weight, the weights of a class sum to 1
  Vec mean;
  Mat cov;  // full SPD
};

struct GaussianMixtureSpec {
  int d = 0;
  std::uint64_t seed = 0;
  std::vector<GaussComponentSpec> comps;

  int num_classes() const;
  int subclasses_of(int cls) const;
  void validate() const;
};

// named demo mixtures used by the CLI and the benchmark plans
GaussianMixtureSpec preset_mixture(const std::string& name);
std::vector<std::string> preset_mixture_names();

// mixture spec from a config file: a [mixture] section with d and seed, then
// one [component] section per cell with class/subclass/weight/mean/cov
GaussianMixtureSpec parse_mixture_config(const std::string& text);

// Draws per (class, subclass) cell. Each class receives n_per_subclass times
// its subclass count, apportioned over its cells by weight with largest
// remainder rounding; equal weights give exactly n_per_subclass per cell.
// Bit-reproducible for a fixed seed. Sample ids start at id_base.
LabeledDataset generate(const GaussianMixtureSpec& spec, std::size_t n_per_subclass,
                        std::optional<std::uint64_t> seed = std::nullopt,
                        SampleId id_base = 0);

// Ground truth view of a mixture with a subset of cells fully forgotten.
// Gives closed-form class-conditional log densities and posteriors for both
// the full and the retained distribution.
class TrueModel {
 public:
  TrueModel(GaussianMixtureSpec spec, std::vector<std::pair<int, int>> forgotten_cells);

  int num_classes() const { return c_; }
  int dim() const { return spec_.d; }

  double log_density(const Vec& x, int cls) const;    // full mixture, finite
  double log_density_r(const Vec& x, int cls) const;  // retained; -inf if class dropped
  Vec log_posterior(const Vec& x) const;
  Vec log_posterior_r(const Vec& x) const;
  double log_prior(int cls) const;
  double log_prior_r(int cls) const;  // -inf if class dropped

 private:
  struct Cell {
    int cls, sub;
    double mass;        // planned sampling mass
    double log_w;       // within-class weight, full view
    double log_w_r;     // within-class weight, retained view; -inf if forgotten
    Vec mean;
    Eigen::LLT<Mat> llt;
    double logdet;
    bool forgotten;
  };
  double cell_logpdf(const Cell& c, const Vec& x) const;
  GaussianMixtureSpec spec_;
  std::vector<Cell> cells_;
  int c_ = 0;
  std::vector<double> log_prior_, log_prior_r_;
};

// cells a scenario wipes out entirely: every cell of the class for a class
// scenario, the single cell for a subclass scenario, none for random
std::vector<std::pair<int, int>> forgotten_cells_for(const GaussianMixtureSpec& spec,
                                                     const Scenario& sc);

std::shared_ptr<TrueModel> true_model_for(const GaussianMixtureSpec& spec, const Scenario& sc);

// PosteriorModel adapters over the ground truth, usable wherever a fitted
// proxy is expected
class TruePosterior : public PosteriorModel {
 public:
  enum class View { Full, Retain };
  TruePosterior(std::shared_ptr<const TrueModel> m, View v) : m_(std::move(m)), view_(v) {}
  int num_classes() const override { return m_->num_classes(); }
  Vec log_posterior(const Vec& x) const override {
    return view_ == View::Full ? m_->log_posterior(x) : m_->log_posterior_r(x);
  }
  std::optional<double> log_class_density(const Vec& x, int cls) const override {
    const double v = view_ == View::Full ? m_->log_density(x, cls) : m_->log_density_r(x, cls);
    if (v == -std::numeric_limits<double>::infinity()) return std::nullopt;
    return v;
  }

 private:
  std::shared_ptr<const TrueModel> m_;
  View view_;
};

}  // namespace pul
