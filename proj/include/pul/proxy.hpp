#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pul/dataset.hpp"
#include "pul/posterior.hpp"

namespace pul {

enum class ProxyKind { Lda, Qda, LdaMix, QdaMix, Lda2c, Dir, Dir2c };

std::string to_string(ProxyKind k);
ProxyKind proxy_kind_from_string(const std::string& s);
bool is_dirac(ProxyKind k);

struct ProxyOptions {
  // ridge strength, scaled by tr(cov)/d before adding to the diagonal
  double ridge = 1e-6;
  // lda/qda pairs reuse the covariance fitted on the full set for the retain
  // model (one shared sigma); false refits it on the retain support
  bool shared_sigma_from_full = true;
  // full per-class covariance for qda kinds instead of diagonal
  bool qda_full_cov = false;
};

enum class CovKind { SharedFull, SharedDiag, PerCompFull, PerCompDiag };

struct GaussComp {
  int cls = 0;
  int state = -1;  // -1 plain, 0 retain, 1 forget
  std::int64_t count = 0;
  double log_prior = 0.0;
  Vec mean;
};

// Gaussian class-conditional fit over (class, state) cells. Cells with zero
// samples are not stored and carry prior 0 by construction; stored cells
// need at least two samples unless allow_singletons covers their state and
// the covariance is pooled.
class GaussFit {
 public:
  static GaussFit fit(const Mat& x, const std::vector<int>& cls, const std::vector<int>& state,
                      int num_classes, CovKind kind, double ridge,
                      const GaussFit* sigma_donor = nullptr,
                      std::optional<int> allow_singleton_state = std::nullopt);

  int dim() const { return d_; }
  int num_classes() const { return c_; }
  CovKind cov_kind() const { return kind_; }
  const std::vector<GaussComp>& comps() const { return comps_; }
  std::optional<std::size_t> comp_of(int cls, int state) const;

  double log_density(const Vec& x, std::size_t comp) const;
  Mat cov_dense(std::size_t comp) const;
  double cov_logdet(std::size_t comp) const;

  void write(std::ostream& out) const;
  static GaussFit read(std::istream& in);

 private:
  void finalize();  // builds factors, throws NumericalError on a singular cov
  int d_ = 0, c_ = 0;
  CovKind kind_ = CovKind::SharedFull;
  double ridge_ = 0.0;
  std::vector<GaussComp> comps_;
  std::map<std::pair<int, int>, std::size_t> index_;
  Mat shared_cov_;
  Vec shared_var_;
  std::vector<Mat> comp_cov_;
  std::vector<Vec> comp_var_;
  Eigen::LLT<Mat> shared_llt_;
  double shared_logdet_ = 0.0;
  std::vector<Eigen::LLT<Mat>> comp_llt_;
  std::vector<double> comp_logdet_;
};

// Posterior over classes from a GaussFit. Marginal sums a class's cells;
// RetainSlice conditions on the state == 0 cells only.
class GaussPosterior : public PosteriorModel {
 public:
  enum class View { Marginal, RetainSlice };
  GaussPosterior(std::shared_ptr<const GaussFit> fit, View view);
  int num_classes() const override;
  Vec log_posterior(const Vec& x) const override;
  std::optional<double> log_class_density(const Vec& x, int cls) const override;
  const GaussFit& fit() const { return *fit_; }
  View view() const { return view_; }

 private:
  std::shared_ptr<const GaussFit> fit_;
  View view_;
};

// Per-class two-state mixture with fixed per-class forget mass. The forget
// fit may be null when every class has zero forget mass.
class MixPosterior : public PosteriorModel {
 public:
  MixPosterior(std::shared_ptr<const GaussFit> retain, std::shared_ptr<const GaussFit> forget,
               std::vector<double> pi_f, std::vector<double> log_class_prior);
  int num_classes() const override;
  Vec log_posterior(const Vec& x) const override;
  std::optional<double> log_class_density(const Vec& x, int cls) const override;
  const GaussFit& retain_fit() const { return *retain_; }
  const GaussFit* forget_fit() const { return forget_.get(); }
  const std::vector<double>& pi_f() const { return pi_f_; }
  const std::vector<double>& log_class_prior() const { return log_prior_; }

 private:
  std::shared_ptr<const GaussFit> retain_, forget_;
  std::vector<double> pi_f_;
  std::vector<double> log_prior_;
};

// membership tables for the Dirac kinds
struct EmpiricalProxy {
  std::unordered_map<SampleId, int> label_of;  // all of D
  std::unordered_set<SampleId> forget;
  std::vector<std::int64_t> count_d, count_r, count_f;  // per class
  int num_classes = 0;
};

struct ProxyPair {
  ProxyKind kind = ProxyKind::Lda;
  int num_classes = 0;
  ProxyOptions opts;
  std::string fitted_on;  // dataset fingerprint

  std::shared_ptr<const PosteriorModel> p_model;   // gaussian kinds
  std::shared_ptr<const PosteriorModel> pr_model;  // gaussian kinds
  std::shared_ptr<const EmpiricalProxy> members;   // dirac kinds

  bool dirac() const { return is_dirac(kind); }

  // log P_r(.|x) - log P(.|x); -inf entries mark classes the retain model
  // rules out. Dir uses the membership table and needs the sample id; ids
  // outside the fitted set give the zero vector. Dir2c has no logit-shift
  // form and throws std::logic_error.
  Vec delta_m(const Vec& x, std::optional<SampleId> id = std::nullopt) const;
};

ProxyPair fit_proxy(ProxyKind kind, const LabeledDataset& ds, const ForgetSplit& split,
                    const ProxyOptions& opts = {});

void save_proxy(const ProxyPair& pair, const std::string& path);
ProxyPair load_proxy(const std::string& path);

// post-forgetting probit of a forget sample: true label zeroed, the rest
// renormalized; errors when p[y] = 1 ("undefined renormalization")
Vec dirac_target(const Vec& p_base, int y);

// count-weighted blend: (n_r/n) p_base + (n_f/n) dirac_target(p_base, y)
Vec dirac_target_2c(const Vec& p_base, int y, std::int64_t n_retain, std::int64_t n_forget);

// KL(N(mu, cov_k) || N(mu, cov)) for a shared mean
double gauss_kl_same_mean(const Mat& cov_k, const Mat& cov);

// expected same-mean KL cost of forcing one pooled covariance onto per-class
// fits: 0.5 sum_k prior_k (log|S|/|S_k| + tr(S^-1 S_k) - d)
double homoscedastic_cost(const GaussFit& per_class, const GaussFit& pooled,
                          const std::vector<double>& class_priors);

}  // namespace pul
