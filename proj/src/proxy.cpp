#include "pul/proxy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "pul/io_util.hpp"

namespace pul {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void expect_token(std::istream& in, const std::string& want, const std::string& where) {
  std::string got;
  if (!(in >> got) || got != want)
    throw std::invalid_argument("proxy file: expected '" + want + "' in " + where +
                                ", got '" + got + "'");
}
}  // namespace

std::string to_string(ProxyKind k) {
  switch (k) {
    case ProxyKind::Lda: return "lda";
    case ProxyKind::Qda: return "qda";
    case ProxyKind::LdaMix: return "lda-mix";
    case ProxyKind::QdaMix: return "qda-mix";
    case ProxyKind::Lda2c: return "lda-2c";
    case ProxyKind::Dir: return "dir";
    case ProxyKind::Dir2c: return "dir-2c";
  }
  throw std::logic_error("unreachable proxy kind");
}

ProxyKind proxy_kind_from_string(const std::string& s) {
  if (s == "lda") return ProxyKind::Lda;
  if (s == "qda") return ProxyKind::Qda;
  if (s == "lda-mix") return ProxyKind::LdaMix;
  if (s == "qda-mix") return ProxyKind::QdaMix;
  if (s == "lda-2c") return ProxyKind::Lda2c;
  if (s == "dir") return ProxyKind::Dir;
  if (s == "dir-2c") return ProxyKind::Dir2c;
  throw std::invalid_argument("unknown proxy kind '" + s + "'");
}

bool is_dirac(ProxyKind k) { return k == ProxyKind::Dir || k == ProxyKind::Dir2c; }

GaussFit GaussFit::fit(const Mat& x, const std::vector<int>& cls, const std::vector<int>& state,
                       int num_classes, CovKind kind, double ridge, const GaussFit* sigma_donor,
                       std::optional<int> allow_singleton_state) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n == 0) throw std::invalid_argument("insufficient data for proxy: empty fitting set");
  if (cls.size() != n || state.size() != n)
    throw std::invalid_argument("proxy fit: label column length mismatch");
  const int d = static_cast<int>(x.cols());
  const bool shared = kind == CovKind::SharedFull || kind == CovKind::SharedDiag;

  std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < n; ++i) cells[{cls[i], state[i]}].push_back(i);

  GaussFit f;
  f.d_ = d;
  f.c_ = num_classes;
  f.kind_ = kind;
  f.ridge_ = ridge;

  for (const auto& [key, rows] : cells) {
    if (rows.size() < 2) {
      const bool relaxed = shared && allow_singleton_state && key.second == *allow_singleton_state;
      if (!relaxed)
        throw std::invalid_argument("insufficient data for proxy: cell (class " +
                                    std::to_string(key.first) + ", state " +
                                    std::to_string(key.second) + ") has " +
                                    std::to_string(rows.size()) + " sample(s)");
    }
    GaussComp comp;
    comp.cls = key.first;
    comp.state = key.second;
    comp.count = static_cast<std::int64_t>(rows.size());
    comp.log_prior = std::log(static_cast<double>(rows.size()) / static_cast<double>(n));
    Vec mean = Vec::Zero(d);
    for (std::size_t r : rows) mean += x.row(static_cast<Eigen::Index>(r)).transpose();
    comp.mean = mean / static_cast<double>(rows.size());
    f.index_.emplace(key, f.comps_.size());
    f.comps_.push_back(std::move(comp));
  }

  auto add_ridge_full = [&](Mat& s) {
    s += (ridge * s.trace() / static_cast<double>(d)) * Mat::Identity(d, d);
  };
  auto add_ridge_diag = [&](Vec& v) { v.array() += ridge * v.mean(); };

  if (sigma_donor) {
    if (sigma_donor->kind_ != kind || sigma_donor->d_ != d)
      throw std::invalid_argument("proxy fit: covariance donor shape mismatch");
    if (shared) {
      f.shared_cov_ = sigma_donor->shared_cov_;
      f.shared_var_ = sigma_donor->shared_var_;
    } else {
      for (const auto& comp : f.comps_) {
        auto di = sigma_donor->comp_of(comp.cls, comp.state);
        if (!di) di = sigma_donor->comp_of(comp.cls, -1);
        if (!di)
          throw std::invalid_argument("proxy fit: donor lacks covariance for class " +
                                      std::to_string(comp.cls));
        if (kind == CovKind::PerCompFull)
          f.comp_cov_.push_back(sigma_donor->comp_cov_[*di]);
        else
          f.comp_var_.push_back(sigma_donor->comp_var_[*di]);
      }
    }
  } else if (shared) {
    const auto dof = static_cast<double>(n) - static_cast<double>(f.comps_.size());
    if (dof < 1.0)
      throw std::invalid_argument("insufficient data for proxy: no pooled degrees of freedom");
    if (kind == CovKind::SharedFull) {
      Mat s = Mat::Zero(d, d);
      for (const auto& [key, rows] : cells) {
        const Vec& mu = f.comps_[f.index_.at(key)].mean;
        for (std::size_t r : rows) {
          const Vec v = x.row(static_cast<Eigen::Index>(r)).transpose() - mu;
          s.noalias() += v * v.transpose();
        }
      }
      s /= dof;
      add_ridge_full(s);
      f.shared_cov_ = std::move(s);
    } else {
      Vec v2 = Vec::Zero(d);
      for (const auto& [key, rows] : cells) {
        const Vec& mu = f.comps_[f.index_.at(key)].mean;
        for (std::size_t r : rows)
          v2 += (x.row(static_cast<Eigen::Index>(r)).transpose() - mu).array().square().matrix();
      }
      v2 /= dof;
      add_ridge_diag(v2);
      f.shared_var_ = std::move(v2);
    }
  } else {
    for (const auto& [key, rows] : cells) {
      const Vec& mu = f.comps_[f.index_.at(key)].mean;
      const double dof = static_cast<double>(rows.size()) - 1.0;
      if (kind == CovKind::PerCompFull) {
        Mat s = Mat::Zero(d, d);
        for (std::size_t r : rows) {
          const Vec v = x.row(static_cast<Eigen::Index>(r)).transpose() - mu;
          s.noalias() += v * v.transpose();
        }
        s /= dof;
        add_ridge_full(s);
        f.comp_cov_.push_back(std::move(s));
      } else {
        Vec v2 = Vec::Zero(d);
        for (std::size_t r : rows)
          v2 += (x.row(static_cast<Eigen::Index>(r)).transpose() - mu).array().square().matrix();
        v2 /= dof;
        add_ridge_diag(v2);
        f.comp_var_.push_back(std::move(v2));
      }
    }
  }

  f.finalize();
  return f;
}

void GaussFit::finalize() {
  const auto fail = []() {
    throw NumericalError("proxy: singular covariance, not positive definite after ridge");
  };
  if (kind_ == CovKind::SharedFull) {
    shared_llt_.compute(shared_cov_);
    if (shared_llt_.info() != Eigen::Success) fail();
    shared_logdet_ = 2.0 * Mat(shared_llt_.matrixL()).diagonal().array().log().sum();
  } else if (kind_ == CovKind::SharedDiag) {
    if ((shared_var_.array() <= 0.0).any()) fail();
    shared_logdet_ = shared_var_.array().log().sum();
  } else if (kind_ == CovKind::PerCompFull) {
    comp_llt_.clear();
    comp_logdet_.clear();
    for (const auto& cov : comp_cov_) {
      Eigen::LLT<Mat> llt(cov);
      if (llt.info() != Eigen::Success) fail();
      comp_logdet_.push_back(2.0 * Mat(llt.matrixL()).diagonal().array().log().sum());
      comp_llt_.push_back(std::move(llt));
    }
  } else {
    comp_logdet_.clear();
    for (const auto& var : comp_var_) {
      if ((var.array() <= 0.0).any()) fail();
      comp_logdet_.push_back(var.array().log().sum());
    }
  }
}

std::optional<std::size_t> GaussFit::comp_of(int cls, int state) const {
  auto it = index_.find({cls, state});
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

double GaussFit::log_density(const Vec& xv, std::size_t comp) const {
  const Vec v = xv - comps_[comp].mean;
  double maha = 0.0, logdet = 0.0;
  switch (kind_) {
    case CovKind::SharedFull: {
      maha = shared_llt_.matrixL().solve(v).squaredNorm();
      logdet = shared_logdet_;
      break;
    }
    case CovKind::SharedDiag: {
      maha = (v.array().square() / shared_var_.array()).sum();
      logdet = shared_logdet_;
      break;
    }
    case CovKind::PerCompFull: {
      maha = comp_llt_[comp].matrixL().solve(v).squaredNorm();
      logdet = comp_logdet_[comp];
      break;
    }
    case CovKind::PerCompDiag: {
      maha = (v.array().square() / comp_var_[comp].array()).sum();
      logdet = comp_logdet_[comp];
      break;
    }
  }
  return -0.5 * (static_cast<double>(d_) * kLog2Pi + logdet + maha);
}

Mat GaussFit::cov_dense(std::size_t comp) const {
  switch (kind_) {
    case CovKind::SharedFull: return shared_cov_;
    case CovKind::SharedDiag: return Mat(shared_var_.asDiagonal());
    case CovKind::PerCompFull: return comp_cov_[comp];
    case CovKind::PerCompDiag: return Mat(comp_var_[comp].asDiagonal());
  }
  throw std::logic_error("unreachable cov kind");
}

double GaussFit::cov_logdet(std::size_t comp) const {
  switch (kind_) {
    case CovKind::SharedFull:
    case CovKind::SharedDiag: return shared_logdet_;
    default: return comp_logdet_[comp];
  }
}

void GaussFit::write(std::ostream& out) const {
  out << "gaussfit " << d_ << ' ' << c_ << ' ' << static_cast<int>(kind_) << ' '
      << fmt_g17(ridge_) << ' ' << comps_.size() << '\n';
  const bool per_comp = kind_ == CovKind::PerCompFull || kind_ == CovKind::PerCompDiag;
  for (std::size_t i = 0; i < comps_.size(); ++i) {
    const auto& comp = comps_[i];
    out << "comp " << comp.cls << ' ' << comp.state << ' ' << comp.count << ' '
        << fmt_g17(comp.log_prior) << '\n';
    for (int j = 0; j < d_; ++j) out << (j ? " " : "") << fmt_g17(comp.mean[j]);
    out << '\n';
    if (per_comp) {
      if (kind_ == CovKind::PerCompFull) {
        for (int r = 0; r < d_; ++r) {
          for (int j = 0; j < d_; ++j) out << (j ? " " : "") << fmt_g17(comp_cov_[i](r, j));
          out << '\n';
        }
      } else {
        for (int j = 0; j < d_; ++j) out << (j ? " " : "") << fmt_g17(comp_var_[i][j]);
        out << '\n';
      }
    }
  }
  if (kind_ == CovKind::SharedFull) {
    for (int r = 0; r < d_; ++r) {
      for (int j = 0; j < d_; ++j) out << (j ? " " : "") << fmt_g17(shared_cov_(r, j));
      out << '\n';
    }
  } else if (kind_ == CovKind::SharedDiag) {
    for (int j = 0; j < d_; ++j) out << (j ? " " : "") << fmt_g17(shared_var_[j]);
    out << '\n';
  }
}

GaussFit GaussFit::read(std::istream& in) {
  expect_token(in, "gaussfit", "gaussian fit block");
  GaussFit f;
  int kind_int = 0;
  std::size_t ncomps = 0;
  if (!(in >> f.d_ >> f.c_ >> kind_int >> f.ridge_ >> ncomps))
    throw std::invalid_argument("proxy file: bad gaussian fit header");
  if (kind_int < 0 || kind_int > 3)
    throw std::invalid_argument("proxy file: bad covariance kind");
  f.kind_ = static_cast<CovKind>(kind_int);
  const bool per_comp = f.kind_ == CovKind::PerCompFull || f.kind_ == CovKind::PerCompDiag;
  for (std::size_t i = 0; i < ncomps; ++i) {
    expect_token(in, "comp", "gaussian fit component");
    GaussComp comp;
    if (!(in >> comp.cls >> comp.state >> comp.count >> comp.log_prior))
      throw std::invalid_argument("proxy file: bad component header");
    comp.mean.resize(f.d_);
    for (int j = 0; j < f.d_; ++j)
      if (!(in >> comp.mean[j]))
        throw std::invalid_argument("proxy file: truncated component mean");
    f.index_.emplace(std::make_pair(comp.cls, comp.state), f.comps_.size());
    f.comps_.push_back(std::move(comp));
    if (per_comp) {
      if (f.kind_ == CovKind::PerCompFull) {
        Mat cov(f.d_, f.d_);
        for (int r = 0; r < f.d_; ++r)
          for (int j = 0; j < f.d_; ++j)
            if (!(in >> cov(r, j)))
              throw std::invalid_argument("proxy file: truncated covariance");
        f.comp_cov_.push_back(std::move(cov));
      } else {
        Vec var(f.d_);
        for (int j = 0; j < f.d_; ++j)
          if (!(in >> var[j])) throw std::invalid_argument("proxy file: truncated variance");
        f.comp_var_.push_back(std::move(var));
      }
    }
  }
  if (f.kind_ == CovKind::SharedFull) {
    f.shared_cov_.resize(f.d_, f.d_);
    for (int r = 0; r < f.d_; ++r)
      for (int j = 0; j < f.d_; ++j)
        if (!(in >> f.shared_cov_(r, j)))
          throw std::invalid_argument("proxy file: truncated covariance");
  } else if (f.kind_ == CovKind::SharedDiag) {
    f.shared_var_.resize(f.d_);
    for (int j = 0; j < f.d_; ++j)
      if (!(in >> f.shared_var_[j]))
        throw std::invalid_argument("proxy file: truncated variance");
  }
  f.finalize();
  return f;
}

GaussPosterior::GaussPosterior(std::shared_ptr<const GaussFit> fit, View view)
    : fit_(std::move(fit)), view_(view) {
  if (view_ == View::RetainSlice) {
    bool any = false;
    for (const auto& comp : fit_->comps()) any = any || comp.state == 0;
    if (!any)
      throw std::invalid_argument("posterior: retain slice over a fit with no retain cells");
  }
}

int GaussPosterior::num_classes() const { return fit_->num_classes(); }

Vec GaussPosterior::log_posterior(const Vec& x) const {
  if (x.size() != fit_->dim()) throw std::invalid_argument("posterior: input dim mismatch");
  const auto& comps = fit_->comps();
  std::vector<double> score(comps.size());
  const bool slice = view_ == View::RetainSlice;
  Vec denom_terms(static_cast<Eigen::Index>(comps.size()));
  Eigen::Index nd = 0;
  for (std::size_t j = 0; j < comps.size(); ++j) {
    if (slice && comps[j].state != 0) continue;
    score[j] = comps[j].log_prior + fit_->log_density(x, j);
    denom_terms[nd++] = score[j];
  }
  const double denom = log_sum_exp(denom_terms.head(nd));
  Vec out = Vec::Constant(fit_->num_classes(), -kInf);
  for (int k = 0; k < fit_->num_classes(); ++k) {
    Vec terms(static_cast<Eigen::Index>(comps.size()));
    Eigen::Index nt = 0;
    for (std::size_t j = 0; j < comps.size(); ++j) {
      if (comps[j].cls != k) continue;
      if (slice && comps[j].state != 0) continue;
      terms[nt++] = score[j];
    }
    if (nt > 0) out[k] = log_sum_exp(terms.head(nt)) - denom;
  }
  return out;
}

std::optional<double> GaussPosterior::log_class_density(const Vec& x, int cls) const {
  const auto& comps = fit_->comps();
  if (view_ == View::RetainSlice) {
    const auto idx = fit_->comp_of(cls, 0);
    if (!idx) return std::nullopt;
    return fit_->log_density(x, *idx);
  }
  Vec terms(static_cast<Eigen::Index>(comps.size()));
  Vec priors(static_cast<Eigen::Index>(comps.size()));
  Eigen::Index nt = 0;
  for (std::size_t j = 0; j < comps.size(); ++j) {
    if (comps[j].cls != cls) continue;
    terms[nt] = comps[j].log_prior + fit_->log_density(x, j);
    priors[nt] = comps[j].log_prior;
    ++nt;
  }
  if (nt == 0) return std::nullopt;
  // condition the cell weights on the class
  return log_sum_exp(terms.head(nt)) - log_sum_exp(priors.head(nt));
}

MixPosterior::MixPosterior(std::shared_ptr<const GaussFit> retain,
                           std::shared_ptr<const GaussFit> forget, std::vector<double> pi_f,
                           std::vector<double> log_class_prior)
    : retain_(std::move(retain)),
      forget_(std::move(forget)),
      pi_f_(std::move(pi_f)),
      log_prior_(std::move(log_class_prior)) {
  if (!retain_) throw std::invalid_argument("mix posterior: missing retain fit");
  const int c = retain_->num_classes();
  if (static_cast<int>(pi_f_.size()) != c || static_cast<int>(log_prior_.size()) != c)
    throw std::invalid_argument("mix posterior: per-class table length mismatch");
  for (int k = 0; k < c; ++k) {
    const double pi = pi_f_[k];
    if (!(pi >= 0.0 && pi <= 1.0))
      throw std::invalid_argument("mix posterior: forget fraction outside [0,1]");
    if (pi < 1.0 && !retain_->comp_of(k, -1))
      throw std::invalid_argument("insufficient data for proxy: class " + std::to_string(k) +
                                  " has retained mass but no retain fit");
    if (pi > 0.0 && (!forget_ || !forget_->comp_of(k, -1)))
      throw std::invalid_argument("insufficient data for proxy: class " + std::to_string(k) +
                                  " has forgotten mass but no forget fit");
  }
}

int MixPosterior::num_classes() const { return retain_->num_classes(); }

std::optional<double> MixPosterior::log_class_density(const Vec& x, int cls) const {
  if (cls < 0 || cls >= num_classes()) return std::nullopt;
  const double pi = pi_f_[cls];
  if (pi <= 0.0) return retain_->log_density(x, *retain_->comp_of(cls, -1));
  if (pi >= 1.0) return forget_->log_density(x, *forget_->comp_of(cls, -1));
  Vec terms(2);
  terms[0] = std::log1p(-pi) + retain_->log_density(x, *retain_->comp_of(cls, -1));
  terms[1] = std::log(pi) + forget_->log_density(x, *forget_->comp_of(cls, -1));
  return log_sum_exp(terms);
}

Vec MixPosterior::log_posterior(const Vec& x) const {
  if (x.size() != retain_->dim()) throw std::invalid_argument("posterior: input dim mismatch");
  const int c = num_classes();
  Vec s(c);
  for (int k = 0; k < c; ++k) s[k] = log_prior_[k] + *log_class_density(x, k);
  return log_softmax(s);
}

Vec ProxyPair::delta_m(const Vec& x, std::optional<SampleId> id) const {
  if (kind == ProxyKind::Dir2c)
    throw std::logic_error("dir-2c has no logit-shift form; evaluate it at the probit level");
  if (kind == ProxyKind::Dir) {
    Vec out = Vec::Zero(num_classes);
    if (id && members->forget.count(*id)) {
      const int y = members->label_of.at(*id);
      out[y] = -kInf;
    }
    return out;
  }
  const Vec lp = p_model->log_posterior(x);
  const Vec lr = pr_model->log_posterior(x);
  Vec out(num_classes);
  for (int k = 0; k < num_classes; ++k) {
    if (lp[k] == -kInf)
      throw NumericalError("proxy: full model assigns zero mass to class " + std::to_string(k));
    out[k] = lr[k] == -kInf ? -kInf : lr[k] - lp[k];
  }
  return out;
}

ProxyPair fit_proxy(ProxyKind kind, const LabeledDataset& ds, const ForgetSplit& split,
                    const ProxyOptions& opts) {
  ds.validate();
  if (!(opts.ridge >= 0.0)) throw std::invalid_argument("proxy: negative ridge");
  const auto n = ds.size();
  const int c = ds.num_classes;

  ProxyPair pair;
  pair.kind = kind;
  pair.num_classes = c;
  pair.opts = opts;
  pair.fitted_on = ds.fingerprint();

  if (is_dirac(kind)) {
    auto members = std::make_shared<EmpiricalProxy>();
    members->num_classes = c;
    members->count_d.assign(c, 0);
    members->count_r.assign(c, 0);
    members->count_f.assign(c, 0);
    for (std::size_t i = 0; i < n; ++i) {
      members->label_of.emplace(ds.id[i], ds.y[i]);
      ++members->count_d[ds.y[i]];
      if (split.is_forget(ds.id[i])) {
        members->forget.insert(ds.id[i]);
        ++members->count_f[ds.y[i]];
      } else {
        ++members->count_r[ds.y[i]];
      }
    }
    pair.members = std::move(members);
    return pair;
  }

  std::vector<int> plain(n, -1), state01(n, 0);
  std::vector<std::size_t> retain_rows, forget_rows;
  for (std::size_t i = 0; i < n; ++i) {
    if (split.is_forget(ds.id[i])) {
      state01[i] = 1;
      forget_rows.push_back(i);
    } else {
      retain_rows.push_back(i);
    }
  }
  auto take = [&](const std::vector<std::size_t>& rows, Mat& xs, std::vector<int>& ys) {
    xs.resize(static_cast<Eigen::Index>(rows.size()), ds.dim());
    ys.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      xs.row(static_cast<Eigen::Index>(i)) = ds.x.row(static_cast<Eigen::Index>(rows[i]));
      ys[i] = ds.y[rows[i]];
    }
  };
  Mat xr, xf;
  std::vector<int> yr, yf;
  take(retain_rows, xr, yr);
  take(forget_rows, xf, yf);
  if (retain_rows.empty())
    throw std::invalid_argument("insufficient data for proxy: empty retain set");

  const CovKind plain_ck =
      (kind == ProxyKind::Lda || kind == ProxyKind::LdaMix || kind == ProxyKind::Lda2c)
          ? CovKind::SharedFull
          : (opts.qda_full_cov ? CovKind::PerCompFull : CovKind::PerCompDiag);

  switch (kind) {
    case ProxyKind::Lda:
    case ProxyKind::Qda: {
      auto full = std::make_shared<GaussFit>(
          GaussFit::fit(ds.x, ds.y, plain, c, plain_ck, opts.ridge));
      std::vector<int> plain_r(retain_rows.size(), -1);
      auto ret = std::make_shared<GaussFit>(
          GaussFit::fit(xr, yr, plain_r, c, plain_ck, opts.ridge,
                        opts.shared_sigma_from_full ? full.get() : nullptr));
      pair.p_model = std::make_shared<GaussPosterior>(full, GaussPosterior::View::Marginal);
      pair.pr_model = std::make_shared<GaussPosterior>(ret, GaussPosterior::View::Marginal);
      break;
    }
    case ProxyKind::LdaMix:
    case ProxyKind::QdaMix: {
      std::vector<int> plain_r(retain_rows.size(), -1), plain_f(forget_rows.size(), -1);
      auto ret = std::make_shared<GaussFit>(
          GaussFit::fit(xr, yr, plain_r, c, plain_ck, opts.ridge));
      std::shared_ptr<GaussFit> fgt;
      if (!forget_rows.empty()) {
        // a single forget sample in a class is tolerated under a pooled
        // covariance; per-class covariances genuinely need two
        const std::optional<int> relax =
            kind == ProxyKind::LdaMix ? std::optional<int>(-1) : std::nullopt;
        fgt = std::make_shared<GaussFit>(
            GaussFit::fit(xf, yf, plain_f, c, plain_ck, opts.ridge, nullptr, relax));
      }
      std::vector<double> pi(c, 0.0), logprior(c, 0.0);
      std::vector<std::int64_t> nd(c, 0);
      for (std::size_t i = 0; i < n; ++i) ++nd[ds.y[i]];
      for (int k = 0; k < c; ++k) {
        pi[k] = split.pi_f_class.at(k);
        logprior[k] = std::log(static_cast<double>(nd[k]) / static_cast<double>(n));
      }
      pair.p_model = std::make_shared<MixPosterior>(ret, fgt, pi, logprior);
      pair.pr_model = std::make_shared<GaussPosterior>(ret, GaussPosterior::View::Marginal);
      break;
    }
    case ProxyKind::Lda2c: {
      auto both = std::make_shared<GaussFit>(
          GaussFit::fit(ds.x, ds.y, state01, c, CovKind::SharedFull, opts.ridge, nullptr,
                        std::optional<int>(1)));
      pair.p_model = std::make_shared<GaussPosterior>(both, GaussPosterior::View::Marginal);
      pair.pr_model = std::make_shared<GaussPosterior>(both, GaussPosterior::View::RetainSlice);
      break;
    }
    default:
      throw std::logic_error("unreachable proxy kind in fit");
  }
  return pair;
}

namespace {

const GaussPosterior* as_gauss(const PosteriorModel* m) {
  return dynamic_cast<const GaussPosterior*>(m);
}
const MixPosterior* as_mix(const PosteriorModel* m) {
  return dynamic_cast<const MixPosterior*>(m);
}

}  // namespace

void save_proxy(const ProxyPair& pair, const std::string& path) {
  std::ostringstream out;
  out << "proxypair v1\n";
  out << "kind " << to_string(pair.kind) << '\n';
  out << "classes " << pair.num_classes << '\n';
  out << "ridge " << fmt_g17(pair.opts.ridge) << '\n';
  out << "shared_sigma_from_full " << (pair.opts.shared_sigma_from_full ? 1 : 0) << '\n';
  out << "qda_full_cov " << (pair.opts.qda_full_cov ? 1 : 0) << '\n';
  out << "fitted_on " << pair.fitted_on << '\n';
  if (pair.dirac()) {
    const auto& m = *pair.members;
    out << "members " << m.label_of.size() << '\n';
    std::vector<SampleId> ids;
    ids.reserve(m.label_of.size());
    for (const auto& [sid, lbl] : m.label_of) ids.push_back(sid);
    std::sort(ids.begin(), ids.end());
    for (SampleId sid : ids)
      out << sid << ' ' << m.label_of.at(sid) << ' ' << (m.forget.count(sid) ? 1 : 0) << '\n';
  } else if (pair.kind == ProxyKind::Lda2c) {
    out << "paired2c\n";
    as_gauss(pair.p_model.get())->fit().write(out);
  } else if (pair.kind == ProxyKind::LdaMix || pair.kind == ProxyKind::QdaMix) {
    const auto* mix = as_mix(pair.p_model.get());
    out << "mix\n";
    for (int k = 0; k < pair.num_classes; ++k)
      out << (k ? " " : "") << fmt_g17(mix->pi_f()[k]);
    out << '\n';
    for (int k = 0; k < pair.num_classes; ++k)
      out << (k ? " " : "") << fmt_g17(mix->log_class_prior()[k]);
    out << '\n';
    out << "retain\n";
    mix->retain_fit().write(out);
    out << "forget " << (mix->forget_fit() ? 1 : 0) << '\n';
    if (mix->forget_fit()) mix->forget_fit()->write(out);
  } else {
    out << "pairgauss\n";
    as_gauss(pair.p_model.get())->fit().write(out);
    as_gauss(pair.pr_model.get())->fit().write(out);
  }
  out << "end\n";
  atomic_write(path, out.str());
}

ProxyPair load_proxy(const std::string& path) {
  std::istringstream in(read_file(path));
  expect_token(in, "proxypair", "header");
  expect_token(in, "v1", "header");
  ProxyPair pair;
  std::string kind_s, token;
  expect_token(in, "kind", "header");
  in >> kind_s;
  pair.kind = proxy_kind_from_string(kind_s);
  expect_token(in, "classes", "header");
  in >> pair.num_classes;
  expect_token(in, "ridge", "header");
  in >> pair.opts.ridge;
  int flag = 0;
  expect_token(in, "shared_sigma_from_full", "header");
  in >> flag;
  pair.opts.shared_sigma_from_full = flag != 0;
  expect_token(in, "qda_full_cov", "header");
  in >> flag;
  pair.opts.qda_full_cov = flag != 0;
  expect_token(in, "fitted_on", "header");
  in >> pair.fitted_on;
  if (!in) throw std::invalid_argument("proxy file: truncated header");

  if (pair.dirac()) {
    expect_token(in, "members", "payload");
    std::size_t m = 0;
    in >> m;
    auto members = std::make_shared<EmpiricalProxy>();
    members->num_classes = pair.num_classes;
    members->count_d.assign(pair.num_classes, 0);
    members->count_r.assign(pair.num_classes, 0);
    members->count_f.assign(pair.num_classes, 0);
    for (std::size_t i = 0; i < m; ++i) {
      SampleId sid;
      int lbl = 0, fg = 0;
      if (!(in >> sid >> lbl >> fg))
        throw std::invalid_argument("proxy file: truncated membership row");
      members->label_of.emplace(sid, lbl);
      ++members->count_d[lbl];
      if (fg) {
        members->forget.insert(sid);
        ++members->count_f[lbl];
      } else {
        ++members->count_r[lbl];
      }
    }
    pair.members = std::move(members);
  } else if (pair.kind == ProxyKind::Lda2c) {
    expect_token(in, "paired2c", "payload");
    auto both = std::make_shared<GaussFit>(GaussFit::read(in));
    pair.p_model = std::make_shared<GaussPosterior>(both, GaussPosterior::View::Marginal);
    pair.pr_model = std::make_shared<GaussPosterior>(both, GaussPosterior::View::RetainSlice);
  } else if (pair.kind == ProxyKind::LdaMix || pair.kind == ProxyKind::QdaMix) {
    expect_token(in, "mix", "payload");
    std::vector<double> pi(pair.num_classes), logprior(pair.num_classes);
    for (int k = 0; k < pair.num_classes; ++k) in >> pi[k];
    for (int k = 0; k < pair.num_classes; ++k) in >> logprior[k];
    expect_token(in, "retain", "payload");
    auto ret = std::make_shared<GaussFit>(GaussFit::read(in));
    expect_token(in, "forget", "payload");
    in >> flag;
    std::shared_ptr<GaussFit> fgt;
    if (flag) fgt = std::make_shared<GaussFit>(GaussFit::read(in));
    pair.p_model = std::make_shared<MixPosterior>(ret, fgt, pi, logprior);
    pair.pr_model = std::make_shared<GaussPosterior>(ret, GaussPosterior::View::Marginal);
  } else {
    expect_token(in, "pairgauss", "payload");
    auto full = std::make_shared<GaussFit>(GaussFit::read(in));
    auto ret = std::make_shared<GaussFit>(GaussFit::read(in));
    pair.p_model = std::make_shared<GaussPosterior>(full, GaussPosterior::View::Marginal);
    pair.pr_model = std::make_shared<GaussPosterior>(ret, GaussPosterior::View::Marginal);
  }
  expect_token(in, "end", "trailer");
  return pair;
}

Vec dirac_target(const Vec& p_base, int y) {
  if (!is_prob_vec(p_base))
    throw std::invalid_argument("dirac target: base is not a probability vector");
  if (y < 0 || y >= p_base.size())
    throw std::invalid_argument("dirac target: label out of range");
  const double denom = 1.0 - p_base[y];
  if (!(denom > 0.0))
    throw NumericalError("undefined renormalization: base probit is a point mass at the label");
  Vec out = p_base / denom;
  out[y] = 0.0;
  return out;
}

Vec dirac_target_2c(const Vec& p_base, int y, std::int64_t n_retain, std::int64_t n_forget) {
  if (n_retain < 0 || n_forget < 0 || n_retain + n_forget == 0)
    throw std::invalid_argument("dirac target: bad class counts");
  if (n_forget == 0) return p_base;
  if (n_retain == 0) return dirac_target(p_base, y);
  const double total = static_cast<double>(n_retain + n_forget);
  const double wr = static_cast<double>(n_retain) / total;
  const double wf = static_cast<double>(n_forget) / total;
  return wr * p_base + wf * dirac_target(p_base, y);
}

double gauss_kl_same_mean(const Mat& cov_k, const Mat& cov) {
  if (cov_k.rows() != cov_k.cols() || cov.rows() != cov.cols() || cov_k.rows() != cov.rows())
    throw std::invalid_argument("gauss kl: shape mismatch");
  const auto d = cov.rows();
  Eigen::LLT<Mat> llt(cov), llt_k(cov_k);
  if (llt.info() != Eigen::Success || llt_k.info() != Eigen::Success)
    throw NumericalError("gauss kl: covariance not positive definite");
  const double logdet = 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
  const double logdet_k = 2.0 * Mat(llt_k.matrixL()).diagonal().array().log().sum();
  const double tr = llt.solve(cov_k).trace();
  return 0.5 * (logdet - logdet_k + tr - static_cast<double>(d));
}

double homoscedastic_cost(const GaussFit& per_class, const GaussFit& pooled,
                          const std::vector<double>& class_priors) {
  if (pooled.cov_kind() != CovKind::SharedFull && pooled.cov_kind() != CovKind::SharedDiag)
    throw std::invalid_argument("homoscedastic cost: second model must pool its covariance");
  if (per_class.dim() != pooled.dim())
    throw std::invalid_argument("homoscedastic cost: dim mismatch");
  double psum = 0.0;
  for (double p : class_priors) {
    if (p < 0.0) throw std::invalid_argument("homoscedastic cost: negative prior");
    psum += p;
  }
  if (std::abs(psum - 1.0) > 1e-6)
    throw std::invalid_argument("homoscedastic cost: priors do not sum to 1");
  const Mat s = pooled.cov_dense(0);
  double cost = 0.0;
  for (std::size_t i = 0; i < per_class.comps().size(); ++i) {
    const int cls = per_class.comps()[i].cls;
    if (cls < 0 || cls >= static_cast<int>(class_priors.size()))
      throw std::invalid_argument("homoscedastic cost: prior table too short");
    cost += class_priors[cls] * gauss_kl_same_mean(per_class.cov_dense(i), s);
  }
  return cost;
}

}  // namespace pul
