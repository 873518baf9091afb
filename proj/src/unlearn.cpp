#include "pul/unlearn.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include <nlohmann/json.hpp>

namespace pul {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kSlopeStep = 1e-4;  // forward difference step for h'(0)

// KL between two categorical laws given in log space. Entries where p has no
// mass contribute nothing; mass of p on a class q forbids makes the KL +inf
// and raises the violation flag.
double kl_logp_logq(const Vec& lp, const Vec& lq, bool& violated) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < lp.size(); ++c) {
    if (lp[c] == -kInf) continue;
    if (lq[c] == -kInf) {
      violated = true;
      return kInf;
    }
    s += std::exp(lp[c]) * (lp[c] - lq[c]);
  }
  return s > 0.0 ? s : 0.0;
}
}  // namespace

Vec shifted_logits(const Vec& base, const Vec& dm, double eta) {
  if (base.size() != dm.size())
    throw std::invalid_argument("shifted logits: length mismatch");
  if (eta == 0.0) return base;
  Vec out(base.size());
  for (Eigen::Index c = 0; c < base.size(); ++c) {
    if (dm[c] == 0.0)
      out[c] = base[c];
    else if (dm[c] == -kInf)
      out[c] = -kInf;
    else
      out[c] = base[c] + eta * dm[c];
  }
  return out;
}

Vec unlearned_probits(const Vec& base_logits, const ProxyPair& pair, const Vec& x,
                      std::optional<SampleId> id, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0))
    throw std::invalid_argument("unlearned model: eta outside [0, 1]");
  if (eta == 0.0) return softmax(base_logits);
  if (pair.kind == ProxyKind::Dir2c) {
    if (id && pair.members->forget.count(*id)) {
      const int y = pair.members->label_of.at(*id);
      return dirac_target_2c(softmax(base_logits), y, pair.members->count_r[y],
                             pair.members->count_f[y]);
    }
    return softmax(base_logits);
  }
  return softmax(shifted_logits(base_logits, pair.delta_m(x, id), eta));
}

EtaCurve make_eta_curve(const LogitFn& logits, const ProxyPair& pair, const LabeledDataset& ds) {
  ds.validate();
  if (pair.num_classes != ds.num_classes)
    throw std::invalid_argument("eta curve: proxy and dataset class counts differ");
  const auto n = static_cast<Eigen::Index>(ds.size());
  const int c = ds.num_classes;
  EtaCurve curve;
  curve.base.resize(n, c);
  curve.dm.resize(n, c);
  curve.lse0.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec x = ds.x.row(i).transpose();
    const Vec f = logits(x, ds.id[static_cast<std::size_t>(i)]);
    if (f.size() != c) throw std::invalid_argument("eta curve: logit length mismatch");
    curve.base.row(i) = f.transpose();
    curve.dm.row(i) = pair.delta_m(x, ds.id[static_cast<std::size_t>(i)]).transpose();
    curve.lse0[i] = log_sum_exp(f);
  }
  return curve;
}

double h_empirical(const EtaCurve& curve, double eta) {
  if (!(eta >= 0.0)) throw std::invalid_argument("h: eta must be >= 0");
  if (curve.rows() == 0) throw std::invalid_argument("h: empty dataset");
  if (eta == 0.0) return 0.0;
  return mean_over(curve.rows(), [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Vec s = shifted_logits(curve.base.row(r).transpose(), curve.dm.row(r).transpose(), eta);
    return log_sum_exp(s) - curve.lse0[r];
  });
}

double h_empirical(const LogitFn& logits, const ProxyPair& pair, const LabeledDataset& ds,
                   double eta) {
  return h_empirical(make_eta_curve(logits, pair, ds), eta);
}

EtaSearchResult find_eta_max(const std::function<double(double)>& h, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("eta search: tol must be positive");
  EtaSearchResult res;
  res.h_samples.emplace_back(0.0, h(0.0));

  const double hd = h(kSlopeStep);
  res.h_samples.emplace_back(kSlopeStep, hd);
  res.slope0 = hd / kSlopeStep;
  if (!(res.slope0 < 0.0)) {
    res.admissible = false;
    res.eta_max = 0.0;
    res.zero_bracket = "none";
    return res;
  }
  res.admissible = true;

  // bracket a sign change by doubling from tol, capped at 1
  double lo = 0.0, h_lo = 0.0, hi = 1.0;
  bool bracketed = false;
  for (double eta = std::min(tol, 1.0);; eta = std::min(2.0 * eta, 1.0)) {
    const double he = h(eta);
    res.h_samples.emplace_back(eta, he);
    ++res.iterations;
    if (he < 0.0) {
      lo = eta;
      h_lo = he;
      if (eta >= 1.0) {
        res.eta_max = 1.0;
        res.h_at_eta = he;
        res.zero_bracket = "capped-at-1";
        return res;
      }
    } else {
      hi = eta;
      bracketed = true;
      break;
    }
  }
  (void)bracketed;

  // keep the negative side; stop once the bracket is narrow and h at the
  // returned point is itself within tol of zero
  while ((hi - lo) >= tol || h_lo < -tol) {
    if (++res.iterations > 200) break;
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;  // double resolution exhausted
    const double hm = h(mid);
    res.h_samples.emplace_back(mid, hm);
    if (hm < 0.0) {
      lo = mid;
      h_lo = hm;
    } else {
      hi = mid;
    }
  }
  res.eta_max = lo;
  res.h_at_eta = h_lo;
  res.zero_bracket = "interior";
  return res;
}

EtaSearchResult find_eta_max(const EtaCurve& curve, double tol) {
  return find_eta_max([&](double eta) { return h_empirical(curve, eta); }, tol);
}

EtaSearchResult find_eta_max(const LogitFn& logits, const ProxyPair& pair,
                             const LabeledDataset& ds, double tol) {
  return find_eta_max(make_eta_curve(logits, pair, ds), tol);
}

AdmissibilityReport check_admissibility(const LogitFn& logits, const ProxyPair& pair,
                                        const LabeledDataset& ds) {
  if (pair.dirac())
    throw std::invalid_argument(
        "admissibility needs posterior proxies; membership pairs carry none");
  ds.validate();
  const auto n = ds.size();
  std::vector<double> to_retain(n), to_full(n);
  AdmissibilityReport rep;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec x = ds.x.row(static_cast<Eigen::Index>(i)).transpose();
    const Vec lp = log_softmax(logits(x, ds.id[i]));
    bool viol_r = false, viol_p = false;
    to_retain[i] = kl_logp_logq(lp, pair.pr_model->log_posterior(x), viol_r);
    to_full[i] = kl_logp_logq(lp, pair.p_model->log_posterior(x), viol_p);
    if (viol_r) ++rep.support_violations;
    if (viol_p)
      throw NumericalError("admissibility: full proxy forbids a class the net uses at row id=" +
                           std::to_string(ds.id[i]));
  }
  rep.kl_to_retain = pairwise_mean(to_retain);
  rep.kl_to_full = pairwise_mean(to_full);
  rep.gap = rep.kl_to_retain - rep.kl_to_full;
  rep.holds = rep.gap >= 0.0;
  return rep;
}

BoundReport bound_report(const PosteriorModel& reference, const LogitFn& logits,
                         const ProxyPair& pair, const LabeledDataset& ds, double eta,
                         const TrueModel* truth) {
  if (!(eta >= 0.0 && eta <= 1.0))
    throw std::invalid_argument("bound report: eta outside [0, 1]");
  ds.validate();
  if (reference.num_classes() != ds.num_classes)
    throw std::invalid_argument("bound report: reference class count mismatch");
  const auto n = ds.size();
  const bool gaussian = !pair.dirac();
  const bool has_dm = pair.kind != ProxyKind::Dir2c;  // dir-2c has no logit shift
  const bool with_truth = truth != nullptr && gaussian;

  std::vector<double> v_lhs(n), v_init(n), v_dg(n, kNan);
  std::vector<double> v_ref_pr(n, kNan), v_ref_p(n, kNan), v_net_p(n, kNan);
  std::vector<double> v_xyr(n, kNan), v_xyi(n, kNan);

  BoundReport rep;
  rep.eta = eta;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec x = ds.x.row(static_cast<Eigen::Index>(i)).transpose();
    const auto id = ds.id[i];
    const int y = ds.y[i];
    const Vec base = logits(x, id);
    const Vec lref = reference.log_posterior(x);
    const Vec lp_theta = log_softmax(base);
    bool viol = false;

    Vec lp_tilde;
    if (has_dm) {
      const Vec shifted = shifted_logits(base, pair.delta_m(x, id), eta);
      lp_tilde = log_softmax(shifted);
      v_dg[i] = log_sum_exp(shifted) - log_sum_exp(base);
    } else {
      lp_tilde = unlearned_probits(base, pair, x, id, eta).array().log().matrix();
    }
    v_lhs[i] = kl_logp_logq(lref, lp_tilde, viol);
    v_init[i] = kl_logp_logq(lref, lp_theta, viol);

    if (gaussian) {
      const Vec l_pr = pair.pr_model->log_posterior(x);
      const Vec l_p = pair.p_model->log_posterior(x);
      v_ref_pr[i] = kl_logp_logq(lref, l_pr, viol);
      v_ref_p[i] = kl_logp_logq(lref, l_p, viol);
      v_net_p[i] = kl_logp_logq(lp_theta, l_p, viol);
      if (with_truth) {
        const double t_r = truth->log_density_r(x, y);
        const auto q_r = pair.pr_model->log_class_density(x, y);
        if (q_r && t_r != -kInf) v_xyr[i] = t_r - *q_r;
        const auto q_p = pair.p_model->log_class_density(x, y);
        if (q_p) v_xyi[i] = truth->log_density(x, y) - *q_p;
      }
    }
    if (viol) ++rep.support_violations;
  }

  rep.kl_ref_to_unlearned = pairwise_mean(v_lhs);
  rep.kl_ref_to_initial = pairwise_mean(v_init);
  rep.initial_divergence = rep.kl_ref_to_initial;
  rep.delta_gamma_mean = has_dm ? pairwise_mean(v_dg) : kNan;
  if (gaussian) {
    const double ref_pr = pairwise_mean(v_ref_pr);
    const double ref_p = pairwise_mean(v_ref_p);
    rep.modeling_shift = ref_pr - pairwise_mean(v_net_p);
    rep.admissible_gap = ref_pr - ref_p;
  } else {
    rep.modeling_shift = kNan;
    rep.admissible_gap = kNan;
  }
  rep.bound_rhs = (1.0 - eta) * rep.initial_divergence + eta * rep.modeling_shift;
  rep.residual = rep.kl_ref_to_unlearned - rep.bound_rhs;
  rep.kl_xy_r = with_truth ? pairwise_mean(v_xyr) : kNan;
  rep.kl_xy_init = with_truth ? pairwise_mean(v_xyi) : kNan;
  rep.identity_residual =
      rep.kl_ref_to_unlearned -
      (rep.kl_ref_to_initial + rep.delta_gamma_mean + eta * rep.admissible_gap);
  return rep;
}

std::string bound_report_json(const BoundReport& r) {
  nlohmann::json j;
  j["eta"] = r.eta;
  j["kl_ref_to_unlearned"] = r.kl_ref_to_unlearned;
  j["kl_ref_to_initial"] = r.kl_ref_to_initial;
  j["initial_divergence"] = r.initial_divergence;
  j["modeling_shift"] = r.modeling_shift;
  j["bound_rhs"] = r.bound_rhs;
  j["residual"] = r.residual;
  j["kl_xy_r"] = r.kl_xy_r;
  j["kl_xy_init"] = r.kl_xy_init;
  j["delta_gamma_mean"] = r.delta_gamma_mean;
  j["admissible_gap"] = r.admissible_gap;
  j["identity_residual"] = r.identity_residual;
  j["support_violations"] = r.support_violations;
  return j.dump(2) + "\n";
}

}  // namespace pul
