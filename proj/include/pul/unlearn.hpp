#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pul/dataset.hpp"
#include "pul/gaussmix.hpp"
#include "pul/proxy.hpp"
#include "pul/simplex.hpp"

namespace pul {

// logits of the classifier under scrutiny; the id lets membership proxies
// recognize training rows, pass nullopt for off-dataset points
using LogitFn = std::function<Vec(const Vec& x, std::optional<SampleId> id)>;

// f + eta * dm entrywise, with the conventions that eta = 0 returns the base
// bit-exactly and a -inf shift forces the logit to -inf for any eta > 0
Vec shifted_logits(const Vec& base, const Vec& dm, double eta);

// probits of the scaled unlearned model at one point. Gaussian and plain
// membership pairs go through the logit shift; the count-blend membership
// pair has no logit form and blends at the probit level (eta ignored except
// that eta = 0 keeps the base probits).
Vec unlearned_probits(const Vec& base_logits, const ProxyPair& pair, const Vec& x,
                      std::optional<SampleId> id, double eta);

// per-row pieces of the normalization-shift curve, cached once so that the
// line search only pays one LSE per row per probe
struct EtaCurve {
  Mat base;  // n x C base logits
  Mat dm;    // n x C unlearning signal, -inf entries allowed
  Vec lse0;  // per-row LSE of the base logits
  std::size_t rows() const { return static_cast<std::size_t>(base.rows()); }
};

EtaCurve make_eta_curve(const LogitFn& logits, const ProxyPair& pair, const LabeledDataset& ds);

// mean normalization shift h(eta): average over rows of
// LSE(f + eta*dm) - LSE(f). h(0) = 0 exactly.
double h_empirical(const EtaCurve& curve, double eta);
double h_empirical(const LogitFn& logits, const ProxyPair& pair, const LabeledDataset& ds,
                   double eta);

struct EtaSearchResult {
  double eta_max = 0.0;
  bool admissible = false;  // empirical slope of h at 0 is negative
  // "none" when inadmissible, "interior" for a bracketed root,
  // "capped-at-1" when h stays negative over all of (0, 1]
  std::string zero_bracket = "none";
  double slope0 = 0.0;    // forward difference h(delta)/delta at delta = 1e-4
  double h_at_eta = 0.0;  // h evaluated at the returned eta_max
  std::vector<std::pair<double, double>> h_samples;  // every (eta, h) probed, (0, 0) first
  int iterations = 0;
};

// Root of h on (0, 1]. The slope test uses a fixed forward difference step
// of 1e-4; a non-negative slope reports inadmissible with eta_max = 0. The
// returned eta_max sits on the negative side of the root and is refined
// until the bracket is narrower than tol and |h(eta_max)| <= tol, so
// h(eta_max) lies in [-tol, 0].
EtaSearchResult find_eta_max(const std::function<double(double)>& h, double tol = 1e-4);
EtaSearchResult find_eta_max(const EtaCurve& curve, double tol = 1e-4);
EtaSearchResult find_eta_max(const LogitFn& logits, const ProxyPair& pair,
                             const LabeledDataset& ds, double tol = 1e-4);

struct AdmissibilityReport {
  double kl_to_retain = 0.0;  // E[KL(p_theta || retain posterior)], +inf allowed
  double kl_to_full = 0.0;    // E[KL(p_theta || full posterior)]
  double gap = 0.0;           // kl_to_retain - kl_to_full
  bool holds = false;         // gap >= 0
  // rows where the retain posterior forbids a class the net gives mass to;
  // each such row contributes +inf to kl_to_retain
  std::size_t support_violations = 0;
};

// The full-posterior side must be absolutely continuous w.r.t. the net (it
// is fitted on all of D); a violation there aborts with a NumericalError
// naming the first offending row. Membership pairs carry no posterior
// densities and are rejected.
AdmissibilityReport check_admissibility(const LogitFn& logits, const ProxyPair& pair,
                                        const LabeledDataset& ds);

// Every term of the divergence bounds and of the exact decomposition that is
// computable from (reference, net, pair, rows). All expectations are plain
// means over the rows of the dataset handed in; pass the retain set to
// reproduce the guarantees, which average under the retained distribution.
struct BoundReport {
  double eta = 0.0;
  double kl_ref_to_unlearned = 0.0;  // E[KL(ref || p~_eta)], the bounded quantity
  double kl_ref_to_initial = 0.0;    // E[KL(ref || p_theta)]

  // scaled-mixture bound terms; the net plays the role of the initial
  // distribution, so initial_divergence repeats kl_ref_to_initial
  double initial_divergence = 0.0;
  double modeling_shift = 0.0;  // E[KL(ref || P_r)] - E[KL(p_theta || P)]
  double bound_rhs = 0.0;       // (1 - eta) * initial_divergence + eta * modeling_shift
  double residual = 0.0;        // kl_ref_to_unlearned - bound_rhs, the unnamed remainder

  // feature-space bound terms, computable only against a ground-truth
  // mixture; NaN when no truth is supplied or the pair has no densities
  double kl_xy_r = 0.0;     // E[log truth_r(x|y) - log P_r(x|y)] over rows
  double kl_xy_init = 0.0;  // E[log truth(x|y) - log P(x|y)] over rows

  // exact decomposition terms
  double delta_gamma_mean = 0.0;  // E[LSE(f + eta*dm) - LSE(f)]
  double admissible_gap = 0.0;    // E[KL(ref || P_r)] - E[KL(ref || P)]
  double identity_residual = 0.0; // LHS - (initial + delta_gamma + eta * gap), ~0

  std::size_t support_violations = 0;  // rows with a +inf KL term
};

BoundReport bound_report(const PosteriorModel& reference, const LogitFn& logits,
                         const ProxyPair& pair, const LabeledDataset& ds, double eta,
                         const TrueModel* truth = nullptr);

std::string bound_report_json(const BoundReport& r);

}  // namespace pul
