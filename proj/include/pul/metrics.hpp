#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "pul/dataset.hpp"
#include "pul/mlp.hpp"
#include "pul/simplex.hpp"

namespace pul {

// probability vector a model assigns at a point; ids let membership-based
// models recognize training rows
using ProbitFn = std::function<Vec(const Vec& x, std::optional<SampleId> id)>;

// Minimum number of label queries an attacker needs to tell the unlearned
// model from the retrained one at false-positive rate alpha, given the mean
// divergence between the two. Ceiling of (1-2a) ln((1-a)/a) / kl, floored at
// one query. kl = 0 means the models are indistinguishable and no query
// count suffices.
std::int64_t stein_queries(double alpha, double kl);

// mean over the subset of KL(reference(x) || candidate(x))
double kl_to_reference(const ProbitFn& reference, const ProbitFn& candidate,
                       const LabeledDataset& subset);

double net_accuracy(const MlpModel& m, const LabeledDataset& subset);

// probits of a net as a reusable functor; the model must outlive it
ProbitFn net_probits(const MlpModel& m);

struct MetricsReport {
  double kl_t = 0.0, kl_f = 0.0, kl_last = 0.0;  // nats
  double acc_t = 0.0, acc_f = 0.0;               // fractions
  double rte_seconds = 0.0;
  double rte_normalized = 0.0;  // rte_seconds / same-seed retrain seconds
  std::map<double, std::int64_t> n_alpha;  // attacker query counts per alpha
};

}  // namespace pul
