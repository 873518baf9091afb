#include "pul/metrics.hpp"

#include <cmath>

namespace pul {

std::int64_t stein_queries(double alpha, double kl) {
  if (!(alpha > 0.0 && alpha < 0.5))
    throw std::invalid_argument("attacker bound: alpha must lie in (0, 0.5)");
  if (!(kl >= 0.0)) throw std::invalid_argument("attacker bound: negative divergence");
  if (kl == 0.0)
    throw NumericalError("attacker bound: models are indistinguishable, unbounded queries");
  const double bound = (1.0 - 2.0 * alpha) * std::log((1.0 - alpha) / alpha) / kl;
  const double n = std::ceil(bound);
  return n < 1.0 ? 1 : static_cast<std::int64_t>(n);
}

double kl_to_reference(const ProbitFn& reference, const ProbitFn& candidate,
                       const LabeledDataset& subset) {
  if (subset.size() == 0) throw std::invalid_argument("kl to reference: empty subset");
  return mean_over(subset.size(), [&](std::size_t i) {
    const Vec x = subset.x.row(static_cast<Eigen::Index>(i)).transpose();
    const Vec p = reference(x, subset.id[i]);
    const Vec q = candidate(x, subset.id[i]);
    return kl_categorical(p, q);
  });
}

double net_accuracy(const MlpModel& m, const LabeledDataset& subset) {
  if (subset.size() == 0) throw std::invalid_argument("accuracy: empty subset");
  const Mat logits = m.forward_batch(subset.x);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    Eigen::Index arg = 0;
    logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
    if (static_cast<int>(arg) == subset.y[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(subset.size());
}

ProbitFn net_probits(const MlpModel& m) {
  return [&m](const Vec& x, std::optional<SampleId>) { return softmax(m.forward(x)); };
}

}  // namespace pul
