#pragma once

#include <optional>

#include "pul/simplex.hpp"

namespace pul {

// A conditional class model P(y|x). Log-posterior entries are finite or
// exactly -inf (a class with zero prior mass), never nan.
class PosteriorModel {
 public:
  virtual ~PosteriorModel() = default;
  virtual int num_classes() const = 0;
  virtual Vec log_posterior(const Vec& x) const = 0;

  // log class-conditional density log P(x|y) where one exists; nullopt for
  // classes without density (zero-mass classes, membership models)
  virtual std::optional<double> log_class_density(const Vec& x, int cls) const = 0;
};

inline Vec posterior(const PosteriorModel& m, const Vec& x) {
  return softmax(m.log_posterior(x));
}

}  // namespace pul
