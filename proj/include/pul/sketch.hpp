#pragma once

#include <cstdint>

#include "pul/dataset.hpp"

namespace pul {

// Rows form a semi-orthogonal k x d map: omega * omega^T = I_k.
struct SketchOperator {
  Mat omega;
  int in_dim() const { return static_cast<int>(omega.cols()); }
  int out_dim() const { return static_cast<int>(omega.rows()); }
};

// orthogonal factor of a seeded Gaussian matrix via QR; requires k <= d
SketchOperator make_sketch(int d, int k, std::uint64_t seed);

Mat apply_sketch(const SketchOperator& s, const Mat& x);
LabeledDataset apply_sketch(const SketchOperator& s, const LabeledDataset& ds);

}  // namespace pul
