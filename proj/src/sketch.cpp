#include "pul/sketch.hpp"

#include "pul/rng.hpp"

namespace pul {

SketchOperator make_sketch(int d, int k, std::uint64_t seed) {
  if (d < 1 || k < 1) throw std::invalid_argument("sketch: dims must be positive");
  if (k > d) throw std::invalid_argument("sketch: k exceeds d");
  Rng rng(seed);
  Mat g(d, k);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < k; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(d, k);
  const Mat r = qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  // pin the sign convention so the factor is unique
  for (int j = 0; j < k; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  SketchOperator s{q.transpose()};
  const double err = (s.omega * s.omega.transpose() - Mat::Identity(k, k)).cwiseAbs().maxCoeff();
  if (!(err < 1e-8)) throw NumericalError("sketch: QR factor lost orthogonality");
  return s;
}

Mat apply_sketch(const SketchOperator& s, const Mat& x) {
  if (x.cols() != s.omega.cols())
    throw std::invalid_argument("sketch: input dim mismatch");
  return x * s.omega.transpose();
}

LabeledDataset apply_sketch(const SketchOperator& s, const LabeledDataset& ds) {
  LabeledDataset out = ds;
  out.x = apply_sketch(s, ds.x);
  return out;
}

}  // namespace pul
