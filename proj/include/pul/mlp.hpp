#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pul/simplex.hpp"

namespace pul {

// Fully connected net: rectifier on hidden layers, identity on the output
// layer, so forward() yields logits.
struct MlpModel {
  std::vector<int> dims;  // input, hidden sizes..., classes
  std::vector<Mat> w;     // w[l] maps dims[l] -> dims[l+1], shape out x in
  std::vector<Vec> b;

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)] on weights and biases, drawn
  // row by row then bias, layer by layer, from a single seeded stream.
  static MlpModel init(const std::vector<int>& dims, std::uint64_t seed);

  int input_dim() const { return dims.front(); }
  int num_classes() const { return dims.back(); }
  std::size_t layers() const { return w.size(); }
  std::size_t param_count() const;

  Vec forward(const Vec& x) const;        // logits for one point
  Mat forward_batch(const Mat& x) const;  // row-wise logits, n x C

  void validate() const;
};

// short architecture names used across configs and result files:
// "linear", "mlp1" (one hidden layer), "mlp2" (two hidden layers)
std::vector<int> arch_dims(const std::string& arch, int input_dim, int num_classes,
                           int hidden = 32);
// "linear" stays "linear"; every hidden-layer net files under "mlp"
std::string arch_kind(const std::string& arch);

void save_model(const MlpModel& m, const std::string& path);
MlpModel load_model(const std::string& path);

}  // namespace pul
