#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <vector>

namespace pul {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Numerical degeneracy (singular covariances, degenerate logits, diverged
// training). The CLI maps this to exit code 2; plain input errors use
// std::invalid_argument and map to exit code 1.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// log(sum_i exp(z_i)) with max subtraction. -inf entries are legal and drop
// out; all entries -inf, any nan, or any +inf is an error.
double log_sum_exp(const Vec& z);

// exp(z_i - lse(z)); a -inf logit maps to an exact zero, no clamping
Vec softmax(const Vec& z);

// z - lse(z) * 1, keeps -inf entries
Vec log_softmax(const Vec& z);

// KL(p || q) in nats with the 0 log 0 = 0 convention. Requires supp(p)
// within supp(q).
double kl_categorical(const Vec& p, const Vec& q);

// -sum p log p in nats
double entropy(const Vec& p);

bool is_prob_vec(const Vec& p, double tol = 1e-9);

// fixed-tree pairwise reduction, bit-stable for a given input order
double pairwise_sum(const double* x, std::size_t n);
double pairwise_sum(const std::vector<double>& x);
double pairwise_mean(const std::vector<double>& x);

// mean of f(i) over i in [0, n), deterministic iteration order
double mean_over(std::size_t n, const std::function<double(std::size_t)>& f);

}  // namespace pul
