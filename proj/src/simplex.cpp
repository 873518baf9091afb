#include "pul/simplex.hpp"

#include <cmath>
#include <limits>

namespace pul {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double log_sum_exp(const Vec& z) {
  if (z.size() == 0) throw std::invalid_argument("log_sum_exp: empty vector");
  double m = -kInf;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double v = z[i];
    if (std::isnan(v) || v == kInf)
      throw NumericalError("degenerate logits: nan or +inf entry");
    if (v > m) m = v;
  }
  if (m == -kInf) throw NumericalError("degenerate logits: all entries -inf");
  double s = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) s += std::exp(z[i] - m);
  return m + std::log(s);
}

Vec softmax(const Vec& z) {
  const double l = log_sum_exp(z);
  Vec p(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) p[i] = std::exp(z[i] - l);
  return p;
}

Vec log_softmax(const Vec& z) {
  const double l = log_sum_exp(z);
  Vec out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) out[i] = z[i] - l;
  return out;
}

bool is_prob_vec(const Vec& p, double tol) {
  if (p.size() == 0) return false;
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double v = p[i];
    if (std::isnan(v) || v < -tol || v > 1.0 + tol) return false;
    s += v;
  }
  return std::abs(s - 1.0) <= std::max(tol, 1e-9);
}

double kl_categorical(const Vec& p, const Vec& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("kl_categorical: length mismatch");
  if (!is_prob_vec(p) || !is_prob_vec(q))
    throw std::invalid_argument("kl_categorical: inputs are not probability vectors");
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pi = p[i];
    if (pi <= 0.0) continue;  // 0 log 0 = 0
    const double qi = q[i];
    if (qi <= 0.0)
      throw NumericalError("absolute-continuity violated: p has mass at component " +
                           std::to_string(i) + " where q is zero");
    s += pi * (std::log(pi) - std::log(qi));
  }
  return s > 0.0 ? s : 0.0;
}

double entropy(const Vec& p) {
  if (!is_prob_vec(p))
    throw std::invalid_argument("entropy: input is not a probability vector");
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pi = p[i];
    if (pi > 0.0) s -= pi * std::log(pi);
  }
  return s > 0.0 ? s : 0.0;
}

double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

double pairwise_sum(const std::vector<double>& x) {
  return pairwise_sum(x.data(), x.size());
}

double pairwise_mean(const std::vector<double>& x) {
  if (x.empty()) throw std::invalid_argument("pairwise_mean: empty input");
  return pairwise_sum(x) / static_cast<double>(x.size());
}

double mean_over(std::size_t n, const std::function<double(std::size_t)>& f) {
  if (n == 0) throw std::invalid_argument("mean_over: empty dataset");
  std::vector<double> vals(n);
  for (std::size_t i = 0; i < n; ++i) vals[i] = f(i);
  return pairwise_mean(vals);
}

}  // namespace pul
