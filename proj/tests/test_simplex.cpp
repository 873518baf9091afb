#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "pul/rng.hpp"
#include "pul/simplex.hpp"

using namespace pul;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// random point on the simplex, strictly positive entries
Vec random_prob(Rng& rng, int c) {
  Vec p(c);
  for (int i = 0; i < c; ++i) p[i] = -std::log(rng.uniform01());
  return p / p.sum();
}
}  // namespace

TEST_CASE("log_sum_exp known values") {
  CHECK(log_sum_exp(vec({0.0, 0.0})) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(log_sum_exp(vec({1000.0, 1000.0})) ==
        doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));
  CHECK(log_sum_exp(vec({0.0, -kInf})) == 0.0);
  CHECK(log_sum_exp(vec({-kInf, 3.0, -kInf})) == 3.0);
}

TEST_CASE("log_sum_exp shift identity") {
  Rng rng(41);
  for (int t = 0; t < 50; ++t) {
    Vec z(4);
    for (int i = 0; i < 4; ++i) z[i] = rng.uniform(-30.0, 30.0);
    const double kappa = rng.uniform(-1000.0, 1000.0);
    CHECK(std::abs(log_sum_exp((z.array() + kappa).matrix()) - log_sum_exp(z) - kappa) < 1e-11);
  }
}

TEST_CASE("log_sum_exp rejects degenerate input") {
  CHECK_THROWS_AS(log_sum_exp(vec({-kInf, -kInf})), NumericalError);
  CHECK_THROWS_AS(log_sum_exp(vec({0.0, kInf})), NumericalError);
  CHECK_THROWS_AS(log_sum_exp(vec({0.0, std::nan("")})), NumericalError);
}

TEST_CASE("softmax basics") {
  const Vec u = softmax(vec({7.5, 7.5, 7.5}));
  for (int i = 0; i < 3; ++i) CHECK(u[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  const Vec p = softmax(vec({std::log(0.5), std::log(0.3), std::log(0.2)}));
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(p[2] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("softmax maps -inf to an exact zero") {
  const Vec p = softmax(vec({0.0, -kInf}));
  CHECK(p[0] == 1.0);
  CHECK(p[1] == 0.0);
}

TEST_CASE("softmax sums to one and is shift invariant") {
  Rng rng(42);
  for (int t = 0; t < 100; ++t) {
    Vec z(5);
    for (int i = 0; i < 5; ++i) z[i] = rng.uniform(-50.0, 50.0);
    const Vec p = softmax(z);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    const Vec q = softmax((z.array() + 123.0).matrix());
    CHECK((p - q).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("log_softmax equals logits minus lse") {
  Rng rng(43);
  for (int t = 0; t < 50; ++t) {
    Vec z(4);
    for (int i = 0; i < 4; ++i) z[i] = rng.uniform(-20.0, 20.0);
    const Vec l = log_softmax(z);
    const double lse = log_sum_exp(z);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(l[i] - (z[i] - lse)) < 1e-12);
  }
  CHECK(log_softmax(vec({0.0, -kInf}))[1] == -kInf);
}

TEST_CASE("kl_categorical closed forms") {
  CHECK(kl_categorical(vec({0.5, 0.5}), vec({0.5, 0.5})) == 0.0);
  CHECK(kl_categorical(vec({1.0, 0.0}), vec({0.5, 0.5})) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // direct-summation oracle
  const Vec p = vec({0.5, 0.3, 0.2});
  const Vec q = vec({1.0 / 3, 1.0 / 3, 1.0 / 3});
  double oracle = 0.0;
  for (int i = 0; i < 3; ++i) oracle += p[i] * std::log(p[i] / q[i]);
  CHECK(kl_categorical(p, q) == doctest::Approx(oracle).epsilon(1e-14));
}

TEST_CASE("kl_categorical rejects support violations") {
  CHECK_THROWS_WITH_AS(kl_categorical(vec({0.5, 0.5}), vec({1.0, 0.0})),
                       doctest::Contains("absolute-continuity violated"), NumericalError);
}

TEST_CASE("kl_categorical nonnegative, zero only at equality") {
  Rng rng(44);
  for (int t = 0; t < 200; ++t) {
    const Vec p = random_prob(rng, 4);
    const Vec q = random_prob(rng, 4);
    const double d = kl_categorical(p, q);
    CHECK(d >= 0.0);
    if ((p - q).cwiseAbs().maxCoeff() > 1e-3) CHECK(d > 0.0);
    CHECK(kl_categorical(p, p) == 0.0);
  }
}

TEST_CASE("entropy of the uniform distribution") {
  CHECK(entropy(vec({0.25, 0.25, 0.25, 0.25})) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(entropy(vec({1.0, 0.0})) == 0.0);
}

TEST_CASE("is_prob_vec") {
  CHECK(is_prob_vec(vec({0.5, 0.5})));
  CHECK(is_prob_vec(vec({1.0, 0.0})));
  CHECK_FALSE(is_prob_vec(vec({0.6, 0.6})));
  CHECK_FALSE(is_prob_vec(vec({-0.1, 1.1})));
}

TEST_CASE("pairwise_sum matches std::accumulate on benign input") {
  Rng rng(45);
  std::vector<double> xs(1037);
  for (auto& x : xs) x = rng.uniform(-1.0, 1.0);
  const double ref = std::accumulate(xs.begin(), xs.end(), 0.0);
  CHECK(pairwise_sum(xs) == doctest::Approx(ref).epsilon(1e-12));
  CHECK(pairwise_sum(xs.data(), xs.size()) == pairwise_sum(xs));
  CHECK(pairwise_mean(xs) == doctest::Approx(ref / 1037.0).epsilon(1e-12));
}

TEST_CASE("mean_over fixed iteration order") {
  const double m = mean_over(3, [](std::size_t i) { return static_cast<double>(i * i); });
  CHECK(m == doctest::Approx((0.0 + 1.0 + 4.0) / 3.0).epsilon(1e-15));
  CHECK(mean_over(5, [](std::size_t) { return 1.0; }) == 1.0);
  CHECK_THROWS_AS(mean_over(0, [](std::size_t) { return 1.0; }), std::invalid_argument);
}

TEST_CASE("rng streams are deterministic and well ranged") {
  Rng a(123), b(123), c(124);
  bool same = true, diff = false;
  for (int t = 0; t < 100; ++t) {
    const double ua = a.uniform01();
    same = same && ua == b.uniform01();
    diff = diff || ua != c.uniform01();
    CHECK(ua > 0.0);
    CHECK(ua <= 1.0);
  }
  CHECK(same);
  CHECK(diff);

  Rng r(7);
  for (int t = 0; t < 200; ++t) CHECK(r.below(13) < 13);
  CHECK_THROWS_AS(r.below(0), std::invalid_argument);
}

TEST_CASE("rng normal moments") {
  Rng r(99);
  const int n = 20000;
  double s1 = 0.0, s2 = 0.0;
  for (int t = 0; t < n; ++t) {
    const double z = r.normal();
    s1 += z;
    s2 += z * z;
  }
  CHECK(std::abs(s1 / n) < 0.03);
  CHECK(std::abs(s2 / n - 1.0) < 0.05);
}

TEST_CASE("mix_seed separates derived streams") {
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
  CHECK(mix_seed(0, 0) != 0);
  CHECK(mix_seed(5, 1) != mix_seed(5, 2));
}
