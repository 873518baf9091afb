#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "pul/gaussmix.hpp"
#include "pul/proxy.hpp"
#include "pul/rng.hpp"
#include "pul/simplex.hpp"
#include "pul/unlearn.hpp"

using namespace pul;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

LabeledDataset blobs(const char* name, std::size_t n, std::uint64_t seed) {
  return generate(preset_mixture(name), n, seed);
}

Vec probe2(Rng& rng) {
  Vec x(2);
  x << rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0);
  return x;
}

const std::vector<ProxyKind> kGaussKinds = {ProxyKind::Lda, ProxyKind::Qda, ProxyKind::LdaMix,
                                            ProxyKind::QdaMix, ProxyKind::Lda2c};
}  // namespace

TEST_CASE("proxy kind names roundtrip") {
  for (const char* name : {"lda", "qda", "lda-mix", "qda-mix", "lda-2c", "dir", "dir-2c"}) {
    CHECK(to_string(proxy_kind_from_string(name)) == name);
  }
  CHECK_THROWS_AS(proxy_kind_from_string("nope"), std::invalid_argument);
  CHECK(is_dirac(ProxyKind::Dir));
  CHECK(is_dirac(ProxyKind::Dir2c));
  CHECK_FALSE(is_dirac(ProxyKind::Lda2c));
}

TEST_CASE("pooled covariance fit matches a hand computation") {
  // two classes, two points each, d = 1; within-class scatter pooled over
  // n - #cells degrees of freedom
  Mat x(4, 1);
  x << 0.0, 2.0, 10.0, 14.0;
  const std::vector<int> cls = {0, 0, 1, 1};
  const std::vector<int> state(4, -1);
  const GaussFit fit = GaussFit::fit(x, cls, state, 2, CovKind::SharedFull, 0.0);
  // class means 1 and 12; scatter = (1 + 1) + (4 + 4) = 10; dof = 4 - 2 = 2
  const auto i0 = fit.comp_of(0, -1);
  const auto i1 = fit.comp_of(1, -1);
  REQUIRE(i0.has_value());
  REQUIRE(i1.has_value());
  CHECK(fit.comps()[*i0].mean[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(fit.comps()[*i1].mean[0] == doctest::Approx(12.0).epsilon(1e-15));
  CHECK(fit.cov_dense(*i0)(0, 0) == doctest::Approx(5.0).epsilon(1e-12));
  // equal counts, empirical priors one half each
  CHECK(std::exp(fit.comps()[*i0].log_prior) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("per-class diagonal fit matches per-class variances") {
  Mat x(5, 2);
  x << 0.0, 0.0, 2.0, 4.0, 4.0, 2.0, 10.0, 10.0, 12.0, 14.0;
  const std::vector<int> cls = {0, 0, 0, 1, 1};
  const std::vector<int> state(5, -1);
  const GaussFit fit = GaussFit::fit(x, cls, state, 2, CovKind::PerCompDiag, 0.0);
  const auto i0 = fit.comp_of(0, -1);
  REQUIRE(i0.has_value());
  // class 0 column 0: values 0,2,4, mean 2, unbiased var 4
  CHECK(fit.cov_dense(*i0)(0, 0) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(fit.cov_dense(*i0)(1, 0) == 0.0);
}

TEST_CASE("gaussian posteriors are normalized and consistent with densities") {
  const LabeledDataset ds = blobs("blobs2", 120, 31);
  const ForgetSplit sp = build_scenario(ds, parse_scenario("subclass:0:1"));
  Rng rng(77);
  for (const ProxyKind kind : kGaussKinds) {
    const ProxyPair pair = fit_proxy(kind, ds, sp);
    for (int t = 0; t < 10; ++t) {
      const Vec x = probe2(rng);
      for (const PosteriorModel* m : {pair.p_model.get(), pair.pr_model.get()}) {
        const Vec lp = m->log_posterior(x);
        CHECK(std::abs(lp.array().exp().sum() - 1.0) < 1e-10);
      }
    }
  }
}

namespace {
// log class prior of a fitted posterior, looked up per concrete model type
double model_log_prior(const PosteriorModel& m, int cls) {
  if (const auto* mix = dynamic_cast<const MixPosterior*>(&m))
    return mix->log_class_prior()[static_cast<std::size_t>(cls)];
  const auto* g = dynamic_cast<const GaussPosterior*>(&m);
  REQUIRE(g != nullptr);
  double mass = 0.0, norm = 0.0;
  for (const auto& comp : g->fit().comps()) {
    const bool in_view = g->view() == GaussPosterior::View::Marginal || comp.state == 0;
    if (!in_view) continue;
    norm += std::exp(comp.log_prior);
    if (comp.cls == cls) mass += std::exp(comp.log_prior);
  }
  return std::log(mass / norm);
}
}  // namespace

TEST_CASE("log posterior equals density plus prior minus normalizer") {
  const LabeledDataset ds = blobs("blobs2", 100, 32);
  const ForgetSplit sp = build_scenario(ds, parse_scenario("subclass:1:1"));
  Rng rng(78);
  for (const ProxyKind kind : kGaussKinds) {
    const ProxyPair pair = fit_proxy(kind, ds, sp);
    for (int t = 0; t < 5; ++t) {
      const Vec x = probe2(rng);
      for (const PosteriorModel* mp : {pair.p_model.get(), pair.pr_model.get()}) {
        Vec terms(ds.num_classes);
        for (int c = 0; c < ds.num_classes; ++c) {
          const auto dens = mp->log_class_density(x, c);
          REQUIRE(dens.has_value());
          terms[c] = *dens + model_log_prior(*mp, c);
        }
        const Vec lp = mp->log_posterior(x);
        const double lse = log_sum_exp(terms);
        for (int c = 0; c < ds.num_classes; ++c)
          CHECK(std::abs(lp[c] - (terms[c] - lse)) < 1e-10);
      }
    }
  }
}

TEST_CASE("delta_m vanishes when nothing is forgotten") {
  const LabeledDataset ds = blobs("blobs2", 80, 33);
  const ForgetSplit empty = make_split(ds, {});
  Rng rng(79);
  for (const ProxyKind kind :
       {ProxyKind::Lda, ProxyKind::Qda, ProxyKind::LdaMix, ProxyKind::QdaMix, ProxyKind::Lda2c,
        ProxyKind::Dir}) {
    const ProxyPair pair = fit_proxy(kind, ds, empty);
    for (int t = 0; t < 5; ++t) {
      const Vec dm = pair.delta_m(probe2(rng), ds.id[0]);
      CHECK(dm.cwiseAbs().maxCoeff() < 1e-10);
    }
  }
  // the count blend likewise returns the base probits untouched
  const ProxyPair p2c = fit_proxy(ProxyKind::Dir2c, ds, empty);
  Vec base(2);
  base << 0.4, -0.3;
  const Vec out = unlearned_probits(base, p2c, probe2(rng), ds.id[0], 1.0);
  CHECK((out - softmax(base)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mixture kinds honor the component blend at random probes") {
  const LabeledDataset ds = blobs("blobs2", 150, 34);
  const ForgetSplit sp = build_scenario(ds, parse_scenario("subclass:0:0"));
  Rng rng(80);
  for (const ProxyKind kind : {ProxyKind::LdaMix, ProxyKind::QdaMix}) {
    const ProxyPair pair = fit_proxy(kind, ds, sp);
    const auto* mix = dynamic_cast<const MixPosterior*>(pair.p_model.get());
    REQUIRE(mix != nullptr);
    for (int t = 0; t < 10; ++t) {
      const Vec x = probe2(rng);
      for (int c = 0; c < ds.num_classes; ++c) {
        const double pi = mix->pi_f()[static_cast<std::size_t>(c)];
        const auto got = mix->log_class_density(x, c);
        REQUIRE(got.has_value());
        const auto ir = mix->retain_fit().comp_of(c, -1);
        double dens = 0.0;
        if (ir) dens += (1.0 - pi) * std::exp(mix->retain_fit().log_density(x, *ir));
        if (mix->forget_fit()) {
          const auto iff = mix->forget_fit()->comp_of(c, -1);
          if (iff) dens += pi * std::exp(mix->forget_fit()->log_density(x, *iff));
        }
        CHECK(std::abs(std::exp(*got) - dens) < 1e-10);
      }
    }
  }
}

TEST_CASE("doubled-label fit marginalizes to valid posteriors") {
  const LabeledDataset ds = blobs("blobs2", 90, 35);
  const ForgetSplit sp = build_scenario(ds, parse_scenario("subclass:1:0"));
  const ProxyPair pair = fit_proxy(ProxyKind::Lda2c, ds, sp);
  const auto* full = dynamic_cast<const GaussPosterior*>(pair.p_model.get());
  const auto* retain = dynamic_cast<const GaussPosterior*>(pair.pr_model.get());
  REQUIRE(full != nullptr);
  REQUIRE(retain != nullptr);
  CHECK(full->view() == GaussPosterior::View::Marginal);
  CHECK(retain->view() == GaussPosterior::View::RetainSlice);
  // one fit object is shared between the two views
  CHECK(&full->fit() == &retain->fit());
  Rng rng(81);
  for (int t = 0; t < 10; ++t) {
    const Vec x = probe2(rng);
    CHECK(is_prob_vec(full->log_posterior(x).array().exp().matrix(), 1e-9));
    CHECK(is_prob_vec(retain->log_posterior(x).array().exp().matrix(), 1e-9));
  }
}

TEST_CASE("fitting is invariant to row order") {
  const LabeledDataset ds = blobs("blobs2", 60, 36);
  // build a shuffled copy with the same rows
  std::vector<std::size_t> perm(ds.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(82);
  for (std::size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[rng.below(i)]);
  LabeledDataset shuffled = ds;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.x.row(static_cast<Eigen::Index>(i)) =
        ds.x.row(static_cast<Eigen::Index>(perm[i]));
    shuffled.y[i] = ds.y[perm[i]];
    shuffled.subclass[i] = ds.subclass[perm[i]];
    shuffled.id[i] = ds.id[perm[i]];
  }
  const Scenario sc = parse_scenario("subclass:0:1");
  const ForgetSplit sa = build_scenario(ds, sc);
  const ForgetSplit sb = build_scenario(shuffled, sc);
  Rng prng(83);
  for (const ProxyKind kind : kGaussKinds) {
    const ProxyPair a = fit_proxy(kind, ds, sa);
    const ProxyPair b = fit_proxy(kind, shuffled, sb);
    for (int t = 0; t < 5; ++t) {
      const Vec x = probe2(prng);
      CHECK((a.p_model->log_posterior(x) - b.p_model->log_posterior(x)).cwiseAbs().maxCoeff() <
            1e-12);
      CHECK((a.pr_model->log_posterior(x) - b.pr_model->log_posterior(x))
                .cwiseAbs()
                .maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("insufficient data errors name the offending cell") {
  // class 1 has a single sample: per-class covariance cannot be fitted
  Mat x(3, 2);
  x << 0.0, 0.0, 1.0, 1.0, 5.0, 5.0;
  LabeledDataset ds;
  ds.x = x;
  ds.y = {0, 0, 1};
  ds.subclass = {-1, -1, -1};
  ds.id = {0, 1, 2};
  ds.num_classes = 2;
  const ForgetSplit empty = make_split(ds, {});
  CHECK_THROWS_WITH_AS(fit_proxy(ProxyKind::Qda, ds, empty),
                       doctest::Contains("insufficient data"), std::invalid_argument);
}

TEST_CASE("membership proxy flags forgotten rows only") {
  const LabeledDataset ds = blobs("blobs3", 40, 37);
  const ForgetSplit sp = build_scenario(ds, parse_scenario("random:30", 4));
  const ProxyPair pair = fit_proxy(ProxyKind::Dir, ds, sp);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Vec x = ds.x.row(static_cast<Eigen::Index>(i)).transpose();
    const Vec dm = pair.delta_m(x, ds.id[i]);
    if (sp.is_forget(ds.id[i])) {
      CHECK(dm[ds.y[i]] == -kInf);
      for (int c = 0; c < ds.num_classes; ++c)
        if (c != ds.y[i]) CHECK(dm[c] == 0.0);
    } else {
      CHECK(dm.cwiseAbs().maxCoeff() == 0.0);
    }
  }
  // unknown ids carry no signal; the blend variant refuses the logit route
  CHECK(pair.delta_m(ds.x.row(0).transpose(), std::nullopt).cwiseAbs().maxCoeff() == 0.0);
  const ProxyPair p2c = fit_proxy(ProxyKind::Dir2c, ds, sp);
  CHECK_THROWS_AS(p2c.delta_m(ds.x.row(0).transpose(), ds.id[0]), std::logic_error);
}

TEST_CASE("truncated probit closed form") {
  Vec p(3);
  p << 0.2, 0.5, 0.3;
  const Vec t = dirac_target(p, 0);
  CHECK(t[0] == 0.0);
  CHECK(t[1] == doctest::Approx(0.625).epsilon(1e-15));
  CHECK(t[2] == doctest::Approx(0.375).epsilon(1e-15));

  Vec sure(2);
  sure << 1.0, 0.0;
  CHECK_THROWS_WITH_AS(dirac_target(sure, 0), doctest::Contains("undefined renormalization"),
                       NumericalError);
}

TEST_CASE("count-weighted blend interpolates base and truncated probits") {
  Vec p(3);
  p << 0.2, 0.5, 0.3;
  // no forget mass: unchanged; no retain mass: fully truncated
  CHECK((dirac_target_2c(p, 1, 10, 0) - p).cwiseAbs().maxCoeff() == 0.0);
  CHECK((dirac_target_2c(p, 1, 0, 10) - dirac_target(p, 1)).cwiseAbs().maxCoeff() == 0.0);
  // 3 retain, 1 forget: 0.75 p + 0.25 truncated
  const Vec blend = dirac_target_2c(p, 1, 3, 1);
  const Vec expect = 0.75 * p + 0.25 * dirac_target(p, 1);
  CHECK((blend - expect).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(std::abs(blend.sum() - 1.0) < 1e-12);
}

TEST_CASE("proxy serialization roundtrips") {
  const LabeledDataset ds = blobs("blobs2", 70, 38);
  const ForgetSplit sp = build_scenario(ds, parse_scenario("subclass:0:1"));
  Rng rng(84);
  namespace fs = std::filesystem;
  for (const ProxyKind kind :
       {ProxyKind::Lda, ProxyKind::Qda, ProxyKind::LdaMix, ProxyKind::QdaMix, ProxyKind::Lda2c,
        ProxyKind::Dir, ProxyKind::Dir2c}) {
    const ProxyPair pair = fit_proxy(kind, ds, sp);
    const std::string path =
        (fs::temp_directory_path() / ("pul_proxy_" + to_string(kind) + ".txt")).string();
    save_proxy(pair, path);
    const ProxyPair back = load_proxy(path);
    CHECK(back.kind == pair.kind);
    CHECK(back.num_classes == pair.num_classes);
    CHECK(back.fitted_on == pair.fitted_on);
    if (!pair.dirac()) {
      for (int t = 0; t < 5; ++t) {
        const Vec x = probe2(rng);
        CHECK((back.p_model->log_posterior(x) - pair.p_model->log_posterior(x))
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
        CHECK((back.pr_model->log_posterior(x) - pair.pr_model->log_posterior(x))
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
      }
    } else {
      CHECK(back.members->forget == pair.members->forget);
      CHECK(back.members->count_r == pair.members->count_r);
      CHECK(back.members->count_f == pair.members->count_f);
      CHECK(back.members->label_of == pair.members->label_of);
    }
    std::remove(path.c_str());
  }
}

TEST_CASE("same-mean gaussian KL closed form") {
  // identical covariances cost nothing
  Mat s(2, 2);
  s << 2.0, 0.3, 0.3, 1.0;
  CHECK(gauss_kl_same_mean(s, s) == doctest::Approx(0.0).epsilon(1e-14));
  // 1-d: 0.5 (ln 2 + 1/2 - 1)
  Mat a(1, 1), b(1, 1);
  a << 1.0;
  b << 2.0;
  CHECK(gauss_kl_same_mean(a, b) ==
        doctest::Approx(0.5 * (std::log(2.0) + 0.5 - 1.0)).epsilon(1e-12));
  Mat bad(2, 2);
  CHECK_THROWS_AS(gauss_kl_same_mean(a, s), std::invalid_argument);
}

TEST_CASE("pooling cost vanishes for already homoscedastic fits") {
  const LabeledDataset ds = blobs("homo8d3", 500, 39);
  const std::vector<int> state(ds.size(), -1);
  const GaussFit per = GaussFit::fit(ds.x, ds.y, state, ds.num_classes, CovKind::PerCompFull, 0.0);
  const GaussFit pooled =
      GaussFit::fit(ds.x, ds.y, state, ds.num_classes, CovKind::SharedFull, 0.0);
  std::vector<double> priors(static_cast<std::size_t>(ds.num_classes),
                             1.0 / ds.num_classes);
  // same generating covariance for every class: the cost is small but not
  // zero at finite n
  const double cost = homoscedastic_cost(per, pooled, priors);
  CHECK(cost >= 0.0);
  CHECK(cost < 0.2);
  // degenerate prior vector rejected
  std::vector<double> badp = {0.9, 0.9, 0.9};
  CHECK_THROWS_AS(homoscedastic_cost(per, pooled, badp), std::invalid_argument);
}

TEST_CASE("class scenario drops the forgotten class from the retain model") {
  const LabeledDataset ds = blobs("blobs2", 90, 40);
  const ForgetSplit sp = build_scenario(ds, parse_scenario("class:0"));
  const ProxyPair pair = fit_proxy(ProxyKind::Lda, ds, sp);
  Rng rng(85);
  const Vec x = probe2(rng);
  const Vec lpr = pair.pr_model->log_posterior(x);
  CHECK(lpr[0] == -kInf);
  CHECK(lpr[1] == 0.0);  // all retained mass on the surviving class
  // delta_m then reports -inf on the dropped class
  const Vec dm = pair.delta_m(x);
  CHECK(dm[0] == -kInf);
  CHECK(std::isfinite(dm[1]));
}
