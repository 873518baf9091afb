#include <doctest.h>

#include <cmath>
#include <limits>

#include "pul/gaussmix.hpp"
#include "pul/mlp.hpp"
#include "pul/proxy.hpp"
#include "pul/rng.hpp"
#include "pul/train.hpp"
#include "pul/unlearn.hpp"

using namespace pul;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Fixture {
  LabeledDataset ds;
  ForgetSplit split;
  MlpModel net;
  LogitFn logits;

  Fixture(const char* preset, const char* scenario, std::uint64_t seed, int epochs = 6)
      : ds(generate(preset_mixture(preset), 120, seed)),
        split(build_scenario(ds, parse_scenario(scenario, seed))),
        net(MlpModel::init(arch_dims("mlp1", ds.dim(), ds.num_classes, 16), seed + 1)) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.seed = seed + 2;
    train_ce(net, ds, cfg);
    logits = [this](const Vec& x, std::optional<SampleId>) { return net.forward(x); };
  }
};
}  // namespace

TEST_CASE("shifted_logits composes base and signal") {
  Vec base(3), dm(3);
  base << 1.0, 2.0, 3.0;
  dm << 0.5, 0.0, -1.0;
  const Vec s = shifted_logits(base, dm, 0.5);
  CHECK(s[0] == doctest::Approx(1.25).epsilon(1e-15));
  CHECK(s[1] == 2.0);
  CHECK(s[2] == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(shifted_logits(base, dm, 0.0) == base);
  dm[1] = -kInf;
  CHECK(shifted_logits(base, dm, 0.25)[1] == -kInf);
}

TEST_CASE("shift curve is zero at the origin by construction") {
  Fixture fx("blobs2", "subclass:0:1", 51);
  const ProxyPair pair = fit_proxy(ProxyKind::Lda, fx.ds, fx.split);
  CHECK(h_empirical(fx.logits, pair, fx.ds, 0.0) == 0.0);
  const EtaCurve curve = make_eta_curve(fx.logits, pair, fx.ds);
  CHECK(h_empirical(curve, 0.0) == 0.0);
  CHECK(curve.rows() == fx.ds.size());
  // the cached curve agrees with the direct evaluation
  for (double eta : {0.1, 0.5, 1.0})
    CHECK(h_empirical(curve, eta) ==
          doctest::Approx(h_empirical(fx.logits, pair, fx.ds, eta)).epsilon(1e-12));
}

TEST_CASE("root finding on synthetic shift functions") {
  SUBCASE("interior root") {
    // convex, root at 0.6
    const auto h = [](double eta) { return eta * (eta - 0.6); };
    const EtaSearchResult r = find_eta_max(h, 1e-4);
    CHECK(r.admissible);
    CHECK(r.zero_bracket == "interior");
    CHECK(r.eta_max <= 0.6);
    CHECK(r.eta_max > 0.6 - 1e-4);
    CHECK(r.h_at_eta <= 0.0);
    CHECK(r.h_at_eta >= -1e-4);
    CHECK(r.h_samples.front() == std::pair{0.0, 0.0});
  }
  SUBCASE("nonnegative slope is inadmissible") {
    const auto h = [](double eta) { return eta * eta; };
    const EtaSearchResult r = find_eta_max(h, 1e-4);
    CHECK_FALSE(r.admissible);
    CHECK(r.eta_max == 0.0);
    CHECK(r.zero_bracket == "none");
  }
  SUBCASE("negative over the whole interval caps at one") {
    const auto h = [](double eta) { return -eta; };
    const EtaSearchResult r = find_eta_max(h, 1e-4);
    CHECK(r.admissible);
    CHECK(r.eta_max == 1.0);
    CHECK(r.zero_bracket == "capped-at-1");
  }
  SUBCASE("root beyond one caps as well") {
    const auto h = [](double eta) { return eta * (eta - 3.0) / 3.0; };
    const EtaSearchResult r = find_eta_max(h, 1e-4);
    CHECK(r.eta_max == 1.0);
    CHECK(r.zero_bracket == "capped-at-1");
  }
  SUBCASE("tight tolerance is honored") {
    const auto h = [](double eta) { return eta * (eta - 0.37); };
    const EtaSearchResult r = find_eta_max(h, 1e-7);
    CHECK(std::abs(r.eta_max - 0.37) < 1e-6);
    CHECK(r.h_at_eta >= -1e-7);
    CHECK(r.h_at_eta <= 0.0);
  }
}

TEST_CASE("an empty forget split yields a flat curve and no admissible scale") {
  Fixture fx("blobs2", "subclass:0:1", 52);
  const ForgetSplit empty = make_split(fx.ds, {});
  const ProxyPair pair = fit_proxy(ProxyKind::Lda, fx.ds, empty);
  const EtaSearchResult r = find_eta_max(fx.logits, pair, fx.ds);
  CHECK_FALSE(r.admissible);
  CHECK(r.eta_max == 0.0);
  CHECK(r.zero_bracket == "none");
  CHECK(r.slope0 == 0.0);
}

TEST_CASE("line search lands in the negative tolerance band on fitted pairs") {
  int admissible_seen = 0;
  for (const auto& [preset, scenario] :
       {std::pair{"blobs2", "subclass:0:1"}, std::pair{"blobs3", "class:1"},
        std::pair{"blobs2", "random:100"}}) {
    Fixture fx(preset, scenario, 53);
    for (const ProxyKind kind : {ProxyKind::Lda, ProxyKind::Lda2c}) {
      const ProxyPair pair = fit_proxy(kind, fx.ds, fx.split);
      const EtaSearchResult r = find_eta_max(fx.logits, pair, fx.ds);
      if (!r.admissible) continue;
      ++admissible_seen;
      CHECK(r.eta_max > 0.0);
      CHECK(r.eta_max <= 1.0);
      if (r.zero_bracket == "interior") {
        CHECK(r.h_at_eta <= 0.0);
        CHECK(r.h_at_eta >= -1e-4);
      } else {
        CHECK(r.zero_bracket == "capped-at-1");
        CHECK(r.eta_max == 1.0);
      }
    }
  }
  CHECK(admissible_seen > 0);
}

TEST_CASE("unlearned probits agree across the logit and closed-form routes") {
  Fixture fx("blobs3", "random:60", 54);
  const ProxyPair dir = fit_proxy(ProxyKind::Dir, fx.ds, fx.split);
  for (std::size_t i = 0; i < fx.ds.size(); ++i) {
    if (!fx.split.is_forget(fx.ds.id[i])) continue;
    const Vec x = fx.ds.x.row(static_cast<Eigen::Index>(i)).transpose();
    const Vec base = fx.net.forward(x);
    for (double eta : {0.1, 0.5, 1.0}) {
      const Vec via_logits = softmax(shifted_logits(base, dir.delta_m(x, fx.ds.id[i]), eta));
      const Vec via_closed = dirac_target(softmax(base), fx.ds.y[i]);
      const Vec via_api = unlearned_probits(base, dir, x, fx.ds.id[i], eta);
      CHECK((via_logits - via_closed).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((via_api - via_logits).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("eta zero returns the base probits for every kind") {
  Fixture fx("blobs2", "subclass:1:0", 55);
  Rng rng(11);
  for (const ProxyKind kind : {ProxyKind::Lda, ProxyKind::Qda, ProxyKind::LdaMix,
                               ProxyKind::QdaMix, ProxyKind::Lda2c, ProxyKind::Dir,
                               ProxyKind::Dir2c}) {
    const ProxyPair pair = fit_proxy(kind, fx.ds, fx.split);
    const std::size_t row = 3;
    const Vec x = fx.ds.x.row(row).transpose();
    const Vec base = fx.net.forward(x);
    const Vec p = unlearned_probits(base, pair, x, fx.ds.id[row], 0.0);
    CHECK((p - softmax(base)).cwiseAbs().maxCoeff() == 0.0);
  }
  const ProxyPair pair = fit_proxy(ProxyKind::Lda, fx.ds, fx.split);
  Vec x = fx.ds.x.row(0).transpose();
  CHECK_THROWS_AS(unlearned_probits(fx.net.forward(x), pair, x, fx.ds.id[0], 1.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(unlearned_probits(fx.net.forward(x), pair, x, fx.ds.id[0], -0.1),
                  std::invalid_argument);
}

TEST_CASE("admissibility gap measures proxy fit quality") {
  Fixture fx("blobs2", "subclass:0:1", 56, 12);
  const ProxyPair pair = fit_proxy(ProxyKind::Lda, fx.ds, fx.split);
  const AdmissibilityReport rep = check_admissibility(fx.logits, pair, fx.ds);
  CHECK(std::isfinite(rep.kl_to_full));
  CHECK(rep.kl_to_full >= 0.0);
  CHECK(rep.gap == doctest::Approx(rep.kl_to_retain - rep.kl_to_full));
  CHECK(rep.holds == (rep.gap >= 0.0));
  CHECK(rep.support_violations == 0);

  // a class scenario forbids the forgotten class on the retain side; the
  // report tolerates that with an infinite retain divergence
  const ForgetSplit cls = build_scenario(fx.ds, parse_scenario("class:0"));
  const ProxyPair cpair = fit_proxy(ProxyKind::Lda, fx.ds, cls);
  const AdmissibilityReport crep = check_admissibility(fx.logits, cpair, fx.ds);
  CHECK(crep.kl_to_retain == kInf);
  CHECK(crep.support_violations > 0);
  CHECK(crep.holds);

  const ProxyPair dir = fit_proxy(ProxyKind::Dir, fx.ds, fx.split);
  CHECK_THROWS_AS(check_admissibility(fx.logits, dir, fx.ds), std::invalid_argument);
}

TEST_CASE("bound report satisfies the exact decomposition") {
  Fixture fx("blobs2", "subclass:0:1", 57, 10);
  const auto spec = preset_mixture("blobs2");
  const Scenario sc = parse_scenario("subclass:0:1");
  const auto truth = true_model_for(spec, sc);
  const TruePosterior reference(truth, TruePosterior::View::Retain);
  const LabeledDataset retain = subset_by_ids(fx.ds, fx.split.retain_ids);

  for (const ProxyKind kind : {ProxyKind::Lda, ProxyKind::Lda2c}) {
    const ProxyPair pair = fit_proxy(kind, fx.ds, fx.split);
    const EtaSearchResult r = find_eta_max(fx.logits, pair, fx.ds);
    const double eta = r.admissible ? r.eta_max : 0.5;
    const BoundReport rep = bound_report(reference, fx.logits, pair, retain, eta, truth.get());
    CHECK(rep.eta == eta);
    CHECK(rep.kl_ref_to_unlearned >= 0.0);
    CHECK(rep.initial_divergence == rep.kl_ref_to_initial);
    CHECK(rep.bound_rhs ==
          doctest::Approx((1.0 - eta) * rep.initial_divergence + eta * rep.modeling_shift));
    CHECK(rep.residual ==
          doctest::Approx(rep.kl_ref_to_unlearned - rep.bound_rhs).epsilon(1e-12));
    // the decomposition into initial divergence, normalization shift, and
    // the proxy gap is an identity, so its residual is numerical noise
    CHECK(std::abs(rep.identity_residual) < 1e-8);
    CHECK(std::isfinite(rep.kl_xy_r));
    CHECK(std::isfinite(rep.kl_xy_init));
    CHECK(rep.support_violations == 0);
  }

  // without ground truth the feature-space terms are not computable
  const ProxyPair pair = fit_proxy(ProxyKind::Lda, fx.ds, fx.split);
  const BoundReport rep = bound_report(reference, fx.logits, pair, retain, 0.3);
  CHECK(std::isnan(rep.kl_xy_r));
  CHECK(std::isnan(rep.kl_xy_init));
  // the json rendering carries every field
  const std::string js = bound_report_json(rep);
  CHECK(js.find("kl_ref_to_unlearned") != std::string::npos);
  CHECK(js.find("identity_residual") != std::string::npos);
}

TEST_CASE("scaling toward the retain proxy reshapes the probits") {
  // at eta = 1 with an exact proxy pair equal to the truth, the unlearned
  // probits coincide with the true retain posterior when the net matches
  // the true full posterior; checked via hand-built oracle models
  const auto spec = preset_mixture("blobs2");
  const Scenario sc = parse_scenario("subclass:0:1");
  const auto truth = true_model_for(spec, sc);
  ProxyPair pair;
  pair.kind = ProxyKind::Lda;
  pair.num_classes = truth->num_classes();
  pair.p_model = std::make_shared<TruePosterior>(truth, TruePosterior::View::Full);
  pair.pr_model = std::make_shared<TruePosterior>(truth, TruePosterior::View::Retain);

  Rng rng(21);
  for (int t = 0; t < 25; ++t) {
    Vec x(2);
    x << rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0);
    const Vec base = truth->log_posterior(x);  // net == true full posterior
    const Vec p1 = unlearned_probits(base, pair, x, std::nullopt, 1.0);
    const Vec want = truth->log_posterior_r(x).array().exp().matrix();
    CHECK((p1 - want).cwiseAbs().maxCoeff() < 1e-10);
  }
}
