// python bindings over the main pipeline operations: data generation, proxy
// fitting, the eta line search, target construction, training/distillation,
// and the attacker query bound
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pul/dataset.hpp"
#include "pul/gaussmix.hpp"
#include "pul/metrics.hpp"
#include "pul/mlp.hpp"
#include "pul/proxy.hpp"
#include "pul/rng.hpp"
#include "pul/simplex.hpp"
#include "pul/train.hpp"
#include "pul/unlearn.hpp"

namespace py = pybind11;
using namespace pul;

namespace {

LogitFn net_logits(const MlpModel& m) {
  return [&m](const Vec& x, std::optional<SampleId>) { return m.forward(x); };
}

TrainConfig make_cfg(double lr, int epochs, int batch, std::uint64_t seed,
                     const std::string& optimizer) {
  TrainConfig cfg;
  cfg.learning_rate = lr;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.seed = seed;
  if (optimizer == "adam")
    cfg.optimizer = Optimizer::Adam;
  else if (optimizer == "sgd-momentum")
    cfg.optimizer = Optimizer::SgdMomentum;
  else
    throw std::invalid_argument("unknown optimizer '" + optimizer + "'");
  return cfg;
}

}  // namespace

PYBIND11_MODULE(pulpy, mod) {
  mod.doc() = "proxy-based unlearning: gaussian proxies, eta line search, distillation";

  py::register_exception<NumericalError>(mod, "NumericalError");

  mod.def("softmax", &softmax, py::arg("z"));
  mod.def("log_softmax", &log_softmax, py::arg("z"));
  mod.def("log_sum_exp", &log_sum_exp, py::arg("z"));
  mod.def("kl_categorical", &kl_categorical, py::arg("p"), py::arg("q"));
  mod.def("entropy", &entropy, py::arg("p"));
  mod.def("stein_queries", &stein_queries, py::arg("alpha"), py::arg("kl"));

  py::class_<LabeledDataset>(mod, "Dataset")
      .def_readonly("x", &LabeledDataset::x)
      .def_readonly("y", &LabeledDataset::y)
      .def_readonly("subclass", &LabeledDataset::subclass)
      .def_readonly("ids", &LabeledDataset::id)
      .def_readonly("num_classes", &LabeledDataset::num_classes)
      .def("__len__", &LabeledDataset::size)
      .def("dim", &LabeledDataset::dim)
      .def("fingerprint", &LabeledDataset::fingerprint);

  mod.def(
      "make_dataset",
      [](const std::string& preset, std::size_t n_per_subclass, std::uint64_t seed,
         SampleId id_base) {
        return generate(preset_mixture(preset), n_per_subclass, seed, id_base);
      },
      py::arg("preset"), py::arg("n_per_subclass"), py::arg("seed"), py::arg("id_base") = 0);

  py::class_<ForgetSplit>(mod, "ForgetSplit")
      .def_readonly("retain_ids", &ForgetSplit::retain_ids)
      .def_readonly("forget_ids", &ForgetSplit::forget_ids)
      .def_readonly("pi_f_global", &ForgetSplit::pi_f_global);

  mod.def(
      "make_scenario_split",
      [](const LabeledDataset& ds, const std::string& scenario, std::uint64_t seed) {
        return build_scenario(ds, parse_scenario(scenario, seed));
      },
      py::arg("ds"), py::arg("scenario"), py::arg("seed") = 0);

  py::class_<ProxyPair>(mod, "ProxyPair")
      .def_property_readonly("kind", [](const ProxyPair& p) { return to_string(p.kind); })
      .def_readonly("num_classes", &ProxyPair::num_classes)
      .def(
          "delta_m",
          [](const ProxyPair& p, const Vec& x, std::optional<SampleId> id) {
            return p.delta_m(x, id);
          },
          py::arg("x"), py::arg("id") = std::nullopt)
      .def("save", [](const ProxyPair& p, const std::string& path) { save_proxy(p, path); });

  mod.def(
      "fit_proxy",
      [](const std::string& kind, const LabeledDataset& ds, const ForgetSplit& split,
         double ridge, bool shared_sigma_from_full, bool qda_full_cov) {
        ProxyOptions opts;
        opts.ridge = ridge;
        opts.shared_sigma_from_full = shared_sigma_from_full;
        opts.qda_full_cov = qda_full_cov;
        return fit_proxy(proxy_kind_from_string(kind), ds, split, opts);
      },
      py::arg("kind"), py::arg("ds"), py::arg("split"), py::arg("ridge") = 1e-6,
      py::arg("shared_sigma_from_full") = true, py::arg("qda_full_cov") = false);
  mod.def("load_proxy", &load_proxy, py::arg("path"));

  py::class_<MlpModel>(mod, "Mlp")
      .def_static("init", &MlpModel::init, py::arg("dims"), py::arg("seed"))
      .def("forward", &MlpModel::forward, py::arg("x"))
      .def("probits", [](const MlpModel& m, const Vec& x) { return softmax(m.forward(x)); })
      .def("copy", [](const MlpModel& m) { return MlpModel(m); })
      .def_readonly("dims", &MlpModel::dims)
      .def("save", [](const MlpModel& m, const std::string& path) { save_model(m, path); });
  mod.def("load_model", &load_model, py::arg("path"));
  mod.def("arch_dims", &arch_dims, py::arg("arch"), py::arg("input_dim"), py::arg("num_classes"),
          py::arg("hidden") = 32);

  mod.def(
      "train_ce",
      [](MlpModel& m, const LabeledDataset& ds, double lr, int epochs, int batch,
         std::uint64_t seed, const std::string& optimizer) {
        const TrainTrace tr = train_ce(m, ds, make_cfg(lr, epochs, batch, seed, optimizer));
        return tr.epochs.empty() ? 0.0 : tr.epochs.back().loss;
      },
      py::arg("model"), py::arg("ds"), py::arg("lr") = 1e-3, py::arg("epochs") = 20,
      py::arg("batch") = 64, py::arg("seed") = 0, py::arg("optimizer") = "adam");

  mod.def(
      "distill",
      [](MlpModel& student, const Mat& teacher_probits, const LabeledDataset& ds, double lr,
         int epochs, int batch, std::uint64_t seed, const std::string& optimizer) {
        const TrainTrace tr =
            distill(student, teacher_probits, ds, make_cfg(lr, epochs, batch, seed, optimizer));
        return tr.epochs.empty() ? 0.0 : tr.epochs.back().loss;
      },
      py::arg("student"), py::arg("teacher_probits"), py::arg("ds"), py::arg("lr") = 1e-3,
      py::arg("epochs") = 20, py::arg("batch") = 64, py::arg("seed") = 0,
      py::arg("optimizer") = "adam");

  mod.def(
      "find_eta_max",
      [](const MlpModel& m, const ProxyPair& pair, const LabeledDataset& ds, double tol) {
        const EtaSearchResult r = find_eta_max(net_logits(m), pair, ds, tol);
        py::dict d;
        d["eta_max"] = r.eta_max;
        d["admissible"] = r.admissible;
        d["zero_bracket"] = r.zero_bracket;
        d["slope0"] = r.slope0;
        d["h_at_eta"] = r.h_at_eta;
        d["iterations"] = r.iterations;
        return d;
      },
      py::arg("model"), py::arg("pair"), py::arg("ds"), py::arg("tol") = 1e-4);

  mod.def(
      "h_empirical",
      [](const MlpModel& m, const ProxyPair& pair, const LabeledDataset& ds, double eta) {
        return h_empirical(net_logits(m), pair, ds, eta);
      },
      py::arg("model"), py::arg("pair"), py::arg("ds"), py::arg("eta"));

  mod.def(
      "unlearned_probits",
      [](const MlpModel& m, const ProxyPair& pair, const Vec& x, std::optional<SampleId> id,
         double eta) { return unlearned_probits(m.forward(x), pair, x, id, eta); },
      py::arg("model"), py::arg("pair"), py::arg("x"), py::arg("id"), py::arg("eta"));

  mod.def(
      "unlearning_targets",
      [](const MlpModel& m, const ProxyPair& pair, const LabeledDataset& ds, double eta) {
        Mat t(static_cast<Eigen::Index>(ds.size()), ds.num_classes);
        for (std::size_t i = 0; i < ds.size(); ++i) {
          const Vec x = ds.x.row(static_cast<Eigen::Index>(i)).transpose();
          t.row(static_cast<Eigen::Index>(i)) =
              unlearned_probits(m.forward(x), pair, x, ds.id[i], eta).transpose();
        }
        return t;
      },
      py::arg("model"), py::arg("pair"), py::arg("ds"), py::arg("eta"));
}
