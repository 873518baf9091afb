// command line surface for the proxy unlearning pipeline. Every subcommand
// takes --seed and is deterministic under it; file outputs go through
// atomic_write. Exit codes: 0 ok, 1 user error, 2 numerical failure.
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pul/benchmark.hpp"
#include "pul/dataset.hpp"
#include "pul/gaussmix.hpp"
#include "pul/io_util.hpp"
#include "pul/metrics.hpp"
#include "pul/mlp.hpp"
#include "pul/proxy.hpp"
#include "pul/rng.hpp"
#include "pul/simplex.hpp"
#include "pul/train.hpp"
#include "pul/unlearn.hpp"

namespace {

using namespace pul;
using nlohmann::json;

// net init and scenario draws are salted so that --seed N gives distinct
// streams to each consumer; benchmark runs use the same constants
constexpr std::uint64_t kInitSalt = 0x1417ull;
constexpr std::uint64_t kScenarioSalt = 0x5C40ull;

// --out default: PUL_OUT_DIR/<name> when the variable is set, ./<name> else
std::string out_path(const std::string& cli_value, const std::string& fallback) {
  if (!cli_value.empty()) return cli_value;
  if (const char* dir = std::getenv("PUL_OUT_DIR"); dir && *dir)
    return std::string(dir) + "/" + fallback;
  return fallback;
}

TrainConfig train_flags(CLI::App* cmd, std::string& optimizer) {
  TrainConfig cfg;
  cmd->add_option("--lr", cfg.learning_rate, "learning rate")->capture_default_str();
  cmd->add_option("--epochs", cfg.epochs, "training epochs")->capture_default_str();
  cmd->add_option("--batch", cfg.batch_size, "minibatch size")->capture_default_str();
  cmd->add_option("--optimizer", optimizer, "adam | sgd-momentum")->capture_default_str();
  cmd->add_option("--lr-decay", cfg.lr_decay, "per-epoch learning rate factor")
      ->capture_default_str();
  cmd->add_option("--momentum", cfg.momentum, "sgd momentum")->capture_default_str();
  return cfg;
}

void apply_optimizer(TrainConfig& cfg, const std::string& name) {
  if (name == "adam")
    cfg.optimizer = Optimizer::Adam;
  else if (name == "sgd-momentum")
    cfg.optimizer = Optimizer::SgdMomentum;
  else
    throw std::invalid_argument("unknown optimizer '" + name + "'");
}

// targets file: header, one "id p0 .. pC-1" row per sample, trailer
void save_targets(const std::string& path, const std::vector<SampleId>& ids, const Mat& probs,
                  double eta) {
  std::ostringstream os;
  os << "targets v1\n";
  os << "rows " << probs.rows() << " classes " << probs.cols() << " eta " << fmt_g17(eta) << "\n";
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    os << ids[static_cast<std::size_t>(i)];
    for (Eigen::Index c = 0; c < probs.cols(); ++c) os << ' ' << fmt_g17(probs(i, c));
    os << '\n';
  }
  os << "end\n";
  atomic_write(path, os.str());
}

std::pair<std::vector<SampleId>, Mat> load_targets(const std::string& path) {
  std::istringstream is(read_file(path));
  std::string word, v;
  std::getline(is, word);
  if (word != "targets v1") throw std::invalid_argument(path + ": not a targets v1 file");
  Eigen::Index rows = 0, cols = 0;
  double eta = 0.0;
  is >> word >> rows >> v >> cols >> word >> eta;
  if (rows < 1 || cols < 2) throw std::invalid_argument(path + ": bad targets header");
  std::vector<SampleId> ids(static_cast<std::size_t>(rows));
  Mat probs(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    is >> ids[static_cast<std::size_t>(i)];
    for (Eigen::Index c = 0; c < cols; ++c) is >> probs(i, c);
  }
  is >> word;
  if (!is || word != "end") throw std::invalid_argument(path + ": truncated targets file");
  return {std::move(ids), std::move(probs)};
}

json eta_result_json(const EtaSearchResult& res) {
  json j;
  j["eta_max"] = res.eta_max;
  j["admissible"] = res.admissible;
  j["zero_bracket"] = res.zero_bracket;
  j["slope0"] = res.slope0;
  j["h_at_eta"] = res.h_at_eta;
  j["iterations"] = res.iterations;
  return j;
}

Mat teacher_targets(const MlpModel& net, const ProxyPair& pair, const LabeledDataset& ds,
                    double eta) {
  Mat t(static_cast<Eigen::Index>(ds.size()), ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Vec x = ds.x.row(static_cast<Eigen::Index>(i)).transpose();
    t.row(static_cast<Eigen::Index>(i)) =
        unlearned_probits(net.forward(x), pair, x, ds.id[i], eta).transpose();
  }
  return t;
}

int run(int argc, char** argv) {
  CLI::App app{"proxy-based unlearning toolkit"};
  app.require_subcommand(1);

  // ---------------- gen-data ----------------
  auto* gen = app.add_subcommand("gen-data", "draw a labeled dataset from a preset mixture");
  std::string g_dataset = "blobs2", g_out;
  std::size_t g_n = 500;
  std::uint64_t g_seed = 0;
  std::int64_t g_id_base = 0;
  gen->add_option("--dataset", g_dataset, "preset mixture name")->capture_default_str();
  gen->add_option("--n", g_n, "samples per subclass cell")->capture_default_str();
  gen->add_option("--seed", g_seed, "rng seed")->capture_default_str();
  gen->add_option("--id-base", g_id_base, "first sample id")->capture_default_str();
  gen->add_option("--out", g_out, "output path (default <dataset>.ds)");
  gen->callback([&] {
    const auto spec = preset_mixture(g_dataset);
    const LabeledDataset ds = generate(spec, g_n, g_seed, g_id_base);
    const std::string path = out_path(g_out, g_dataset + ".ds");
    save_dataset(ds, path);
    std::cout << "wrote " << path << ": " << ds.size() << " rows, dim " << ds.dim() << ", "
              << ds.num_classes << " classes, fingerprint " << ds.fingerprint() << "\n";
  });

  // ---------------- train ----------------
  auto* tr = app.add_subcommand("train", "train a classifier with cross entropy");
  std::string t_data, t_arch = "mlp1", t_out, t_trace, t_init, t_opt = "adam";
  int t_hidden = 32;
  std::uint64_t t_seed = 0;
  TrainConfig t_cfg = train_flags(tr, t_opt);
  tr->add_option("--data", t_data, "training dataset")->required();
  tr->add_option("--arch", t_arch, "linear | mlp1 | mlp2")->capture_default_str();
  tr->add_option("--hidden", t_hidden, "hidden width for mlp archs")->capture_default_str();
  tr->add_option("--init", t_init, "checkpoint to continue from instead of a fresh init");
  tr->add_option("--seed", t_seed, "rng seed")->capture_default_str();
  tr->add_option("--out", t_out, "checkpoint path (default model.ckpt)");
  tr->add_option("--trace", t_trace, "write per-epoch stats as json");
  tr->callback([&] {
    apply_optimizer(t_cfg, t_opt);
    t_cfg.seed = t_seed;
    const LabeledDataset ds = load_dataset(t_data);
    MlpModel m = t_init.empty()
                     ? MlpModel::init(arch_dims(t_arch, ds.dim(), ds.num_classes, t_hidden),
                                      mix_seed(t_seed, kInitSalt))
                     : load_model(t_init);
    const TrainTrace trace = train_ce(m, ds, t_cfg);
    const std::string path = out_path(t_out, "model.ckpt");
    save_model(m, path);
    if (!t_trace.empty()) atomic_write(t_trace, trace_json(trace));
    if (trace.epochs.empty())
      std::cout << "wrote " << path << ": no epochs run\n";
    else
      std::cout << "wrote " << path << ": " << trace.epochs.size() << " epochs, final loss "
                << fmt_g17(trace.epochs.back().loss) << "\n";
  });

  // ---------------- fit-proxy ----------------
  auto* fp = app.add_subcommand("fit-proxy", "fit a proxy posterior pair for a forget scenario");
  std::string f_data, f_scenario, f_kind = "lda", f_out;
  std::uint64_t f_seed = 0;
  ProxyOptions f_opts;
  fp->add_option("--data", f_data, "training dataset")->required();
  fp->add_option("--scenario", f_scenario, "class:K | subclass:K:S | random:N")->required();
  fp->add_option("--kind", f_kind, "lda | qda | lda-mix | qda-mix | lda-2c | dir | dir-2c")
      ->capture_default_str();
  fp->add_option("--ridge", f_opts.ridge, "covariance ridge strength")->capture_default_str();
  fp->add_option("--shared-sigma-from-full", f_opts.shared_sigma_from_full,
                 "retain model reuses the covariance fitted on the full set")
      ->capture_default_str();
  fp->add_flag("--qda-full-cov", f_opts.qda_full_cov, "full per-class covariances for qda kinds");
  fp->add_option("--seed", f_seed, "rng seed (feeds random scenarios)")->capture_default_str();
  fp->add_option("--out", f_out, "proxy path (default proxy.txt)");
  fp->callback([&] {
    const LabeledDataset ds = load_dataset(f_data);
    const ForgetSplit split =
        build_scenario(ds, parse_scenario(f_scenario, mix_seed(f_seed, kScenarioSalt)));
    const ProxyPair pair = fit_proxy(proxy_kind_from_string(f_kind), ds, split, f_opts);
    const std::string path = out_path(f_out, "proxy.txt");
    save_proxy(pair, path);
    std::cout << "wrote " << path << ": kind " << to_string(pair.kind) << ", "
              << pair.num_classes << " classes, " << split.forget_ids.size()
              << " forget rows\n";
  });

  // ---------------- eta-search ----------------
  auto* es = app.add_subcommand("eta-search",
                                "largest admissible unlearning scale for a net and proxy");
  std::string e_data, e_model, e_proxy, e_curve;
  double e_tol = 1e-4;
  std::uint64_t e_seed = 0;
  es->add_option("--data", e_data, "dataset the shift curve averages over")->required();
  es->add_option("--model", e_model, "net checkpoint")->required();
  es->add_option("--proxy", e_proxy, "fitted proxy pair")->required();
  es->add_option("--tol", e_tol, "bracket tolerance")->capture_default_str();
  es->add_option("--seed", e_seed, "rng seed (unused, accepted for uniformity)")
      ->capture_default_str();
  es->add_option("--curve", e_curve, "write probed (eta, h) pairs as csv");
  es->callback([&] {
    const LabeledDataset ds = load_dataset(e_data);
    const MlpModel m = load_model(e_model);
    const ProxyPair pair = load_proxy(e_proxy);
    const LogitFn logits = [&m](const Vec& x, std::optional<SampleId>) { return m.forward(x); };
    const EtaSearchResult res = find_eta_max(logits, pair, ds, e_tol);
    json j = eta_result_json(res);
    if (!pair.dirac()) {
      const AdmissibilityReport adm = check_admissibility(logits, pair, ds);
      j["moment_gap"] = {{"kl_to_retain", adm.kl_to_retain},
                         {"kl_to_full", adm.kl_to_full},
                         {"gap", adm.gap},
                         {"holds", adm.holds},
                         {"support_violations", adm.support_violations}};
    }
    if (!e_curve.empty()) {
      auto samples = res.h_samples;
      std::sort(samples.begin(), samples.end());
      std::string csv = "eta,h\n";
      for (const auto& [eta, h] : samples)
        csv += fmt_g17(eta) + "," + fmt_g17(h) + "\n";
      atomic_write(e_curve, csv);
    }
    std::cout << j.dump(2) << "\n";
  });

  // ---------------- unlearn ----------------
  auto* ul = app.add_subcommand(
      "unlearn", "per-sample unlearned probits of a net under a proxy, at eta_max by default");
  std::string u_data, u_model, u_proxy, u_out, u_truth_dataset, u_scenario, u_report_data;
  double u_tol = 1e-4;
  std::optional<double> u_eta;
  std::uint64_t u_seed = 0;
  bool u_report = false;
  ul->add_option("--data", u_data, "rows to compute targets for")->required();
  ul->add_option("--model", u_model, "net checkpoint")->required();
  ul->add_option("--proxy", u_proxy, "fitted proxy pair")->required();
  ul->add_option("--eta", u_eta, "fixed scale; omit to line-search eta_max");
  ul->add_option("--tol", u_tol, "line search tolerance")->capture_default_str();
  ul->add_option("--seed", u_seed, "rng seed (feeds random scenarios)")->capture_default_str();
  ul->add_option("--out", u_out, "targets path (default targets.txt)");
  ul->add_flag("--report", u_report,
               "print divergence bound terms against the ground-truth retain posterior");
  ul->add_option("--truth-dataset", u_truth_dataset, "preset name behind --report");
  ul->add_option("--scenario", u_scenario, "forget scenario behind --report");
  ul->add_option("--report-data", u_report_data, "rows the report averages over (default --data)");
  ul->callback([&] {
    const LabeledDataset ds = load_dataset(u_data);
    const MlpModel m = load_model(u_model);
    const ProxyPair pair = load_proxy(u_proxy);
    const LogitFn logits = [&m](const Vec& x, std::optional<SampleId>) { return m.forward(x); };
    double eta;
    if (u_eta) {
      eta = *u_eta;
    } else if (pair.kind == ProxyKind::Dir2c) {
      eta = 1.0;  // the count blend has no scale knob
    } else {
      eta = find_eta_max(logits, pair, ds, u_tol).eta_max;
    }
    const Mat targets = teacher_targets(m, pair, ds, eta);
    const std::string path = out_path(u_out, "targets.txt");
    save_targets(path, ds.id, targets, eta);
    std::cout << "wrote " << path << ": " << targets.rows() << " rows at eta "
              << fmt_g17(eta) << "\n";
    if (u_report) {
      if (u_truth_dataset.empty() || u_scenario.empty())
        throw std::invalid_argument("--report needs --truth-dataset and --scenario");
      const auto spec = preset_mixture(u_truth_dataset);
      const Scenario sc = parse_scenario(u_scenario, mix_seed(u_seed, kScenarioSalt));
      const auto truth = true_model_for(spec, sc);
      const TruePosterior reference(truth, TruePosterior::View::Retain);
      const LabeledDataset rows = u_report_data.empty() ? ds : load_dataset(u_report_data);
      const BoundReport rep = bound_report(reference, logits, pair, rows, eta, truth.get());
      std::cout << bound_report_json(rep) << "\n";
    }
  });

  // ---------------- distill ----------------
  auto* di = app.add_subcommand("distill", "fit a student net to saved probit targets");
  std::string d_data, d_model, d_targets, d_out, d_trace, d_opt = "adam";
  std::uint64_t d_seed = 0;
  TrainConfig d_cfg = train_flags(di, d_opt);
  di->add_option("--data", d_data, "rows behind the targets")->required();
  di->add_option("--model", d_model, "student init checkpoint")->required();
  di->add_option("--targets", d_targets, "targets file from `unlearn`")->required();
  di->add_option("--seed", d_seed, "rng seed")->capture_default_str();
  di->add_option("--out", d_out, "student checkpoint path (default student.ckpt)");
  di->add_option("--trace", d_trace, "write per-epoch stats as json");
  di->callback([&] {
    apply_optimizer(d_cfg, d_opt);
    d_cfg.seed = d_seed;
    const LabeledDataset ds = load_dataset(d_data);
    MlpModel student = load_model(d_model);
    auto [ids, targets] = load_targets(d_targets);
    if (ids.size() != ds.size())
      throw std::invalid_argument("targets row count does not match the dataset");
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] != ds.id[i])
        throw std::invalid_argument("targets ids do not match the dataset row order");
    const TrainTrace trace = distill(student, targets, ds, d_cfg);
    const std::string path = out_path(d_out, "student.ckpt");
    save_model(student, path);
    if (!d_trace.empty()) atomic_write(d_trace, trace_json(trace));
    if (trace.epochs.empty())
      std::cout << "wrote " << path << ": no epochs run\n";
    else
      std::cout << "wrote " << path << ": " << trace.epochs.size() << " epochs, final loss "
                << fmt_g17(trace.epochs.back().loss) << "\n";
  });

  // ---------------- baseline ----------------
  auto* bl = app.add_subcommand("baseline", "run a reference unlearning method");
  std::string b_data, b_model, b_scenario, b_method = "ft", b_out, b_trace, b_opt = "adam";
  std::uint64_t b_seed = 0;
  TrainConfig b_cfg = train_flags(bl, b_opt);
  bl->add_option("--data", b_data, "full training dataset")->required();
  bl->add_option("--model", b_model, "initial net checkpoint")->required();
  bl->add_option("--scenario", b_scenario, "forget scenario")->required();
  bl->add_option("--method", b_method, "ft | ga | ga+ft | rl+ft | retrain")
      ->capture_default_str();
  bl->add_option("--seed", b_seed, "rng seed")->capture_default_str();
  bl->add_option("--out", b_out, "output checkpoint path (default <method>.ckpt)");
  bl->add_option("--trace", b_trace, "write per-epoch stats as json");
  bl->callback([&] {
    apply_optimizer(b_cfg, b_opt);
    b_cfg.seed = b_seed;
    const LabeledDataset ds = load_dataset(b_data);
    const MlpModel initial = load_model(b_model);
    const ForgetSplit split =
        build_scenario(ds, parse_scenario(b_scenario, mix_seed(b_seed, kScenarioSalt)));
    const BaselineKind kind = baseline_from_string(b_method);
    auto [model, trace] = baseline(kind, initial, ds, split, b_cfg);
    const std::string path = out_path(b_out, b_method + ".ckpt");
    save_model(model, path);
    if (!b_trace.empty()) atomic_write(b_trace, trace_json(trace));
    if (trace.epochs.empty())
      std::cout << "wrote " << path << ": no epochs run\n";
    else
      std::cout << "wrote " << path << ": " << trace.epochs.size() << " epochs, final loss "
                << fmt_g17(trace.epochs.back().loss) << "\n";
  });

  // ---------------- benchmark ----------------
  auto* bm = app.add_subcommand("benchmark", "run a full plan and save the results tree");
  std::string m_config, m_out;
  int m_jobs = 1;
  std::uint64_t m_seed = 0;
  bm->add_option("--config", m_config, "plan file")->required();
  bm->add_option("--jobs", m_jobs, "parallel cell-seed runs")->capture_default_str();
  bm->add_option("--seed", m_seed, "rng seed (plan seeds take precedence; accepted for uniformity)")
      ->capture_default_str();
  bm->add_option("--out", m_out, "results directory (default results)");
  bm->callback([&] {
    const BenchmarkPlan plan = parse_plan(read_file(m_config));
    const ResultsTree tree = run_benchmark(plan, m_jobs);
    const std::string dir = out_path(m_out, "results");
    tree.save(dir);
    std::cout << "wrote " << dir << "\nresults hash " << tree.hash() << "\n";
  });

  // ---------------- report ----------------
  auto* rp = app.add_subcommand("report", "aggregate a saved results tree");
  std::string r_dir, r_style = "table";
  std::uint64_t r_seed = 0;
  rp->add_option("--results", r_dir, "results directory")->required();
  rp->add_option("--style", r_style, "table | csv | layout | hash")->capture_default_str();
  rp->add_option("--seed", r_seed, "rng seed (unused, accepted for uniformity)")
      ->capture_default_str();
  rp->callback([&] {
    const ResultsTree tree = ResultsTree::load(r_dir);
    if (r_style == "layout")
      std::cout << tree.layout();
    else if (r_style == "hash")
      std::cout << tree.hash() << "\n";
    else
      std::cout << render_report(tree, r_style);
  });

  // ---------------- stein ----------------
  auto* st = app.add_subcommand(
      "stein", "expected queries an optimal membership attacker needs at error level alpha");
  double s_alpha = 0.0, s_kl = 0.0;
  std::uint64_t s_seed = 0;
  st->add_option("--alpha", s_alpha, "attacker error probability, in (0, 0.5)")->required();
  st->add_option("--kl", s_kl, "kl divergence between the two model laws")->required();
  st->add_option("--seed", s_seed, "rng seed (unused, accepted for uniformity)")
      ->capture_default_str();
  st->callback([&] { std::cout << stein_queries(s_alpha, s_kl) << "\n"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const pul::NumericalError& ex) {
    std::cerr << "numerical error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
}
