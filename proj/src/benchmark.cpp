#include "pul/benchmark.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <thread>

#include "pul/gaussmix.hpp"
#include "pul/io_util.hpp"
#include "pul/metrics.hpp"
#include "pul/rng.hpp"
#include "pul/unlearn.hpp"

namespace pul {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

// KL of two probability vectors that tolerates hard zeros on the candidate
// side by going to +inf instead of throwing
double kl_inf_ok(const Vec& p, const Vec& q) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < p.size(); ++c) {
    if (p[c] <= 0.0) continue;
    if (q[c] <= 0.0) return kInf;
    s += p[c] * (std::log(p[c]) - std::log(q[c]));
  }
  return s > 0.0 ? s : 0.0;
}

std::string scenario_sub_key(const Scenario& sc) {
  if (const auto* c = std::get_if<ScenarioClass>(&sc)) return std::to_string(c->cls);
  if (const auto* s = std::get_if<ScenarioSubclass>(&sc))
    return std::to_string(s->cls) + "_" + std::to_string(s->sub);
  return std::to_string(std::get<ScenarioRandom>(sc).n_f);
}

json stats_block(const EpochStats& st, std::size_t epoch) {
  json b;
  b["epoch"] = epoch;
  b["kl_t"] = st.kl_t;
  b["kl_f"] = st.kl_f;
  b["acc_t"] = st.acc_t;
  b["acc_f"] = st.acc_f;
  return b;
}

json epochs_array(const TrainTrace& trace) {
  json arr = json::array();
  for (std::size_t i = 0; i < trace.epochs.size(); ++i) {
    const auto& st = trace.epochs[i];
    json rec = stats_block(st, i);
    rec["loss"] = st.loss;
    rec["seconds"] = st.seconds;
    arr.push_back(rec);
  }
  return arr;
}

json method_entry(std::uint64_t seed, const TrainTrace& trace, double seconds,
                  double retrain_seconds) {
  json e;
  e["seed"] = seed;
  const std::size_t best = select_best_epoch(trace);
  e["best"] = stats_block(trace.epochs[best], best);
  e["last"] = stats_block(trace.epochs.back(), trace.epochs.size() - 1);
  e["epochs"] = epochs_array(trace);
  e["rte"] = {{"seconds", seconds},
              {"normalized", retrain_seconds > 0.0 ? seconds / retrain_seconds : 0.0}};
  return e;
}

// one scenario x arch x seed run: every proxy method and baseline of the
// cell, sandwiched between the shared initial net and the retrain reference
json run_cell_seed(const BenchmarkPlan& plan, const BenchmarkCell& cell, std::uint64_t seed) {
  const GaussianMixtureSpec spec = preset_mixture(plan.dataset);
  const int c = spec.num_classes();
  const LabeledDataset train_ds = generate(spec, plan.n_per_subclass, mix_seed(seed, 0xDA7Aull), 0);
  // test ids live far above the training range so membership proxies treat
  // test rows as off-dataset points
  const LabeledDataset test_ds =
      generate(spec, plan.n_test_per_subclass, mix_seed(seed, 0x7E57ull), 1000000);
  const Scenario sc = parse_scenario(cell.scenario, mix_seed(seed, 0x5C40ull));
  const ForgetSplit split = build_scenario(train_ds, sc);
  const LabeledDataset forget_ds = subset_by_ids(train_ds, split.forget_ids);

  MlpModel initial = MlpModel::init(arch_dims(cell.arch, spec.d, c, plan.hidden),
                                    mix_seed(seed, 0x1417ull));
  TrainConfig cfg0 = plan.train;
  cfg0.seed = mix_seed(seed, 1);
  train_ce(initial, train_ds, cfg0);

  TrainConfig cfg_rt = plan.train;
  cfg_rt.seed = mix_seed(seed, 2);
  auto [retrained, rt_trace] = baseline(BaselineKind::Retrain, initial, train_ds, split, cfg_rt);
  const double retrain_seconds = rt_trace.epochs.empty() ? 0.0 : rt_trace.epochs.back().seconds;

  const EvalContext ev{&test_ds, &forget_ds, &retrained};
  const ProbitFn ref_probits = net_probits(retrained);

  auto net_row = [&](const MlpModel& m) {
    json row;
    row["kl_t"] = kl_to_reference(ref_probits, net_probits(m), test_ds);
    row["kl_f"] = kl_to_reference(ref_probits, net_probits(m), forget_ds);
    row["acc_t"] = net_accuracy(m, test_ds);
    row["acc_f"] = net_accuracy(m, forget_ds);
    return row;
  };

  json entry;
  entry["initial"] = net_row(initial);
  entry["retrained"] = net_row(retrained);
  entry["retrained"]["seconds"] = retrain_seconds;

  // mean KL(analytic target || net probits) over a subset; this is the
  // quantity the distillation minimizes
  auto kl_target_to_net = [&](const ProxyPair& pair, double eta, const MlpModel& net,
                              const LabeledDataset& subset) {
    return mean_over(subset.size(), [&](std::size_t i) {
      const Vec x = subset.x.row(static_cast<Eigen::Index>(i)).transpose();
      const Vec base = net.forward(x);
      const Vec tgt = unlearned_probits(initial.forward(x), pair, x, subset.id[i], eta);
      return kl_inf_ok(tgt, softmax(base));
    });
  };
  // mean KL(retrained probits || analytic target) over a subset
  auto kl_ref_to_target = [&](const ProxyPair& pair, double eta, const LabeledDataset& subset) {
    return mean_over(subset.size(), [&](std::size_t i) {
      const Vec x = subset.x.row(static_cast<Eigen::Index>(i)).transpose();
      const Vec tgt = unlearned_probits(initial.forward(x), pair, x, subset.id[i], eta);
      return kl_inf_ok(softmax(retrained.forward(x)), tgt);
    });
  };

  std::size_t method_index = 0;
  for (const ProxyKind kind : cell.proxies) {
    const std::string name = to_string(kind);
    try {
      const auto t0 = std::chrono::steady_clock::now();
      const ProxyPair pair = fit_proxy(kind, train_ds, split, plan.proxy_opts);
      const LogitFn base = [&initial](const Vec& x, std::optional<SampleId>) {
        return initial.forward(x);
      };
      double eta = 1.0;
      bool admissible = true;
      std::string bracket = "dirac";
      if (kind != ProxyKind::Dir2c) {
        // the count-blend target has no eta knob; everything else gets the
        // line-searched scale
        const EtaSearchResult res = find_eta_max(base, pair, train_ds, plan.tol);
        eta = res.eta_max;
        admissible = res.admissible;
        bracket = res.zero_bracket;
      }

      Mat targets(static_cast<Eigen::Index>(train_ds.size()), c);
      for (std::size_t i = 0; i < train_ds.size(); ++i) {
        const Vec x = train_ds.x.row(static_cast<Eigen::Index>(i)).transpose();
        targets.row(static_cast<Eigen::Index>(i)) =
            unlearned_probits(initial.forward(x), pair, x, train_ds.id[i], eta).transpose();
      }

      json target;
      target["eta_max"] = eta;
      target["admissible"] = admissible;
      target["bracket"] = bracket;
      target["kl_t"] = kl_ref_to_target(pair, eta, test_ds);
      target["kl_f"] = kl_ref_to_target(pair, eta, forget_ds);
      target["kl_net_to_proxy_before"] = kl_target_to_net(pair, eta, initial, train_ds);

      MlpModel student = initial;
      TrainConfig cfg_m = plan.train;
      cfg_m.epochs = plan.distill_epochs;
      cfg_m.seed = mix_seed(seed, 0x100 + method_index);
      const TrainTrace trace = distill(student, targets, train_ds, cfg_m, ev);
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      target["kl_net_to_proxy_after"] = kl_target_to_net(pair, eta, student, train_ds);

      json e = method_entry(seed, trace, seconds, retrain_seconds);
      e["target"] = target;
      entry[name] = std::move(e);
    } catch (const std::exception& ex) {
      entry[name] = {{"seed", seed}, {"error", ex.what()}};
    }
    ++method_index;
  }

  for (const BaselineKind kind : cell.baselines) {
    const std::string name = to_string(kind);
    try {
      TrainConfig cfg_b = plan.train;
      // the retrain method row must coincide with the reference run, so it
      // reuses that run's seed
      cfg_b.seed = kind == BaselineKind::Retrain ? cfg_rt.seed : mix_seed(seed, 0x200 + method_index);
      const auto t0 = std::chrono::steady_clock::now();
      auto [model, trace] = baseline(kind, initial, train_ds, split, cfg_b, ev);
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      entry[name] = method_entry(seed, trace, seconds, retrain_seconds);
    } catch (const std::exception& ex) {
      entry[name] = {{"seed", seed}, {"error", ex.what()}};
    }
    ++method_index;
  }
  return entry;
}

void mask_wall_clock(json& j) {
  if (j.is_object()) {
    for (auto& [k, v] : j.items()) {
      if ((k == "seconds" || k == "normalized") && v.is_number())
        v = 0.0;
      else
        mask_wall_clock(v);
    }
  } else if (j.is_array()) {
    for (auto& v : j) mask_wall_clock(v);
  }
}

const char* type_tag(const json& j) {
  if (j.is_null()) return "null";
  if (j.is_boolean()) return "bool";
  if (j.is_string()) return "str";
  if (j.is_number_float()) return "num";
  return "int";
}

void walk_layout(const json& j, const std::string& path, std::vector<std::string>& out) {
  if (j.is_object()) {
    if (j.empty()) out.push_back(path + "/{}");
    for (const auto& [k, v] : j.items()) walk_layout(v, path + "/" + k, out);
  } else if (j.is_array()) {
    out.push_back(path + "[" + std::to_string(j.size()) + "]");
    if (!j.empty()) walk_layout(j[0], path + "[0]", out);  // first element stands for all
  } else {
    out.push_back(path + ":" + type_tag(j));
  }
}
}  // namespace

void BenchmarkPlan::validate() const {
  preset_mixture(dataset);  // throws on an unknown name
  if (seeds.empty()) throw std::invalid_argument("plan: no seeds");
  if (n_per_subclass < 2 || n_test_per_subclass < 1)
    throw std::invalid_argument("plan: sample counts too small");
  if (!(tol > 0.0)) throw std::invalid_argument("plan: tol must be positive");
  if (distill_epochs < 1) throw std::invalid_argument("plan: distill epochs must be >= 1");
  if (cells.empty()) throw std::invalid_argument("plan: no cells");
  train.validate();
  for (const auto& cell : cells) {
    parse_scenario(cell.scenario, 0);
    arch_kind(cell.arch);
    if (cell.proxies.empty() && cell.baselines.empty())
      throw std::invalid_argument("plan: cell with no methods");
  }
}

BenchmarkPlan parse_plan(const std::string& text) {
  BenchmarkPlan plan;
  bool saw_plan = false;
  for (const auto& sec : parse_config(text)) {
    if (sec.name.empty()) {
      if (!sec.kv.empty())
        throw std::invalid_argument("plan: keys before the first section");
      continue;
    }
    if (sec.name == "plan") {
      if (saw_plan) throw std::invalid_argument("plan: duplicate [plan] section");
      saw_plan = true;
      for (const auto& [k, v] : sec.kv) {
        if (k == "dataset") {
          plan.dataset = v;
        } else if (k == "seeds") {
          for (const auto& tok : split(v, ' '))
            if (!tok.empty())
              plan.seeds.push_back(static_cast<std::uint64_t>(parse_int(tok, "seeds")));
        } else if (k == "n_per_subclass") {
          plan.n_per_subclass = static_cast<std::size_t>(parse_int(v, k));
        } else if (k == "n_test_per_subclass") {
          plan.n_test_per_subclass = static_cast<std::size_t>(parse_int(v, k));
        } else if (k == "hidden") {
          plan.hidden = static_cast<int>(parse_int(v, k));
        } else if (k == "tol") {
          plan.tol = parse_double(v, k);
        } else if (k == "ridge") {
          plan.proxy_opts.ridge = parse_double(v, k);
        } else if (k == "shared_sigma_from_full") {
          plan.proxy_opts.shared_sigma_from_full = parse_bool(v, k);
        } else if (k == "qda_full_cov") {
          plan.proxy_opts.qda_full_cov = parse_bool(v, k);
        } else if (k == "distill_epochs") {
          plan.distill_epochs = static_cast<int>(parse_int(v, k));
        } else {
          throw std::invalid_argument("plan: unknown key '" + k + "' in [plan]");
        }
      }
    } else if (sec.name == "train") {
      for (const auto& [k, v] : sec.kv) {
        if (k == "lr") {
          plan.train.learning_rate = parse_double(v, k);
        } else if (k == "epochs") {
          plan.train.epochs = static_cast<int>(parse_int(v, k));
        } else if (k == "batch") {
          plan.train.batch_size = static_cast<int>(parse_int(v, k));
        } else if (k == "optimizer") {
          if (v == "adam")
            plan.train.optimizer = Optimizer::Adam;
          else if (v == "sgd-momentum")
            plan.train.optimizer = Optimizer::SgdMomentum;
          else
            throw std::invalid_argument("plan: unknown optimizer '" + v + "'");
        } else if (k == "lr_decay") {
          plan.train.lr_decay = parse_double(v, k);
        } else if (k == "momentum") {
          plan.train.momentum = parse_double(v, k);
        } else if (k == "ga_epoch_cap") {
          plan.train.ga_epoch_cap = static_cast<int>(parse_int(v, k));
        } else {
          throw std::invalid_argument("plan: unknown key '" + k + "' in [train]");
        }
      }
    } else if (sec.name == "cell") {
      BenchmarkCell cell;
      for (const auto& [k, v] : sec.kv) {
        if (k == "scenario") {
          cell.scenario = v;
        } else if (k == "arch") {
          cell.arch = v;
        } else if (k == "proxies") {
          for (const auto& tok : split(v, ' '))
            if (!tok.empty()) cell.proxies.push_back(proxy_kind_from_string(tok));
        } else if (k == "baselines") {
          for (const auto& tok : split(v, ' '))
            if (!tok.empty()) cell.baselines.push_back(baseline_from_string(tok));
        } else {
          throw std::invalid_argument("plan: unknown key '" + k + "' in [cell]");
        }
      }
      if (cell.scenario.empty() || cell.arch.empty())
        throw std::invalid_argument("plan: [cell] needs scenario and arch");
      plan.cells.push_back(std::move(cell));
    } else {
      throw std::invalid_argument("plan: unknown section [" + sec.name + "]");
    }
  }
  if (!saw_plan) throw std::invalid_argument("plan: missing [plan] section");
  plan.validate();
  return plan;
}

ResultsTree run_benchmark(const BenchmarkPlan& plan, int jobs) {
  plan.validate();
  if (jobs < 1) throw std::invalid_argument("benchmark: jobs must be >= 1");

  struct Task {
    std::size_t cell = 0;
    std::size_t seed_idx = 0;
  };
  std::vector<Task> tasks;
  for (std::size_t ci = 0; ci < plan.cells.size(); ++ci)
    for (std::size_t si = 0; si < plan.seeds.size(); ++si) tasks.push_back({ci, si});

  std::vector<json> outputs(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const auto& t = tasks[i];
      try {
        outputs[i] = run_cell_seed(plan, plan.cells[t.cell], plan.seeds[t.seed_idx]);
      } catch (const std::exception& ex) {
        outputs[i] = {{"error", ex.what()}};
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(jobs),
                                                        tasks.size());
    pool.reserve(n_threads);
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // single-writer merge in plan order
  ResultsTree tree;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& cell = plan.cells[tasks[i].cell];
    const Scenario sc = parse_scenario(cell.scenario, 0);
    const std::string kind = scenario_kind(sc);
    const std::string stem = kind + "_" + cell.arch + "_raw.json";
    json& file = tree.root[plan.dataset][arch_kind(cell.arch)][stem];
    json& arch_node = file[cell.arch];
    json* bucket = &arch_node;
    if (kind == "subclass") {
      if (!arch_node.contains("meta")) {
        arch_node["meta"] = {{"dataset", plan.dataset},
                             {"scenario", kind},
                             {"arch", cell.arch},
                             {"seeds", plan.seeds},
                             {"n_per_subclass", plan.n_per_subclass}};
        arch_node["results"] = json::object();
      }
      bucket = &arch_node["results"];
    }
    (*bucket)[scenario_sub_key(sc)].push_back(outputs[i]);
  }
  return tree;
}

std::string ResultsTree::canonical() const {
  json masked = root;
  mask_wall_clock(masked);
  return masked.dump(2) + "\n";
}

std::string ResultsTree::hash() const { return to_hex(fnv1a64(canonical())); }

std::string ResultsTree::layout() const {
  json masked = root;
  mask_wall_clock(masked);
  std::vector<std::string> lines;
  walk_layout(masked, "", lines);
  std::string out;
  for (const auto& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

void ResultsTree::save(const std::string& out_dir) const {
  for (const auto& [ds, by_kind] : root.items())
    for (const auto& [kind, files] : by_kind.items())
      for (const auto& [stem, content] : files.items())
        atomic_write(out_dir + "/" + ds + "/" + kind + "/" + stem, content.dump(2) + "\n");
}

ResultsTree ResultsTree::load(const std::string& out_dir) {
  ResultsTree tree;
  if (!fs::is_directory(out_dir))
    throw std::invalid_argument("results: no such directory: " + out_dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(out_dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::invalid_argument("results: no .json files under " + out_dir);
  for (const auto& p : files) {
    const fs::path rel = fs::relative(p, out_dir);
    // expected {dataset}/{arch_kind}/{stem}.json; flatter layouts are kept
    // under their literal relative path
    std::vector<std::string> parts;
    for (const auto& comp : rel) parts.push_back(comp.string());
    json content = json::parse(read_file(p.string()));
    if (parts.size() == 3)
      tree.root[parts[0]][parts[1]][parts[2]] = std::move(content);
    else
      tree.root["."]["."][rel.string()] = std::move(content);
  }
  return tree;
}

namespace {

struct Agg {
  std::vector<double> kl_t, kl_last, kl_f, acc_t, acc_f, rte;
  std::size_t errors = 0;
};

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return pairwise_mean(v);
}

double std_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

double jnum(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number()) return std::numeric_limits<double>::quiet_NaN();
  return j[key].get<double>();
}

void collect(const json& entries, const std::string& method, Agg& agg) {
  for (const auto& e : entries) {
    if (!e.is_object() || e.contains("error")) {
      if (e.contains("error")) ++agg.errors;
      continue;
    }
    if (method == "initial" || method == "retrained") {
      agg.kl_t.push_back(jnum(e, "kl_t"));
      agg.kl_last.push_back(jnum(e, "kl_t"));
      agg.kl_f.push_back(jnum(e, "kl_f"));
      agg.acc_t.push_back(jnum(e, "acc_t"));
      agg.acc_f.push_back(jnum(e, "acc_f"));
      agg.rte.push_back(method == "retrained" ? 1.0 : 0.0);
    } else {
      agg.kl_t.push_back(jnum(e["best"], "kl_t"));
      agg.kl_last.push_back(jnum(e["last"], "kl_t"));
      agg.kl_f.push_back(jnum(e["best"], "kl_f"));
      agg.acc_t.push_back(jnum(e["best"], "acc_t"));
      agg.acc_f.push_back(jnum(e["best"], "acc_f"));
      agg.rte.push_back(e.contains("rte") ? jnum(e["rte"], "normalized")
                                          : std::numeric_limits<double>::quiet_NaN());
    }
  }
}

std::string fmt_ms(double m, double s, bool csv) {
  char buf[80];
  if (csv)
    std::snprintf(buf, sizeof buf, "%.10g,%.10g", m, s);
  else
    std::snprintf(buf, sizeof buf, "%8.3f±%-7.3f", m, s);
  return buf;
}

}  // namespace

std::string render_report(const ResultsTree& tree, const std::string& style) {
  const bool csv = style == "csv";
  if (!csv && style != "table")
    throw std::invalid_argument("report: style must be 'table' or 'csv'");
  std::string out;
  if (csv)
    out += "dataset,scenario,arch,sub_key,method,seeds,kl_t_mean,kl_t_std,kl_last_mean,"
           "kl_last_std,kl_f_mean,kl_f_std,acc_t_mean,acc_t_std,acc_f_mean,acc_f_std,"
           "rte_mean,rte_std\n";
  else
    out += "dataset    scenario   arch    sub      method      KL_t              KL_last     "
           "      KL_f              Acc_t             Acc_f             RTE\n";

  for (const auto& [ds, by_kind] : tree.root.items()) {
    for (const auto& [kind, files] : by_kind.items()) {
      for (const auto& [stem, content] : files.items()) {
        // stem is {scenario}_{arch}_raw.json
        const auto parts = split(stem, '_');
        const std::string scen = parts.size() > 1 ? parts[0] : stem;
        const std::string arch = parts.size() > 1 ? parts[1] : "?";
        for (const auto& [arch_key, node] : content.items()) {
          const json& buckets =
              node.is_object() && node.contains("results") ? node["results"] : node;
          (void)arch_key;
          for (const auto& [sub, entries] : buckets.items()) {
            if (!entries.is_array()) continue;
            // methods present across the seed entries, references first
            std::set<std::string> methods;
            for (const auto& e : entries)
              if (e.is_object())
                for (const auto& [k, v] : e.items()) {
                  (void)v;
                  if (k != "error") methods.insert(k);
                }
            std::vector<std::string> ordered;
            for (const char* lead : {"initial", "retrained"})
              if (methods.count(lead)) ordered.push_back(lead);
            for (const auto& m : methods)
              if (m != "initial" && m != "retrained") ordered.push_back(m);

            for (const auto& method : ordered) {
              Agg agg;
              json rows = json::array();
              for (const auto& e : entries)
                if (e.is_object() && e.contains(method)) rows.push_back(e[method]);
              collect(rows, method, agg);
              const std::size_t n = agg.kl_t.size();
              if (csv) {
                char head[256];
                std::snprintf(head, sizeof head, "%s,%s,%s,%s,%s,%zu,", ds.c_str(), scen.c_str(),
                              arch.c_str(), sub.c_str(), method.c_str(), n);
                out += head;
                out += fmt_ms(mean_of(agg.kl_t), std_of(agg.kl_t), true) + ",";
                out += fmt_ms(mean_of(agg.kl_last), std_of(agg.kl_last), true) + ",";
                out += fmt_ms(mean_of(agg.kl_f), std_of(agg.kl_f), true) + ",";
                out += fmt_ms(mean_of(agg.acc_t), std_of(agg.acc_t), true) + ",";
                out += fmt_ms(mean_of(agg.acc_f), std_of(agg.acc_f), true) + ",";
                out += fmt_ms(mean_of(agg.rte), std_of(agg.rte), true) + "\n";
              } else {
                char head[256];
                std::snprintf(head, sizeof head, "%-10s %-10s %-7s %-8s %-11s ", ds.c_str(),
                              scen.c_str(), arch.c_str(), sub.c_str(), method.c_str());
                out += head;
                out += fmt_ms(mean_of(agg.kl_t), std_of(agg.kl_t), false) + " ";
                out += fmt_ms(mean_of(agg.kl_last), std_of(agg.kl_last), false) + " ";
                out += fmt_ms(mean_of(agg.kl_f), std_of(agg.kl_f), false) + " ";
                out += fmt_ms(mean_of(agg.acc_t), std_of(agg.acc_t), false) + " ";
                out += fmt_ms(mean_of(agg.acc_f), std_of(agg.acc_f), false) + " ";
                out += fmt_ms(mean_of(agg.rte), std_of(agg.rte), false) + "\n";
              }
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace pul
