#include "pul/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "pul/rng.hpp"
#include "pul/simplex.hpp"

namespace pul {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

Mat one_hot(const std::vector<int>& y, int c) {
  Mat t = Mat::Zero(static_cast<Eigen::Index>(y.size()), c);
  for (std::size_t i = 0; i < y.size(); ++i) t(static_cast<Eigen::Index>(i), y[i]) = 1.0;
  return t;
}

struct OptState {
  std::vector<Mat> mw, vw, uw;
  std::vector<Vec> mb, vb, ub;
  long long steps = 0;

  explicit OptState(const MlpModel& m) {
    for (std::size_t l = 0; l < m.w.size(); ++l) {
      mw.push_back(Mat::Zero(m.w[l].rows(), m.w[l].cols()));
      vw.push_back(Mat::Zero(m.w[l].rows(), m.w[l].cols()));
      uw.push_back(Mat::Zero(m.w[l].rows(), m.w[l].cols()));
      mb.push_back(Vec::Zero(m.b[l].size()));
      vb.push_back(Vec::Zero(m.b[l].size()));
      ub.push_back(Vec::Zero(m.b[l].size()));
    }
  }

  void step(MlpModel& m, const std::vector<Mat>& gw, const std::vector<Vec>& gb, double lr,
            const TrainConfig& cfg) {
    if (cfg.optimizer == Optimizer::Adam) {
      ++steps;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(steps));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(steps));
      for (std::size_t l = 0; l < m.w.size(); ++l) {
        mw[l] = cfg.beta1 * mw[l] + (1.0 - cfg.beta1) * gw[l];
        vw[l] = cfg.beta2 * vw[l] + (1.0 - cfg.beta2) * gw[l].cwiseProduct(gw[l]);
        m.w[l].array() -= lr * (mw[l].array() / c1) / ((vw[l].array() / c2).sqrt() + cfg.eps);
        mb[l] = cfg.beta1 * mb[l] + (1.0 - cfg.beta1) * gb[l];
        vb[l] = cfg.beta2 * vb[l] + (1.0 - cfg.beta2) * gb[l].cwiseProduct(gb[l]);
        m.b[l].array() -= lr * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + cfg.eps);
      }
    } else {
      for (std::size_t l = 0; l < m.w.size(); ++l) {
        uw[l] = cfg.momentum * uw[l] + gw[l];
        ub[l] = cfg.momentum * ub[l] + gb[l];
        m.w[l] -= lr * uw[l];
        m.b[l] -= lr * ub[l];
      }
    }
  }
};

// mean of KL(softmax(ref row) || softmax(cand row)) over matched rows
double mean_net_kl(const Mat& ref_logits, const Mat& cand_logits) {
  const auto n = static_cast<std::size_t>(ref_logits.rows());
  return mean_over(n, [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Vec lr = log_softmax(ref_logits.row(r).transpose());
    const Vec lc = log_softmax(cand_logits.row(r).transpose());
    double s = 0.0;
    for (Eigen::Index c = 0; c < lr.size(); ++c) s += std::exp(lr[c]) * (lr[c] - lc[c]);
    return s > 0.0 ? s : 0.0;
  });
}

double mean_ce(const Mat& logits, const std::vector<int>& y) {
  return mean_over(y.size(), [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    return -log_softmax(logits.row(r).transpose())[y[i]];
  });
}

double accuracy(const Mat& logits, const std::vector<int>& y) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    Eigen::Index arg = 0;
    logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
    if (static_cast<int>(arg) == y[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(y.size());
}

void eval_epoch(const MlpModel& model, const EvalContext& ev, EpochStats& st) {
  st.acc_t = st.acc_f = st.kl_t = st.kl_f = kNan;
  if (ev.t_set && ev.t_set->size() > 0) {
    const Mat logits = model.forward_batch(ev.t_set->x);
    st.acc_t = accuracy(logits, ev.t_set->y);
    st.kl_t = ev.reference ? mean_net_kl(ev.reference->forward_batch(ev.t_set->x), logits)
                           : mean_ce(logits, ev.t_set->y);
  }
  if (ev.f_set && ev.f_set->size() > 0) {
    const Mat logits = model.forward_batch(ev.f_set->x);
    st.acc_f = accuracy(logits, ev.f_set->y);
    st.kl_f = ev.reference ? mean_net_kl(ev.reference->forward_batch(ev.f_set->x), logits)
                           : mean_ce(logits, ev.f_set->y);
  }
}

// shared minibatch loop; targets are per-row probability vectors
TrainTrace sgd_loop(MlpModel& model, const Mat& xs, const Mat& targets, const TrainConfig& cfg,
                    const EvalContext& eval, LossKind kind) {
  model.validate();
  cfg.validate();
  const auto n = xs.rows();
  if (n < 1) throw std::invalid_argument("training: empty training set");
  if (targets.rows() != n) throw std::invalid_argument("training: target row count mismatch");
  if (xs.cols() != model.input_dim() || targets.cols() != model.num_classes())
    throw std::invalid_argument("training: shape mismatch with the model");

  TrainTrace trace;
  trace.kl_is_reference = eval.reference != nullptr;
  Rng rng(mix_seed(cfg.seed, 0x747261696e6b6579ull));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  OptState opt(model);
  std::vector<Mat> gw;
  std::vector<Vec> gb;
  const auto t0 = std::chrono::steady_clock::now();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.below(i));
      std::swap(order[i - 1], order[j]);
    }
    const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(epoch));
    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Mat bx(bs, xs.cols()), bt(bs, targets.cols());
      for (Eigen::Index r = 0; r < bs; ++r) {
        bx.row(r) = xs.row(order[static_cast<std::size_t>(start + r)]);
        bt.row(r) = targets.row(order[static_cast<std::size_t>(start + r)]);
      }
      const double batch_loss = loss_and_grad(model, bx, bt, kind, gw, gb);
      loss_sum += batch_loss * static_cast<double>(bs);
      opt.step(model, gw, gb, lr, cfg);
    }
    EpochStats st;
    st.loss = loss_sum / static_cast<double>(n);
    if (!std::isfinite(st.loss))
      throw NumericalError("training diverged at epoch " + std::to_string(epoch));
    eval_epoch(model, eval, st);
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trace.epochs.push_back(st);
  }
  return trace;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("train config: negative learning rate");
  if (epochs < 0) throw std::invalid_argument("train config: negative epochs");
  if (batch_size < 1) throw std::invalid_argument("train config: batch size must be >= 1");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0))
    throw std::invalid_argument("train config: lr decay outside (0, 1]");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("train config: momentum outside [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("train config: adam betas outside [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("train config: adam eps must be positive");
  if (ga_epoch_cap < 1) throw std::invalid_argument("train config: ascent epoch cap must be >= 1");
}

double loss_and_grad(const MlpModel& m, const Mat& x, const Mat& targets, LossKind kind,
                     std::vector<Mat>& gw, std::vector<Vec>& gb) {
  const Eigen::Index n = x.rows();
  const std::size_t layers = m.w.size();

  std::vector<Mat> acts;  // a_0 = x, then post-activation outputs
  std::vector<Mat> zs;    // pre-activations
  acts.reserve(layers + 1);
  zs.reserve(layers);
  acts.push_back(x);
  for (std::size_t l = 0; l < layers; ++l) {
    Mat z = (acts.back() * m.w[l].transpose()).rowwise() + m.b[l].transpose();
    zs.push_back(z);
    acts.push_back(l + 1 < layers ? Mat(z.cwiseMax(0.0)) : z);
  }
  const Mat& logits = acts.back();

  double loss = 0.0;
  Mat dlogits(n, logits.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec lsm = log_softmax(logits.row(i).transpose());
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      const double t = targets(i, c);
      if (t > 0.0) {
        loss -= t * lsm[c];
        if (kind == LossKind::KlToTargets) loss += t * std::log(t);
      }
      dlogits(i, c) = std::exp(lsm[c]) - t;
    }
  }
  const double scale = 1.0 / static_cast<double>(n);
  loss *= scale;
  if (kind == LossKind::NegatedCrossEntropy) {
    loss = -loss;
    dlogits *= -scale;
  } else {
    dlogits *= scale;
  }

  gw.assign(layers, Mat());
  gb.assign(layers, Vec());
  Mat delta = dlogits;
  for (std::size_t l = layers; l-- > 0;) {
    gw[l] = delta.transpose() * acts[l];
    gb[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      Mat mask = (zs[l - 1].array() > 0.0).cast<double>().matrix();
      delta = (delta * m.w[l]).cwiseProduct(mask);
    }
  }
  return loss;
}

TrainTrace train_ce(MlpModel& model, const LabeledDataset& ds, const TrainConfig& cfg,
                    const EvalContext& eval) {
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.y[i] < 0 || ds.y[i] >= model.num_classes())
      throw std::invalid_argument("training: label out of range at row " + std::to_string(i));
  return sgd_loop(model, ds.x, one_hot(ds.y, model.num_classes()), cfg, eval,
                  LossKind::CrossEntropy);
}

TrainTrace distill(MlpModel& student, const Mat& teacher_probits, const LabeledDataset& ds,
                   const TrainConfig& cfg, const EvalContext& eval) {
  if (teacher_probits.rows() != static_cast<Eigen::Index>(ds.size()))
    throw std::invalid_argument("distillation: one target row per dataset row required");
  for (Eigen::Index i = 0; i < teacher_probits.rows(); ++i)
    if (!is_prob_vec(teacher_probits.row(i).transpose()))
      throw std::invalid_argument("distillation: target row " + std::to_string(i) +
                                  " is not a probability vector");
  return sgd_loop(student, ds.x, teacher_probits, cfg, eval, LossKind::KlToTargets);
}

std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::Ft: return "ft";
    case BaselineKind::Ga: return "ga";
    case BaselineKind::GaFt: return "ga+ft";
    case BaselineKind::RlFt: return "rl+ft";
    case BaselineKind::Retrain: return "retrain";
  }
  throw std::logic_error("unreachable baseline kind");
}

BaselineKind baseline_from_string(const std::string& s) {
  if (s == "ft") return BaselineKind::Ft;
  if (s == "ga") return BaselineKind::Ga;
  if (s == "ga+ft") return BaselineKind::GaFt;
  if (s == "rl+ft") return BaselineKind::RlFt;
  if (s == "retrain") return BaselineKind::Retrain;
  throw std::invalid_argument("unknown baseline '" + s + "'");
}

std::pair<MlpModel, TrainTrace> baseline(BaselineKind kind, const MlpModel& initial,
                                         const LabeledDataset& ds, const ForgetSplit& split,
                                         const TrainConfig& cfg, const EvalContext& eval) {
  cfg.validate();
  switch (kind) {
    case BaselineKind::Ft: {
      MlpModel m = initial;
      const LabeledDataset retain = subset_by_ids(ds, split.retain_ids);
      TrainTrace tr = train_ce(m, retain, cfg, eval);
      return {std::move(m), std::move(tr)};
    }
    case BaselineKind::Ga: {
      MlpModel m = initial;
      const LabeledDataset forget = subset_by_ids(ds, split.forget_ids);
      TrainConfig ga = cfg;
      ga.learning_rate = 0.1 * cfg.learning_rate;
      ga.epochs = std::min(cfg.epochs, cfg.ga_epoch_cap);
      TrainTrace tr = sgd_loop(m, forget.x, one_hot(forget.y, m.num_classes()), ga, eval,
                               LossKind::NegatedCrossEntropy);
      return {std::move(m), std::move(tr)};
    }
    case BaselineKind::GaFt: {
      MlpModel m = initial;
      const LabeledDataset forget = subset_by_ids(ds, split.forget_ids);
      TrainConfig ga = cfg;
      ga.learning_rate = 0.1 * cfg.learning_rate;
      ga.epochs = 1;
      TrainTrace tr = sgd_loop(m, forget.x, one_hot(forget.y, m.num_classes()), ga, eval,
                               LossKind::NegatedCrossEntropy);
      const LabeledDataset retain = subset_by_ids(ds, split.retain_ids);
      TrainTrace ft = train_ce(m, retain, cfg, eval);
      const double offset = tr.epochs.empty() ? 0.0 : tr.epochs.back().seconds;
      for (auto& st : ft.epochs) {
        st.seconds += offset;
        tr.epochs.push_back(st);
      }
      tr.kl_is_reference = ft.kl_is_reference;
      return {std::move(m), std::move(tr)};
    }
    case BaselineKind::RlFt: {
      MlpModel m = initial;
      LabeledDataset relabeled = ds;
      Rng rng(mix_seed(cfg.seed, 0x72656c6162656c73ull));
      const int c = m.num_classes();
      if (c < 2) throw std::invalid_argument("relabeling needs at least two classes");
      for (std::size_t i = 0; i < relabeled.size(); ++i) {
        if (!split.is_forget(relabeled.id[i])) continue;
        const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(c - 1)));
        relabeled.y[i] = k >= relabeled.y[i] ? k + 1 : k;
      }
      TrainTrace tr = train_ce(m, relabeled, cfg, eval);
      return {std::move(m), std::move(tr)};
    }
    case BaselineKind::Retrain: {
      MlpModel m = MlpModel::init(initial.dims, mix_seed(cfg.seed, 0x7265747261696e00ull));
      const LabeledDataset retain = subset_by_ids(ds, split.retain_ids);
      TrainTrace tr = train_ce(m, retain, cfg, eval);
      return {std::move(m), std::move(tr)};
    }
  }
  throw std::logic_error("unreachable baseline kind");
}

std::size_t select_best_epoch(const TrainTrace& trace) {
  if (trace.epochs.empty()) throw std::invalid_argument("best epoch: empty trace");
  if (!trace.kl_is_reference)
    throw std::invalid_argument(
        "best epoch: kl_f holds cross-entropy stand-ins, supply a reference model");
  std::size_t best = 0;
  for (std::size_t i = 0; i < trace.epochs.size(); ++i) {
    if (!std::isfinite(trace.epochs[i].kl_f))
      throw std::invalid_argument("best epoch: kl_f missing at epoch " + std::to_string(i));
    if (trace.epochs[i].kl_f < trace.epochs[best].kl_f) best = i;
  }
  return best;
}

std::string trace_json(const TrainTrace& trace) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < trace.epochs.size(); ++i) {
    const auto& st = trace.epochs[i];
    nlohmann::json rec;
    rec["epoch"] = i;
    rec["loss"] = st.loss;
    rec["acc_t"] = st.acc_t;
    rec["acc_f"] = st.acc_f;
    rec["kl_t"] = st.kl_t;
    rec["kl_f"] = st.kl_f;
    rec["kl_is_reference"] = trace.kl_is_reference;
    rec["seconds"] = st.seconds;
    arr.push_back(rec);
  }
  return arr.dump(2) + "\n";
}

}  // namespace pul
