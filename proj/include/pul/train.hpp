#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pul/dataset.hpp"
#include "pul/mlp.hpp"

namespace pul {

enum class Optimizer { SgdMomentum, Adam };
enum class LossKind { CrossEntropy, KlToTargets, NegatedCrossEntropy };

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 20;  // 0 allowed: no update, empty trace
  int batch_size = 64;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::Adam;
  double momentum = 0.9;  // sgd-momentum only
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double lr_decay = 0.95;  // multiplicative, applied per epoch
  LossKind loss = LossKind::CrossEntropy;
  // gradient ascent guard: ascent epochs beyond this destroy the model
  // without telling us anything new, so the GA baseline stops here
  int ga_epoch_cap = 5;

  void validate() const;
};

struct EpochStats {
  double loss = 0.0;
  double acc_t = 0.0, acc_f = 0.0;
  double kl_t = 0.0, kl_f = 0.0;
  double seconds = 0.0;  // cumulative wall clock since training started
};

struct TrainTrace {
  std::vector<EpochStats> epochs;
  // true when kl_t/kl_f measure divergence from a supplied reference net;
  // false means they hold cross-entropy stand-ins and must not drive
  // best-epoch selection
  bool kl_is_reference = false;
};

// optional per-epoch evaluation hooks; null members skip their metrics
struct EvalContext {
  const LabeledDataset* t_set = nullptr;  // rows behind acc_t / kl_t
  const LabeledDataset* f_set = nullptr;  // rows behind acc_f / kl_f
  const MlpModel* reference = nullptr;    // retrained net; enables real KLs
};

// loss over one batch and its parameter gradients, exposed so tests can
// difference it; targets are per-row probability vectors
double loss_and_grad(const MlpModel& m, const Mat& x, const Mat& targets, LossKind kind,
                     std::vector<Mat>& gw, std::vector<Vec>& gb);

// cross-entropy training in place; deterministic given cfg.seed
TrainTrace train_ce(MlpModel& model, const LabeledDataset& ds, const TrainConfig& cfg,
                    const EvalContext& eval = {});

// KL(teacher || student) distillation in place; teacher_probits row i is the
// target for ds row i, zeros allowed
TrainTrace distill(MlpModel& student, const Mat& teacher_probits, const LabeledDataset& ds,
                   const TrainConfig& cfg, const EvalContext& eval = {});

enum class BaselineKind { Ft, Ga, GaFt, RlFt, Retrain };
std::string to_string(BaselineKind k);
BaselineKind baseline_from_string(const std::string& s);

// the unlearning baselines: retain fine-tuning, gradient ascent on the
// forget set, ascent then fine-tuning, random relabeling of the forget set
// then fine-tuning, and retraining from scratch on the retain set
std::pair<MlpModel, TrainTrace> baseline(BaselineKind kind, const MlpModel& initial,
                                         const LabeledDataset& ds, const ForgetSplit& split,
                                         const TrainConfig& cfg, const EvalContext& eval = {});

// argmin of kl_f, ties to the earliest epoch; requires reference-backed KLs
std::size_t select_best_epoch(const TrainTrace& trace);

std::string trace_json(const TrainTrace& trace);

}  // namespace pul
