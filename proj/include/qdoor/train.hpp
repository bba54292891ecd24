#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "qdoor/data.hpp"
#include "qdoor/model.hpp"

namespace qdoor {

enum class LossKind { Clean, Indiscriminate, Targeted, Backdoor };

std::string_view loss_kind_name(LossKind k);
LossKind parse_loss_kind(std::string_view name);

struct TrainConfig {
  double lambda = 0.25;
  double alpha = 5.0;
  double beta = 1.0;
  std::vector<double> eps_budgets{1e-2, 1e-3};
  int n_syn = 4;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int epochs = 30;
  int batch_size = 16;
  int resynth_period = 5;
  std::uint64_t seed = 0;
  int target_class = 0;       // Targeted: the class whose accuracy is attacked
  double init_scale = 0.1;    // initial angles ~ N(0, init_scale^2)
  bool init_params = true;    // false keeps the model's current parameters
  int trajectories = 1;       // per-sample noise trajectories when training under noise
  SynthesisBudget synth;  // eps and seed are set per resynthesis

  void validate(LossKind kind) const;
};

/// Triggered copies of selected training samples. `data.labels` holds the
/// target class; `source_labels` the original classes.
struct PoisonSet {
  Dataset data;
  std::vector<int> source_labels;
  std::vector<int> indices;
  int target_class = 0;
  bool empty() const { return data.size() == 0; }
};

struct Batch {
  std::vector<RealVector> x;
  std::vector<int> y;
  std::vector<RealVector> poison_x;
  std::vector<int> poison_y;       // original class
  std::vector<int> poison_target;  // attacker's class
};

struct LossBreakdown {
  double clean = 0.0;
  double malicious = 0.0;
  double total = 0.0;
};

/// Loss of the batch under `kind`. Malicious terms evaluate f-hat through the
/// frozen snapshot corrections.
double qdoor_loss(const Model& model, const std::vector<SynthesisSnapshot>& snapshots, const Batch& batch,
                  LossKind kind, const TrainConfig& cfg, const NoiseModel& noise = NoiseModel::ideal());

/// Loss and its parameter-shift gradient (chained through the loss).
LossBreakdown qdoor_loss_grad(const Model& model, const std::vector<SynthesisSnapshot>& snapshots,
                              const Batch& batch, LossKind kind, const TrainConfig& cfg, const NoiseModel& noise,
                              RealVector* grad);

enum class ShiftRule { TwoTerm, FourTerm, FiniteDifference };

/// Per-slot rule: the shift rules apply to slots read by exactly one gate
/// (two-term for RX/RY/RZ/U2/U3 angles, four-term for CRX); other slots use
/// central differences.
std::vector<ShiftRule> shift_rules(const Circuit& c);

/// A loss that is a smooth function of quantities linear in the circuit's
/// density matrix (probabilities); the shift rule is applied to those.
struct ShiftObjective {
  std::function<RealVector(const RealVector&)> expectations;
  std::function<double(const RealVector&)> loss;
  std::function<RealVector(const RealVector&)> loss_grad;  // d loss / d expectations
  std::vector<ShiftRule> rules;
};

RealVector parameter_shift_grad(const ShiftObjective& obj, const RealVector& params);
/// Central finite difference of obj.loss(obj.expectations(.)).
RealVector finite_difference_grad(const ShiftObjective& obj, const RealVector& params, double h = 1e-4);

struct AdamState {
  RealVector m;
  RealVector v;
  int t = 0;
};

/// Adam (0.9, 0.999, 1e-8) with decoupled weight decay and bias correction.
RealVector adam_step(const RealVector& params, const RealVector& grads, AdamState& state, double lr,
                     double weight_decay);

struct HistoryRow {
  int epoch = 0;
  double clean_loss = 0.0;
  double malicious_loss = 0.0;
  double total = 0.0;
  bool snapshot_refreshed = false;
};

struct TrainResult {
  Model model;
  std::vector<SynthesisSnapshot> snapshots;
  std::vector<HistoryRow> history;
  std::vector<std::string> warnings;
};

TrainResult train(const Model& model, const Dataset& train_set, const PoisonSet& poison_set, LossKind kind,
                  const TrainConfig& cfg, const NoiseModel& noise = NoiseModel::ideal());

void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& rows);

}  // namespace qdoor
