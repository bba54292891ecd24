#pragma once

#include <cstdint>
#include <numbers>
#include <vector>

#include "qdoor/train.hpp"

namespace qdoor {

struct TriggerSpec {
  int feature_index = 7;
  double trigger_value = std::numbers::pi;
};

/// Trigger on the last feature of a `dim`-feature input.
TriggerSpec default_trigger(int dim);

struct PoisonPlan {
  double ratio = 0.08;
  int target_class = 0;
  TriggerSpec trigger;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Copy of x with the trigger feature overwritten.
RealVector embed_trigger(const RealVector& x, const TriggerSpec& t);

/// floor(ratio * N) samples drawn without replacement, triggered and
/// relabelled to the target class.
PoisonSet build_poisoned_dataset(const Dataset& d, const PoisonPlan& plan);

/// Rows of `a` followed by rows of `b`.
Dataset concat(const Dataset& a, const Dataset& b);

/// Clean-objective training on the training set plus its poisoned copies.
TrainResult train_back_baseline(const Model& model, const Dataset& train_set, const PoisonPlan& plan,
                                const TrainConfig& cfg, const NoiseModel& noise = NoiseModel::ideal());

/// Training sample of `target_class` the clean model is most confident about.
RealVector select_qtrojan_target(const Model& clean, const Dataset& train_set, int target_class);

/// Hijacks the encoding so every input is treated as `fixed_target_input`.
/// Angle models get a replacement encoding; other encodings get an appended
/// rotation layer and `encoding_mismatch` set.
Model qtrojan_inject(const Model& model, const RealVector& fixed_target_input);

}  // namespace qdoor
