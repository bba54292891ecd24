#include "qdoor/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace qdoor {

TriggerSpec default_trigger(int dim) { return {dim - 1, std::numbers::pi}; }

void PoisonPlan::validate() const {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw AttackError("poison ratio must lie in [0,1]");
  if (target_class < 0) throw AttackError("target class must be >= 0");
}

RealVector embed_trigger(const RealVector& x, const TriggerSpec& t) {
  if (t.feature_index < 0 || t.feature_index >= x.size()) {
    throw AttackError("trigger index " + std::to_string(t.feature_index) + " outside a " +
                      std::to_string(x.size()) + "-feature input");
  }
  RealVector out = x;
  out(t.feature_index) = t.trigger_value;
  return out;
}

PoisonSet build_poisoned_dataset(const Dataset& d, const PoisonPlan& plan) {
  plan.validate();
  if (plan.target_class >= d.n_classes) {
    throw AttackError("target class " + std::to_string(plan.target_class) + " not in a " +
                      std::to_string(d.n_classes) + "-class dataset");
  }
  if (plan.trigger.feature_index < 0 || plan.trigger.feature_index >= d.dim()) {
    throw AttackError("trigger index outside the feature dimension");
  }
  const auto n = static_cast<std::size_t>(d.size());
  const auto k = static_cast<std::size_t>(std::floor(plan.ratio * static_cast<double>(n)));
  if (plan.ratio > 0.0 && k == 0) throw AttackError("poison ratio selects no samples");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(plan.seed);
  // partial Fisher-Yates: the first k entries are a uniform draw without replacement
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);

  PoisonSet p;
  p.target_class = plan.target_class;
  p.indices = idx;
  p.data.name = d.name + "-poison";
  p.data.n_classes = d.n_classes;
  p.data.range_lo = d.range_lo;
  p.data.range_hi = d.range_hi;
  p.data.features.resize(static_cast<Eigen::Index>(k), d.dim());
  for (std::size_t i = 0; i < k; ++i) {
    p.data.features.row(static_cast<Eigen::Index>(i)) = embed_trigger(d.sample(idx[i]), plan.trigger).transpose();
    p.data.labels.push_back(plan.target_class);
    p.source_labels.push_back(d.labels[static_cast<std::size_t>(idx[i])]);
  }
  return p;
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (b.size() == 0) return a;
  if (a.dim() != b.dim()) throw ShapeError("attacks", "cannot concatenate datasets of different widths");
  Dataset out = a;
  out.features.resize(a.size() + b.size(), a.dim());
  out.features << a.features, b.features;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.n_classes = std::max(a.n_classes, b.n_classes);
  return out;
}

TrainResult train_back_baseline(const Model& model, const Dataset& train_set, const PoisonPlan& plan,
                                const TrainConfig& cfg, const NoiseModel& noise) {
  const PoisonSet p = build_poisoned_dataset(train_set, plan);
  return train(model, concat(train_set, p.data), PoisonSet{}, LossKind::Clean, cfg, noise);
}

RealVector select_qtrojan_target(const Model& clean, const Dataset& train_set, int target_class) {
  int best = -1;
  double best_p = -1.0;
  for (int i = 0; i < train_set.size(); ++i) {
    if (train_set.labels[static_cast<std::size_t>(i)] != target_class) continue;
    const double p = predict_probs(clean, train_set.sample(i))(target_class);
    if (p > best_p) {
      best_p = p;
      best = i;
    }
  }
  if (best < 0) throw AttackError("no training sample of class " + std::to_string(target_class));
  return train_set.sample(best);
}

Model qtrojan_inject(const Model& model, const RealVector& fixed_target_input) {
  if (fixed_target_input.size() != model.feature_length()) {
    throw AttackError("qtrojan target input has " + std::to_string(fixed_target_input.size()) +
                      " features, model expects " + std::to_string(model.feature_length()));
  }
  Model out = model;
  out.hijack_input = fixed_target_input;
  if (model.encoding == EncodingKind::Angle) {
    out.hijack = HijackMode::Replace;
    out.encoding_mismatch = false;
  } else {
    out.hijack = HijackMode::Append;
    out.encoding_mismatch = true;
  }
  out.name = model.name + "-qtrojan";
  return out;
}

}  // namespace qdoor
