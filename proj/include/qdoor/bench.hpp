#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qdoor/attacks.hpp"

namespace qdoor {

struct EvalConfig {
  NoiseModel noise = NoiseModel::ideal();
  int shots = 0;           // 0: decide from exact probabilities
  int trajectories = 32;   // noise trajectories per sample
  std::vector<double> eps_list{1e-2, 1e-3};
  std::vector<std::string> schemes{"clean", "qdoor"};
  std::uint64_t seed = 0;
  int n_syn = 4;
  SynthesisBudget synth;

  void validate() const;
};

/// What is being evaluated: the uncompiled model, or one synthesized candidate.
struct Target {
  const Model* model = nullptr;
  const ModelCandidate* candidate = nullptr;
};

/// Class probabilities of one input under the configured noise (no shots).
RealVector eval_class_probs(const Target& t, const RealVector& x, const EvalConfig& cfg, std::uint64_t seed);
/// Predicted class; with shots > 0 decided from sampled frequencies.
int eval_predict(const Target& t, const RealVector& x, const EvalConfig& cfg, std::uint64_t seed);

/// Accuracy on clean samples. `only_class` / `exclude_class` (>= 0) restrict
/// the samples counted.
double evaluate_cda(const Target& t, const Dataset& test, const EvalConfig& cfg, int only_class = -1,
                    int exclude_class = -1);
/// Fraction of triggered samples (true class != y_t) predicted as y_t.
double evaluate_asr(const Target& t, const Dataset& test, const TriggerSpec& trigger, int target_class,
                    const EvalConfig& cfg);

struct ReportRow {
  std::string scheme;
  std::string stage;  // "uncompiled" or "eps"
  std::optional<double> epsilon;
  int candidate_id = -1;
  double cda = 0.0;
  std::optional<double> asr;
  int n_2qg = 0;
  int depth = 0;
  std::string noise;
  std::optional<double> target_acc;
  std::optional<double> other_acc;
  std::string status = "ok";
};

struct Report {
  std::vector<ReportRow> rows;

  void write_csv(std::ostream& os) const;
  /// Per (scheme, stage, epsilon) mean/min/max of CDA and ASR.
  std::string summary_json() const;
};

Report read_report_csv(std::istream& is);

/// Rows for one model: uncompiled, then every candidate at every epsilon.
/// ASR is filled when `trigger` is given; target/other accuracy when
/// `targeted_class` >= 0.
std::vector<ReportRow> evaluate_scheme(const std::string& scheme, const Model& model, const Dataset& test,
                                       const EvalConfig& cfg, const std::optional<TriggerSpec>& trigger,
                                       int target_class, int targeted_class = -1);

struct ExperimentResult {
  Report report;
  std::vector<std::pair<std::string, Model>> models;
  std::vector<std::string> warnings;
};

/// Trains every requested scheme on `train_set` starting from `model`, then
/// evaluates each one on `test_set`.
ExperimentResult run_experiment(LossKind kind, const Model& model, const Dataset& train_set, const Dataset& test_set,
                                const EvalConfig& eval, const TrainConfig& train_cfg, const PoisonPlan& plan);

struct SweepPoint {
  double epsilon = 0.0;
  double mean_asr = 0.0;
  double mean_cda = 0.0;
  double min_asr = 0.0;
  double max_asr = 0.0;
  int n_candidates = 0;
  int n_2qg = 0;
};

std::vector<SweepPoint> activation_sweep(const Model& model, const std::vector<double>& eps_grid,
                                         const Dataset& test, const TriggerSpec& trigger, int target_class,
                                         const EvalConfig& cfg);

void write_sweep_csv(std::ostream& os, const std::vector<SweepPoint>& pts);
std::vector<SweepPoint> read_sweep_csv(std::istream& is);

/// Writes whitespace-separated "x y" series files into `dir`; returns the paths.
std::vector<std::string> write_plot_series(const std::string& dir, const Report& report);
std::vector<std::string> write_plot_series(const std::string& dir, const std::vector<SweepPoint>& sweep);
std::vector<std::string> write_plot_series(const std::string& dir, const std::vector<HistoryRow>& history);

}  // namespace qdoor
