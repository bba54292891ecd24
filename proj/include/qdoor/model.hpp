#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "qdoor/simulator.hpp"
#include "qdoor/synth.hpp"

namespace qdoor {

/// How a hijacked encoding is realised: replacing the angle layer, or
/// appending a 1-qubit rotation layer after an encoding it cannot mask.
enum class HijackMode { None, Replace, Append };

/// A trainable segment, optionally preceded by an IQP re-encoding of the input.
struct Stage {
  bool reupload = false;
  Circuit body;  // n_params equals the model's parameter count
};

struct Model {
  std::string name;
  int n_qubits = 0;
  EncodingKind encoding = EncodingKind::Angle;
  std::vector<Stage> stages;
  MeasureSpec measure;
  RealVector params;

  HijackMode hijack = HijackMode::None;
  RealVector hijack_input;  // fixed input the hijack layer encodes
  bool encoding_mismatch = false;

  int n_params() const { return static_cast<int>(params.size()); }
  int n_classes() const { return measure.n_classes; }
  int feature_length() const { return encoding_feature_length(encoding, n_qubits); }
  /// Trainable gates of every stage, concatenated (encodings omitted).
  Circuit body() const;
  /// Encoding layer for x, including any hijack layer.
  Circuit encoding_circuit(const RealVector& x) const;
  /// Full circuit f(x): encoding, then each stage.
  Circuit circuit_for(const RealVector& x) const;
  void validate() const;
};

/// 2 qubits, amplitude encoding, six blocks of IQP + 3x(U3 layer, CNOT ring).
Model build_iris2_model();
/// 8 qubits, angle encoding, two blocks of RX/RY/RZ layers + CRX ring.
Model build_mnist_model(int n_classes);

/// -log(max(probs[label], 1e-12)). Throws LabelError for a bad label.
double cross_entropy(const RealVector& probs, int label);

/// Ideal class probabilities of f(x).
RealVector predict_probs(const Model& m, const RealVector& x);

/// A synthesized variant of the model: one fixed-angle native circuit per stage.
struct ModelCandidate {
  std::vector<Circuit> segments;
  std::vector<int> choice;  // candidate index per piece (pieces flattened over stages)
  int n_2qg = 0;
  int depth = 0;
  double residual = 0.0;  // largest piece residual
  bool over_budget = false;
};

struct ModelSynthesis {
  double epsilon = 0.0;
  std::vector<std::vector<Piece>> stage_pieces;
  std::vector<std::vector<SynthesizedCandidate>> piece_candidates;  // flattened over stages
  std::vector<ModelCandidate> candidates;
  bool over_budget = false;
};

/// Synthesizes every stage body at each epsilon; candidates are the
/// lexicographic product of piece candidates, truncated to n_syn.
std::vector<ModelSynthesis> synthesize_model(const Model& m, const SynthesisBudget& budget,
                                             const std::vector<double>& eps_list, int n_syn);

/// Circuit of a candidate on input x: encoding, then stages with the
/// synthesized segments in place of the trainable bodies.
Circuit candidate_circuit_for(const Model& m, const ModelCandidate& cand, const RealVector& x);
RealVector predict_candidate_probs(const Model& m, const ModelCandidate& cand, const RealVector& x);

/// Frozen per-piece corrections dU = S * P^dagger, inserted after the last gate
/// of each piece, so running f with them reproduces the synthesized circuit.
struct Insertion {
  int stage = 0;
  std::size_t after_gate = 0;  // index into the stage body
  BoundGate gate;
};

struct SynthesisSnapshot {
  int budget_index = 0;
  int candidate_index = 0;
  double epsilon = 0.0;
  int epoch = 0;
  std::vector<Insertion> insertions;
};

std::vector<SynthesisSnapshot> make_snapshots(const ModelSynthesis& syn, int budget_index, int epoch);
/// Snapshot with every correction equal to the identity (for tests).
SynthesisSnapshot identity_snapshot(const Model& m, int piece_width = 3);

/// Program for f (or f-hat when a snapshot is given) on input x.
Program model_program(const Model& m, const RealVector& x, const SynthesisSnapshot* snap = nullptr);
RealVector predict_probs(const Model& m, const RealVector& x, const SynthesisSnapshot& snap);

void write_model(std::ostream& os, const Model& m);
Model read_model(std::istream& is);
void save_model(const std::string& path, const Model& m);
Model load_model(const std::string& path);

}  // namespace qdoor
