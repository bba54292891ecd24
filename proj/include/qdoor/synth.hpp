#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "qdoor/qcore.hpp"

namespace qdoor {

/// A run of consecutive gates acting on at most `piece_width` qubits.
struct Piece {
  std::vector<int> qubits;  // sorted; qubits[0] is the local MSB
  ComplexMatrix target;
  int position = 0;
  std::size_t first_gate = 0;  // gate range [first_gate, end_gate) in the source circuit
  std::size_t end_gate = 0;
};

struct SynthesisBudget {
  double epsilon = 1e-2;
  int max_blocks = 8;   // CNOT blocks per piece
  int multistart = 8;   // instantiation restarts
  std::uint64_t seed = 0;
  int piece_width = 3;
  int beam_width = 36;  // parents expanded per depth
  int max_iters = 500;  // optimizer iterations per start

  void validate() const;
};

struct SynthesizedCandidate {
  Circuit circuit;  // U3 (parametric) and CNOT only
  int n_2qg = 0;
  double residual = 0.0;
  RealVector instantiated_params;
  bool over_budget = false;
  std::vector<int> choice;                // per-piece candidate index (recombined results)
  std::vector<std::size_t> segment_ends;  // gate index one past each piece
};

struct InstantiateResult {
  RealVector params;
  double residual = 1.0;
};

/// Greedy left-to-right grouping. Throws PartitionError for a gate wider than
/// the piece width.
std::vector<Piece> partition_circuit(const Circuit& c, const RealVector& params, int piece_width = 3);

/// Fits the free U3 angles of `structure` to `target` (BFGS, analytic gradient,
/// multistart). Start 0 uses `warm_start` when given.
InstantiateResult instantiate_block(const Circuit& structure, const ComplexMatrix& target,
                                    const SynthesisBudget& budget,
                                    const std::optional<RealVector>& warm_start = std::nullopt);

/// U3 on every qubit, then per block CNOT(c,t), U3(c), U3(t).
Circuit block_structure(int n_qubits, const std::vector<std::pair<int, int>>& cnots);

/// Layered search; returns every accepted structure at the shallowest accepting
/// depth. Candidates are flagged over_budget when max_blocks is exhausted.
std::vector<SynthesizedCandidate> search_piece(const ComplexMatrix& target, const NativeGateSet& native,
                                               const SynthesisBudget& budget);
/// One search serving several budgets at once (instantiations are shared).
/// Result i corresponds to eps_list[i].
std::vector<std::vector<SynthesizedCandidate>> search_piece_multi(const ComplexMatrix& target,
                                                                  const NativeGateSet& native,
                                                                  const SynthesisBudget& budget,
                                                                  const std::vector<double>& eps_list);

/// Maps chosen piece circuits back to global qubits and concatenates them.
/// `reference` (optional) is the original full unitary for the residual.
SynthesizedCandidate recombine(const std::vector<Piece>& pieces,
                               const std::vector<SynthesizedCandidate>& choices, int n_qubits,
                               const ComplexMatrix* reference = nullptr);

struct SynthesisResult {
  double epsilon = 0.0;
  std::vector<Piece> pieces;
  std::vector<std::vector<SynthesizedCandidate>> piece_candidates;
  std::vector<SynthesizedCandidate> candidates;
  bool over_budget = false;
};

/// Full pipeline for several budgets; pieces are partitioned once and every
/// piece is searched once.
std::vector<SynthesisResult> synthesize_multi(const Circuit& c, const RealVector& params,
                                              const SynthesisBudget& budget,
                                              const std::vector<double>& eps_list, int n_syn_cap,
                                              bool whole_residual = true);
SynthesisResult synthesize_detailed(const Circuit& c, const RealVector& params, const SynthesisBudget& budget,
                                    int n_syn_cap);
std::vector<SynthesizedCandidate> synthesize(const Circuit& c, const RealVector& params,
                                             const SynthesisBudget& budget, int n_syn_cap);

struct SweepRow {
  double epsilon = 0.0;
  double min_value = 0.0;
  double mean_value = 0.0;
  double max_value = 0.0;
  int n_2qg = 0;
  int candidate_count = 0;
};

std::vector<SweepRow> epsilon_sweep(const Circuit& c, const RealVector& params, const std::vector<double>& eps_list,
                                    const std::function<double(const Circuit&)>& evaluator,
                                    const SynthesisBudget& budget, int n_syn_cap);

}  // namespace qdoor
