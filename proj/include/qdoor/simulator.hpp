#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qdoor/gate_kernels.hpp"
#include "qdoor/qcore.hpp"

namespace qdoor {

enum class EncodingKind { Angle, Amplitude, IQP };

std::string_view encoding_name(EncodingKind kind);
EncodingKind parse_encoding(std::string_view name);
/// Feature length each encoding needs on n qubits: n, 2^n, n.
int encoding_feature_length(EncodingKind kind, int n_qubits);

struct StateVector {
  int n_qubits = 0;
  ComplexVector amplitudes;

  /// |0...0> on n qubits.
  static StateVector zero(int n_qubits);
  /// Wraps amplitudes; the length must be a power of two.
  static StateVector from_amplitudes(ComplexVector amplitudes);
  RealVector probabilities() const;
};

/// Parameter-free circuit that maps |0...0> to the encoded input.
Circuit encode(const RealVector& features, EncodingKind kind, int n_qubits);

/// Ring of ordered pairs (i, (i+1) mod n); empty for n < 2.
std::vector<std::pair<int, int>> ring_pairs(int n_qubits);

/// Gates with all angles resolved, ready for the kernels.
using Program = std::vector<BoundGate>;
Program bind_program(const Circuit& c, const RealVector& params);
void run_program(ComplexVector& state, int n_qubits, const Program& prog);

StateVector run_ideal(const Circuit& c, const RealVector& params, const StateVector& input);

struct NoiseModel {
  double p1 = 0.0;
  double p2 = 0.0;
  double p_readout = 0.0;
  std::string label = "ideal";

  static NoiseModel ideal();
  static NoiseModel preset(const std::string& name);  // ideal | mel | cam
  /// Parses `p1=... p2=... p_readout=...` lines ('#' comments allowed).
  static NoiseModel parse(const std::string& text, const std::string& label = "custom");
  static NoiseModel load(const std::string& path);

  void validate() const;
  bool is_ideal() const { return p1 == 0.0 && p2 == 0.0 && p_readout == 0.0; }
};

/// Trajectory-averaged basis-state probabilities. Trajectory t draws from its
/// own generator seeded with seed + t; results are summed in trajectory order.
RealVector run_noisy(const Circuit& c, const RealVector& params, const StateVector& input,
                     const NoiseModel& noise, int trajectories, std::uint64_t seed);
RealVector run_program_noisy(const Program& prog, const StateVector& input, const NoiseModel& noise,
                             int trajectories, std::uint64_t seed);

/// Classical bit-flip channel with probability p on every qubit.
void apply_readout_flips(RealVector& probs, int n_qubits, double p);

struct MeasureSpec {
  int n_classes = 2;
  std::vector<int> measured_qubits{0};

  /// First ceil(log2 n_classes) qubits.
  static MeasureSpec for_classes(int n_classes);
  void validate() const;
};

struct ClassProbs {
  RealVector probs;
  bool degenerate = false;
};

/// Marginal outcome probabilities over the measured qubits (first measured
/// qubit is the most significant outcome bit).
RealVector marginal_probs(const RealVector& state_probs, const std::vector<int>& measured_qubits);

ClassProbs class_probs(const RealVector& state_probs, const MeasureSpec& spec);
/// Same bucketing starting from marginal outcome probabilities.
ClassProbs class_probs_from_marginal(const RealVector& marginal, int n_classes);

}  // namespace qdoor
