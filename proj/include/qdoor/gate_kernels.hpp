#pragma once

#include <array>
#include <cstddef>

#include "qdoor/qcore.hpp"

namespace qdoor {

/// A gate bound to numeric values: at most 3 qubits, matrix stored inline
/// (row-major, dimension 2^arity).
struct BoundGate {
  int arity = 1;
  std::array<int, 3> qubits{0, 0, 0};
  std::array<Complex, 64> m{};
  bool is_cnot = false;

  int dim() const { return 1 << arity; }
  Complex& at(int r, int c) { return m[static_cast<std::size_t>(r * dim() + c)]; }
  Complex at(int r, int c) const { return m[static_cast<std::size_t>(r * dim() + c)]; }
};

BoundGate bind_gate(const GateSpec& g, const RealVector& params);
BoundGate bind_gate_angles(const GateSpec& g, const std::array<double, 3>& angles);
/// Wraps a dense 2^k x 2^k matrix (k <= 3) acting on `qubits`.
BoundGate dense_gate(const std::vector<int>& qubits, const ComplexMatrix& matrix);
/// Tensor product of Paulis; `code` holds two bits per qubit (0=I,1=X,2=Y,3=Z),
/// most significant pair for qubits[0].
BoundGate pauli_gate(const std::vector<int>& qubits, unsigned code);

/// Left-multiplies rows of a row-major (2^n x cols) block by the embedded gate.
/// With cols == 1 this applies the gate to a state vector.
void apply_gate(Complex* data, int n_qubits, std::size_t cols, const BoundGate& g);

inline void apply_gate(ComplexVector& state, int n_qubits, const BoundGate& g) {
  apply_gate(state.data(), n_qubits, 1, g);
}

}  // namespace qdoor
