#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "qdoor/errors.hpp"

namespace qdoor {

using Complex = std::complex<double>;

/// Dense complex matrix, row-major. Qubit 0 is the most significant bit of a
/// basis-state index; for a gate, its first listed qubit is the most
/// significant bit of the gate-local index.
template <typename Scalar>
using DenseMatrix =
    Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ComplexMatrix = DenseMatrix<double>;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr int kMaxDenseQubits = 10;

enum class GateKind { U2, U3, RX, RY, RZ, CNOT, CRX, H, X, Toffoli };

int gate_arity(GateKind kind);
int gate_angle_count(GateKind kind);
std::string_view gate_name(GateKind kind);
std::optional<GateKind> parse_gate_kind(std::string_view name);

/// One gate of a circuit program. Angles come either from slots of a shared
/// parameter vector or from literal values; a gate uses one source for all of
/// its angles.
struct GateSpec {
  GateKind kind = GateKind::H;
  std::vector<int> qubits;
  std::vector<int> param_slots;
  std::vector<double> fixed_params;

  static GateSpec plain(GateKind kind, std::vector<int> qubits);
  /// Consecutive slots first_slot, first_slot+1, ... for each angle.
  static GateSpec parametric(GateKind kind, std::vector<int> qubits, int first_slot);
  static GateSpec fixed(GateKind kind, std::vector<int> qubits, std::vector<double> angles);

  int arity() const { return gate_arity(kind); }
  bool is_parametric() const { return !param_slots.empty(); }

  /// Throws CircuitError when the gate is malformed.
  void validate() const;

  bool operator==(const GateSpec&) const = default;
};

/// Angles of `g` with slots resolved against `params`.
std::array<double, 3> bind_angles(const GateSpec& g, const RealVector& params);

class Circuit {
 public:
  Circuit() = default;
  explicit Circuit(int n_qubits, int n_params = 0);

  int n_qubits() const { return n_qubits_; }
  int n_params() const { return n_params_; }
  const std::vector<GateSpec>& gates() const { return gates_; }
  std::size_t size() const { return gates_.size(); }
  bool empty() const { return gates_.empty(); }

  /// Reserves `count` new parameter slots and returns the first one.
  int allocate_params(int count);
  void set_n_params(int n_params);

  /// Appends a gate after checking qubit and slot bounds.
  Circuit& add(GateSpec gate);
  /// Appends every gate of `other`, shifting its parameter slots by `slot_offset`.
  Circuit& append(const Circuit& other, int slot_offset = 0);

  bool operator==(const Circuit&) const = default;

 private:
  int n_qubits_ = 0;
  int n_params_ = 0;
  std::vector<GateSpec> gates_;
};

/// Set of gate kinds a target device executes natively.
class NativeGateSet {
 public:
  NativeGateSet();  // {U3, CNOT}
  explicit NativeGateSet(std::set<GateKind> kinds);
  bool contains(GateKind kind) const { return kinds_.count(kind) != 0; }
  const std::set<GateKind>& kinds() const { return kinds_; }

 private:
  std::set<GateKind> kinds_;
};

/// 2^arity unitary of `kind` evaluated at the given angles.
ComplexMatrix gate_matrix(GateKind kind, const std::array<double, 3>& angles);

ComplexMatrix gate_unitary(const GateSpec& g, const RealVector& params);

/// Product of all gate unitaries in program order on the full 2^n space.
ComplexMatrix circuit_unitary(const Circuit& c, const RealVector& params);

int count_two_qubit_gates(const Circuit& c);

/// Length of the longest chain of gates that pairwise share a qubit.
int circuit_depth(const Circuit& c);

/// Fixed-angle circuit implementing the inverse of `c` at `params`.
Circuit inverse_circuit(const Circuit& c, const RealVector& params);

/// Copy of `c` where every parametric angle is replaced by its bound value.
Circuit bind_circuit(const Circuit& c, const RealVector& params);

bool is_unitary(const ComplexMatrix& m, double tol);

/// Normalized Hilbert-Schmidt residual sqrt(1 - |Tr(u^dagger v)|^2 / d^2).
///
/// Computed from the phase-aligned Frobenius gap s = ||e^{i phi} u - v||^2 / (2d),
/// which equals 1 - |Tr(u^dagger v)|/d for unitary arguments; the residual is
/// then sqrt(s (2 - s)). This avoids the cancellation floor of the literal form.
template <typename DerivedA, typename DerivedB>
double hs_residual(const Eigen::MatrixBase<DerivedA>& u, const Eigen::MatrixBase<DerivedB>& v) {
  if (u.rows() != u.cols() || v.rows() != v.cols() || u.rows() != v.rows()) {
    throw ShapeError("hs_residual: dimension mismatch (" + std::to_string(u.rows()) + "x" +
                     std::to_string(u.cols()) + " vs " + std::to_string(v.rows()) + "x" +
                     std::to_string(v.cols()) + ")");
  }
  const double d = static_cast<double>(u.rows());
  if (d == 0) return 0.0;
  const Complex tau = u.conjugate().cwiseProduct(v).sum();
  const double mag = std::abs(tau);
  if (mag == 0.0) return 1.0;
  const Complex phase = tau / mag;
  const double s = (u * phase - v).squaredNorm() / (2.0 * d);
  const double f = s * (2.0 - s);
  if (f <= 0.0) return 0.0;
  if (f >= 1.0) return 1.0;
  return std::sqrt(f);
}

}  // namespace qdoor
