#include "qdoor/qcore.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qdoor/gate_kernels.hpp"

namespace qdoor {

namespace {

constexpr Complex kI{0.0, 1.0};

void fill_matrix(GateKind kind, const std::array<double, 3>& a, BoundGate& g) {
  g.arity = gate_arity(kind);
  g.is_cnot = kind == GateKind::CNOT;
  g.m.fill(Complex{0.0, 0.0});
  auto u3 = [&](double theta, double phi, double lambda) {
    const double c = std::cos(theta / 2), s = std::sin(theta / 2);
    g.at(0, 0) = c;
    g.at(0, 1) = -std::polar(1.0, lambda) * s;
    g.at(1, 0) = std::polar(1.0, phi) * s;
    g.at(1, 1) = std::polar(1.0, phi + lambda) * c;
  };
  switch (kind) {
    case GateKind::U3:
      u3(a[0], a[1], a[2]);
      break;
    case GateKind::U2:
      u3(std::numbers::pi / 2, a[0], a[1]);
      break;
    case GateKind::RX: {
      const double c = std::cos(a[0] / 2), s = std::sin(a[0] / 2);
      g.at(0, 0) = c;
      g.at(0, 1) = -kI * s;
      g.at(1, 0) = -kI * s;
      g.at(1, 1) = c;
      break;
    }
    case GateKind::RY: {
      const double c = std::cos(a[0] / 2), s = std::sin(a[0] / 2);
      g.at(0, 0) = c;
      g.at(0, 1) = -s;
      g.at(1, 0) = s;
      g.at(1, 1) = c;
      break;
    }
    case GateKind::RZ:
      g.at(0, 0) = std::polar(1.0, -a[0] / 2);
      g.at(1, 1) = std::polar(1.0, a[0] / 2);
      break;
    case GateKind::H: {
      const double r = 1.0 / std::sqrt(2.0);
      g.at(0, 0) = r;
      g.at(0, 1) = r;
      g.at(1, 0) = r;
      g.at(1, 1) = -r;
      break;
    }
    case GateKind::X:
      g.at(0, 1) = 1.0;
      g.at(1, 0) = 1.0;
      break;
    case GateKind::CNOT:
      g.at(0, 0) = 1.0;
      g.at(1, 1) = 1.0;
      g.at(2, 3) = 1.0;
      g.at(3, 2) = 1.0;
      break;
    case GateKind::CRX: {
      const double c = std::cos(a[0] / 2), s = std::sin(a[0] / 2);
      g.at(0, 0) = 1.0;
      g.at(1, 1) = 1.0;
      g.at(2, 2) = c;
      g.at(2, 3) = -kI * s;
      g.at(3, 2) = -kI * s;
      g.at(3, 3) = c;
      break;
    }
    case GateKind::Toffoli:
      for (int i = 0; i < 6; ++i) g.at(i, i) = 1.0;
      g.at(6, 7) = 1.0;
      g.at(7, 6) = 1.0;
      break;
  }
}

inline std::size_t insert_zero_bits(std::size_t t, const std::array<int, 3>& sorted_pos, int k) {
  for (int i = 0; i < k; ++i) {
    const int p = sorted_pos[static_cast<std::size_t>(i)];
    const std::size_t low = t & ((std::size_t{1} << p) - 1);
    t = ((t >> p) << (p + 1)) | low;
  }
  return t;
}

}  // namespace

int gate_arity(GateKind kind) {
  switch (kind) {
    case GateKind::CNOT:
    case GateKind::CRX:
      return 2;
    case GateKind::Toffoli:
      return 3;
    default:
      return 1;
  }
}

int gate_angle_count(GateKind kind) {
  switch (kind) {
    case GateKind::U3:
      return 3;
    case GateKind::U2:
      return 2;
    case GateKind::RX:
    case GateKind::RY:
    case GateKind::RZ:
    case GateKind::CRX:
      return 1;
    default:
      return 0;
  }
}

std::string_view gate_name(GateKind kind) {
  switch (kind) {
    case GateKind::U2: return "U2";
    case GateKind::U3: return "U3";
    case GateKind::RX: return "RX";
    case GateKind::RY: return "RY";
    case GateKind::RZ: return "RZ";
    case GateKind::CNOT: return "CNOT";
    case GateKind::CRX: return "CRX";
    case GateKind::H: return "H";
    case GateKind::X: return "X";
    case GateKind::Toffoli: return "TOFFOLI";
  }
  return "?";
}

std::optional<GateKind> parse_gate_kind(std::string_view name) {
  for (GateKind k : {GateKind::U2, GateKind::U3, GateKind::RX, GateKind::RY, GateKind::RZ,
                     GateKind::CNOT, GateKind::CRX, GateKind::H, GateKind::X, GateKind::Toffoli}) {
    if (gate_name(k) == name) return k;
  }
  return std::nullopt;
}

GateSpec GateSpec::plain(GateKind kind, std::vector<int> qubits) {
  GateSpec g{kind, std::move(qubits), {}, {}};
  g.validate();
  return g;
}

GateSpec GateSpec::parametric(GateKind kind, std::vector<int> qubits, int first_slot) {
  GateSpec g{kind, std::move(qubits), {}, {}};
  for (int i = 0; i < gate_angle_count(kind); ++i) g.param_slots.push_back(first_slot + i);
  g.validate();
  return g;
}

GateSpec GateSpec::fixed(GateKind kind, std::vector<int> qubits, std::vector<double> angles) {
  GateSpec g{kind, std::move(qubits), {}, std::move(angles)};
  g.validate();
  return g;
}

void GateSpec::validate() const {
  const std::string name{gate_name(kind)};
  if (static_cast<int>(qubits.size()) != arity()) {
    throw CircuitError(name + " expects " + std::to_string(arity()) + " qubit(s), got " +
                       std::to_string(qubits.size()));
  }
  for (std::size_t i = 0; i < qubits.size(); ++i) {
    if (qubits[i] < 0) throw CircuitError(name + ": negative qubit index");
    for (std::size_t j = i + 1; j < qubits.size(); ++j) {
      if (qubits[i] == qubits[j]) throw CircuitError(name + ": repeated qubit index");
    }
  }
  const auto n_angles = static_cast<std::size_t>(gate_angle_count(kind));
  if (n_angles == 0) {
    if (!param_slots.empty() || !fixed_params.empty()) {
      throw CircuitError(name + " takes no angles");
    }
    return;
  }
  const bool slots_ok = param_slots.size() == n_angles && fixed_params.empty();
  const bool fixed_ok = fixed_params.size() == n_angles && param_slots.empty();
  if (!slots_ok && !fixed_ok) {
    throw CircuitError(name + " needs " + std::to_string(n_angles) +
                       " angle(s) from exactly one source (slots or fixed)");
  }
  for (int s : param_slots) {
    if (s < 0) throw CircuitError(name + ": negative parameter slot");
  }
}

std::array<double, 3> bind_angles(const GateSpec& g, const RealVector& params) {
  std::array<double, 3> out{0.0, 0.0, 0.0};
  if (!g.fixed_params.empty()) {
    std::copy(g.fixed_params.begin(), g.fixed_params.end(), out.begin());
    return out;
  }
  for (std::size_t i = 0; i < g.param_slots.size(); ++i) {
    const int slot = g.param_slots[i];
    if (slot >= params.size()) {
      throw ParameterBindingError(std::string(gate_name(g.kind)) + " references slot " +
                                  std::to_string(slot) + " but only " +
                                  std::to_string(params.size()) + " parameter(s) supplied");
    }
    out[i] = params(slot);
  }
  return out;
}

Circuit::Circuit(int n_qubits, int n_params) : n_qubits_(n_qubits), n_params_(n_params) {
  if (n_qubits < 0 || n_params < 0) throw CircuitError("negative circuit dimensions");
}

int Circuit::allocate_params(int count) {
  const int first = n_params_;
  n_params_ += count;
  return first;
}

void Circuit::set_n_params(int n_params) {
  for (const auto& g : gates_) {
    for (int s : g.param_slots) {
      if (s >= n_params) throw CircuitError("set_n_params would orphan slot " + std::to_string(s));
    }
  }
  n_params_ = n_params;
}

Circuit& Circuit::add(GateSpec gate) {
  gate.validate();
  for (int q : gate.qubits) {
    if (q >= n_qubits_) {
      throw CircuitError("qubit " + std::to_string(q) + " out of range for " +
                         std::to_string(n_qubits_) + "-qubit circuit");
    }
  }
  for (int s : gate.param_slots) {
    if (s >= n_params_) {
      throw CircuitError("parameter slot " + std::to_string(s) + " out of range (n_params=" +
                         std::to_string(n_params_) + ")");
    }
  }
  gates_.push_back(std::move(gate));
  return *this;
}

Circuit& Circuit::append(const Circuit& other, int slot_offset) {
  for (GateSpec g : other.gates()) {
    for (int& s : g.param_slots) s += slot_offset;
    add(std::move(g));
  }
  return *this;
}

NativeGateSet::NativeGateSet() : kinds_{GateKind::U3, GateKind::CNOT} {}

NativeGateSet::NativeGateSet(std::set<GateKind> kinds) : kinds_(std::move(kinds)) {
  if (kinds_.empty()) throw CircuitError("native gate set must not be empty");
  const bool has_two_qubit = std::any_of(kinds_.begin(), kinds_.end(),
                                         [](GateKind k) { return gate_arity(k) == 2; });
  if (!has_two_qubit) throw CircuitError("native gate set needs a 2-qubit gate kind");
}

BoundGate bind_gate_angles(const GateSpec& g, const std::array<double, 3>& angles) {
  BoundGate b;
  fill_matrix(g.kind, angles, b);
  for (std::size_t i = 0; i < g.qubits.size(); ++i) b.qubits[i] = g.qubits[i];
  return b;
}

BoundGate bind_gate(const GateSpec& g, const RealVector& params) {
  return bind_gate_angles(g, bind_angles(g, params));
}

BoundGate dense_gate(const std::vector<int>& qubits, const ComplexMatrix& matrix) {
  const int k = static_cast<int>(qubits.size());
  if (k < 1 || k > 3 || matrix.rows() != (1 << k) || matrix.cols() != (1 << k)) {
    throw ShapeError("dense_gate: matrix must be 2^k x 2^k with 1 <= k <= 3");
  }
  BoundGate b;
  b.arity = k;
  for (int i = 0; i < k; ++i) b.qubits[static_cast<std::size_t>(i)] = qubits[static_cast<std::size_t>(i)];
  for (int r = 0; r < b.dim(); ++r) {
    for (int c = 0; c < b.dim(); ++c) b.at(r, c) = matrix(r, c);
  }
  return b;
}

BoundGate pauli_gate(const std::vector<int>& qubits, unsigned code) {
  static const std::array<std::array<Complex, 4>, 4> paulis{{
      {1.0, 0.0, 0.0, 1.0},
      {0.0, 1.0, 1.0, 0.0},
      {0.0, -kI, kI, 0.0},
      {1.0, 0.0, 0.0, -1.0},
  }};
  const int k = static_cast<int>(qubits.size());
  BoundGate b;
  b.arity = k;
  for (int i = 0; i < k; ++i) b.qubits[static_cast<std::size_t>(i)] = qubits[static_cast<std::size_t>(i)];
  const int dim = b.dim();
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < dim; ++c) {
      Complex v = 1.0;
      for (int i = 0; i < k; ++i) {
        const int shift = k - 1 - i;
        const unsigned p = (code >> (2 * shift)) & 3u;
        const int rb = (r >> shift) & 1, cb = (c >> shift) & 1;
        v *= paulis[p][static_cast<std::size_t>(rb * 2 + cb)];
      }
      b.at(r, c) = v;
    }
  }
  return b;
}

void apply_gate(Complex* data, int n_qubits, std::size_t cols, const BoundGate& g) {
  const int k = g.arity;
  const std::size_t dim = std::size_t{1} << n_qubits;
  std::array<std::size_t, 3> bits{};
  std::array<int, 3> pos{};
  for (int i = 0; i < k; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    pos[ui] = n_qubits - 1 - g.qubits[ui];
    bits[ui] = std::size_t{1} << pos[ui];
  }
  std::sort(pos.begin(), pos.begin() + k);

  if (k == 1) {
    const std::size_t stride = bits[0];
    const Complex a = g.m[0], b = g.m[1], c = g.m[2], d = g.m[3];
    for (std::size_t hi = 0; hi < dim; hi += 2 * stride) {
      for (std::size_t lo = 0; lo < stride; ++lo) {
        Complex* r0 = data + (hi + lo) * cols;
        Complex* r1 = data + (hi + lo + stride) * cols;
        for (std::size_t col = 0; col < cols; ++col) {
          const Complex x = r0[col], y = r1[col];
          r0[col] = a * x + b * y;
          r1[col] = c * x + d * y;
        }
      }
    }
    return;
  }

  const int m = 1 << k;
  std::array<std::size_t, 8> off{};
  for (int j = 0; j < m; ++j) {
    std::size_t o = 0;
    for (int i = 0; i < k; ++i) {
      if ((j >> (k - 1 - i)) & 1) o |= bits[static_cast<std::size_t>(i)];
    }
    off[static_cast<std::size_t>(j)] = o;
  }
  const std::size_t groups = dim >> k;

  if (g.is_cnot) {
    for (std::size_t t = 0; t < groups; ++t) {
      const std::size_t base = insert_zero_bits(t, pos, k);
      Complex* r2 = data + (base + off[2]) * cols;
      Complex* r3 = data + (base + off[3]) * cols;
      for (std::size_t col = 0; col < cols; ++col) std::swap(r2[col], r3[col]);
    }
    return;
  }

  std::array<Complex, 8> in{};
  for (std::size_t t = 0; t < groups; ++t) {
    const std::size_t base = insert_zero_bits(t, pos, k);
    for (std::size_t col = 0; col < cols; ++col) {
      for (int j = 0; j < m; ++j) in[static_cast<std::size_t>(j)] = data[(base + off[static_cast<std::size_t>(j)]) * cols + col];
      for (int r = 0; r < m; ++r) {
        Complex acc{0.0, 0.0};
        const Complex* row = &g.m[static_cast<std::size_t>(r * m)];
        for (int j = 0; j < m; ++j) acc += row[j] * in[static_cast<std::size_t>(j)];
        data[(base + off[static_cast<std::size_t>(r)]) * cols + col] = acc;
      }
    }
  }
}

ComplexMatrix gate_matrix(GateKind kind, const std::array<double, 3>& angles) {
  BoundGate b;
  fill_matrix(kind, angles, b);
  const int d = b.dim();
  ComplexMatrix out(d, d);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) out(r, c) = b.at(r, c);
  }
  return out;
}

ComplexMatrix gate_unitary(const GateSpec& g, const RealVector& params) {
  return gate_matrix(g.kind, bind_angles(g, params));
}

ComplexMatrix circuit_unitary(const Circuit& c, const RealVector& params) {
  if (c.n_qubits() > kMaxDenseQubits) {
    throw CapacityError("circuit_unitary supports at most " + std::to_string(kMaxDenseQubits) +
                        " qubits, got " + std::to_string(c.n_qubits()));
  }
  if (params.size() != c.n_params()) {
    throw ParameterBindingError("circuit expects " + std::to_string(c.n_params()) +
                                " parameter(s), got " + std::to_string(params.size()));
  }
  const auto d = static_cast<Eigen::Index>(1) << c.n_qubits();
  ComplexMatrix u = ComplexMatrix::Identity(d, d);
  for (const auto& g : c.gates()) {
    apply_gate(u.data(), c.n_qubits(), static_cast<std::size_t>(d), bind_gate(g, params));
  }
  return u;
}

int count_two_qubit_gates(const Circuit& c) {
  return static_cast<int>(std::count_if(c.gates().begin(), c.gates().end(),
                                        [](const GateSpec& g) { return g.arity() == 2; }));
}

int circuit_depth(const Circuit& c) {
  std::vector<int> frontier(static_cast<std::size_t>(c.n_qubits()), 0);
  int depth = 0;
  for (const auto& g : c.gates()) {
    int level = 0;
    for (int q : g.qubits) level = std::max(level, frontier[static_cast<std::size_t>(q)]);
    ++level;
    for (int q : g.qubits) frontier[static_cast<std::size_t>(q)] = level;
    depth = std::max(depth, level);
  }
  return depth;
}

Circuit inverse_circuit(const Circuit& c, const RealVector& params) {
  Circuit inv(c.n_qubits(), 0);
  for (auto it = c.gates().rbegin(); it != c.gates().rend(); ++it) {
    const auto a = bind_angles(*it, params);
    switch (it->kind) {
      case GateKind::RX:
      case GateKind::RY:
      case GateKind::RZ:
      case GateKind::CRX:
        inv.add(GateSpec::fixed(it->kind, it->qubits, {-a[0]}));
        break;
      case GateKind::U3:
        inv.add(GateSpec::fixed(GateKind::U3, it->qubits, {-a[0], -a[2], -a[1]}));
        break;
      case GateKind::U2:
        inv.add(GateSpec::fixed(GateKind::U3, it->qubits, {-std::numbers::pi / 2, -a[1], -a[0]}));
        break;
      default:
        inv.add(GateSpec::plain(it->kind, it->qubits));
        break;
    }
  }
  return inv;
}

Circuit bind_circuit(const Circuit& c, const RealVector& params) {
  Circuit out(c.n_qubits(), 0);
  for (const auto& g : c.gates()) {
    if (g.param_slots.empty()) {
      out.add(g);
    } else {
      const auto a = bind_angles(g, params);
      out.add(GateSpec::fixed(g.kind, g.qubits,
                              std::vector<double>(a.begin(), a.begin() + gate_angle_count(g.kind))));
    }
  }
  return out;
}

bool is_unitary(const ComplexMatrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  const ComplexMatrix p = m.adjoint() * m;
  return (p - ComplexMatrix::Identity(m.rows(), m.cols())).cwiseAbs().maxCoeff() < tol;
}

}  // namespace qdoor
