#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "qdoor/model.hpp"
#include "qdoor/synth.hpp"

using namespace qdoor;

namespace {

constexpr double kPi = std::numbers::pi;

ComplexMatrix haar(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ComplexMatrix z(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) z(i, j) = Complex(n(rng), n(rng));
  Eigen::HouseholderQR<ComplexMatrix> qr(z);
  ComplexMatrix q = qr.householderQ();
  const ComplexMatrix r = qr.matrixQR();
  for (int j = 0; j < d; ++j) q.col(j) *= r(j, j) / std::abs(r(j, j));
  return q;
}

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

ComplexMatrix swap_matrix() {
  ComplexMatrix s = ComplexMatrix::Zero(4, 4);
  s(0, 0) = s(1, 2) = s(2, 1) = s(3, 3) = 1.0;
  return s;
}

double residual_of(const SynthesizedCandidate& c, const ComplexMatrix& target) {
  return hs_residual(target, circuit_unitary(c.circuit, c.instantiated_params));
}

// Random 4-qubit circuit with U3 dressing around random CNOTs.
std::pair<Circuit, RealVector> random_circuit(std::uint64_t seed, int n_cnot) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(-kPi, kPi);
  Circuit c(4, 0);
  std::vector<double> p;
  auto u3 = [&](int q) {
    c.add(GateSpec::parametric(GateKind::U3, {q}, c.allocate_params(3)));
    for (int i = 0; i < 3; ++i) p.push_back(angle(rng));
  };
  for (int q = 0; q < 4; ++q) u3(q);
  for (int k = 0; k < n_cnot; ++k) {
    const int a = static_cast<int>(rng() % 4);
    const int t = (a + 1 + static_cast<int>(rng() % 3)) % 4;
    c.add(GateSpec::plain(GateKind::CNOT, {a, t}));
    u3(a);
    u3(t);
  }
  return {c, Eigen::Map<RealVector>(p.data(), static_cast<Eigen::Index>(p.size()))};
}

}  // namespace

TEST(partition_circuit, two_qubit_width_two_is_one_piece) {
  Circuit two(2, 0);
  two.add(GateSpec::plain(GateKind::CNOT, {0, 1}));
  two.add(GateSpec::plain(GateKind::H, {1}));
  two.add(GateSpec::plain(GateKind::CNOT, {1, 0}));
  const auto pieces = partition_circuit(two, RealVector(), 2);
  ASSERT_EQ(pieces.size(), 1u);
  EXPECT_LT((pieces[0].target - circuit_unitary(two, RealVector())).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(partition_circuit, empty_circuit) { EXPECT_TRUE(partition_circuit(Circuit(3), RealVector()).empty()); }

TEST(partition_circuit, mnist_pieces_compose_to_full_unitary) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  Model m = build_mnist_model(2);
  for (int i = 0; i < m.n_params(); ++i) m.params(i) = u(rng);
  const Circuit body = m.body();
  const auto pieces = partition_circuit(body, m.params, 3);
  std::size_t next = 0;
  for (const auto& pc : pieces) {
    EXPECT_LE(pc.qubits.size(), 3u);
    EXPECT_EQ(pc.first_gate, next);
    next = pc.end_gate;
  }
  EXPECT_EQ(next, body.size());
  // Dense oracle: embed each piece target on its qubits and multiply.
  ComplexMatrix total = ComplexMatrix::Identity(256, 256);
  for (const auto& pc : pieces) {
    const int k = static_cast<int>(pc.qubits.size());
    ComplexMatrix full = ComplexMatrix::Zero(256, 256);
    for (int col = 0; col < 256; ++col) {
      int local = 0;
      for (int j = 0; j < k; ++j) local = (local << 1) | ((col >> (7 - pc.qubits[j])) & 1);
      for (int r = 0; r < (1 << k); ++r) {
        int row = col;
        for (int j = 0; j < k; ++j) {
          const int bit = (r >> (k - 1 - j)) & 1;
          row = (row & ~(1 << (7 - pc.qubits[j]))) | (bit << (7 - pc.qubits[j]));
        }
        full(row, col) += pc.target(r, local);
      }
    }
    total = full * total;
  }
  EXPECT_LT((total - circuit_unitary(body, m.params)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(partition_circuit, too_wide_gate_throws) {
  Circuit c(3, 0);
  c.add(GateSpec::plain(GateKind::Toffoli, {0, 1, 2}));
  EXPECT_THROW(partition_circuit(c, RealVector(), 2), PartitionError);
}

TEST(instantiate_block, single_u3_reaches_ry) {
  Circuit s(1, 3);
  s.add(GateSpec::parametric(GateKind::U3, {0}, 0));
  const auto r = instantiate_block(s, gate_matrix(GateKind::RY, {0.7, 0, 0}), SynthesisBudget{});
  EXPECT_LT(r.residual, 1e-8);
}

TEST(instantiate_block, product_structure_cannot_reach_cnot) {
  const Circuit s = block_structure(2, {});
  SynthesisBudget b;
  b.multistart = 32;
  const auto r = instantiate_block(s, gate_matrix(GateKind::CNOT, {}), b);
  EXPECT_GE(r.residual, 0.2);
}

TEST(instantiate_block, product_structure_reaches_product_target) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 5; ++i) {
    const ComplexMatrix t = kron(haar(2, rng), haar(2, rng));
    const auto r = instantiate_block(block_structure(2, {}), t, SynthesisBudget{});
    EXPECT_LT(r.residual, 1e-8);
  }
}

TEST(search_piece, identity_needs_no_cnot) {
  SynthesisBudget b;
  b.epsilon = 1e-3;
  const auto c = search_piece(ComplexMatrix::Identity(4, 4), NativeGateSet(), b);
  ASSERT_FALSE(c.empty());
  for (const auto& x : c) EXPECT_EQ(x.n_2qg, 0);
}

TEST(search_piece, cnot_needs_one) {
  SynthesisBudget b;
  b.epsilon = 1e-3;
  const ComplexMatrix t = gate_matrix(GateKind::CNOT, {});
  const auto c = search_piece(t, NativeGateSet(), b);
  ASSERT_FALSE(c.empty());
  for (const auto& x : c) {
    EXPECT_EQ(x.n_2qg, 1);
    EXPECT_LE(residual_of(x, t), 1e-3);
  }
}

TEST(search_piece, swap_needs_three) {
  // Direct construction: three alternating CNOTs make SWAP.
  Circuit three(2);
  three.add(GateSpec::plain(GateKind::CNOT, {0, 1}));
  three.add(GateSpec::plain(GateKind::CNOT, {1, 0}));
  three.add(GateSpec::plain(GateKind::CNOT, {0, 1}));
  ASSERT_LT(hs_residual(circuit_unitary(three, RealVector()), swap_matrix()), 1e-12);
  SynthesisBudget b;
  b.epsilon = 1e-3;
  const auto c = search_piece(swap_matrix(), NativeGateSet(), b);
  ASSERT_FALSE(c.empty());
  for (const auto& x : c) {
    EXPECT_EQ(x.n_2qg, 3);
    EXPECT_FALSE(x.over_budget);
    EXPECT_LE(residual_of(x, swap_matrix()), 1e-3);
  }
}

TEST(search_piece, universality_and_monotonicity_on_random_targets) {
  std::mt19937_64 rng(4);
  const std::vector<double> grid{1e-1, 1e-2, 1e-3, 1e-6};
  for (int i = 0; i < 20; ++i) {
    const ComplexMatrix t = haar(4, rng);
    SynthesisBudget b;
    b.seed = static_cast<std::uint64_t>(i);
    const auto per = search_piece_multi(t, NativeGateSet(), b, grid);
    int last = 0;
    for (std::size_t e = 0; e < grid.size(); ++e) {
      ASSERT_FALSE(per[e].empty());
      const int n = per[e].front().n_2qg;
      EXPECT_GE(n, last);  // grid is decreasing in eps
      last = n;
      for (const auto& x : per[e]) {
        EXPECT_EQ(x.n_2qg, n);
        EXPECT_LE(residual_of(x, t), grid[e]);
      }
    }
    EXPECT_LE(last, 3);
  }
}

TEST(search_piece, three_qubit_targets_respect_budget) {
  // CNOT ladder plus local rotations: reachable with 2 blocks.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  Circuit c(3, 0);
  std::vector<double> p;
  for (int q = 0; q < 3; ++q) {
    c.add(GateSpec::parametric(GateKind::U3, {q}, c.allocate_params(3)));
    for (int k = 0; k < 3; ++k) p.push_back(u(rng));
  }
  c.add(GateSpec::plain(GateKind::CNOT, {0, 1}));
  c.add(GateSpec::plain(GateKind::CNOT, {1, 2}));
  const ComplexMatrix t = circuit_unitary(c, Eigen::Map<RealVector>(p.data(), 9));
  SynthesisBudget b;
  b.epsilon = 1e-3;
  const auto cands = search_piece(t, NativeGateSet(), b);
  ASSERT_FALSE(cands.empty());
  for (const auto& x : cands) {
    EXPECT_LE(x.n_2qg, 2);
    EXPECT_LE(residual_of(x, t), 1e-3);
  }
}

TEST(search_piece, over_budget_is_flagged) {
  std::mt19937_64 rng(6);
  SynthesisBudget b;
  b.epsilon = 1e-6;
  b.max_blocks = 1;
  const auto c = search_piece(haar(4, rng), NativeGateSet(), b);
  ASSERT_FALSE(c.empty());
  EXPECT_TRUE(c.front().over_budget);
}

TEST(recombine, exact_pieces_give_exact_circuit) {
  auto [c, p] = random_circuit(7, 4);
  SynthesisBudget b;
  b.epsilon = 1e-9;
  const auto res = synthesize_detailed(c, p, b, 1);
  ASSERT_FALSE(res.candidates.empty());
  const auto& cand = res.candidates.front();
  EXPECT_LT(hs_residual(circuit_unitary(c, p), circuit_unitary(cand.circuit, cand.instantiated_params)), 1e-8);
}

TEST(recombine, whole_residual_subadditive) {
  auto [c, p] = random_circuit(8, 8);
  for (double eps : {1e-2, 1e-1}) {
    SynthesisBudget b;
    b.epsilon = eps;
    const auto res = synthesize_detailed(c, p, b, 4);
    double sum = 0.0;
    for (const auto& pc : res.piece_candidates) sum += pc.front().residual;
    for (const auto& cand : res.candidates) {
      const double whole = hs_residual(circuit_unitary(c, p), circuit_unitary(cand.circuit, cand.instantiated_params));
      // Per-piece residuals add up to a bound on the whole-circuit residual
      // after the sqrt(2) conversion between the trace and operator forms.
      EXPECT_LE(whole, std::sqrt(2.0) * sum + 1e-12);
    }
  }
}

TEST(recombine, single_piece_relabels_qubits) {
  Circuit c(3, 0);
  c.add(GateSpec::plain(GateKind::CNOT, {2, 1}));
  const auto pieces = partition_circuit(c, RealVector(), 2);
  ASSERT_EQ(pieces.size(), 1u);
  SynthesisBudget b;
  b.epsilon = 1e-6;
  const auto local = search_piece(pieces[0].target, NativeGateSet(), b);
  const auto whole = recombine(pieces, {local.front()}, 3);
  EXPECT_EQ(whole.n_2qg, 1);
  for (const auto& g : whole.circuit.gates()) {
    for (int q : g.qubits) EXPECT_TRUE(q == 1 || q == 2);
  }
  EXPECT_LT(hs_residual(circuit_unitary(c, RealVector()), circuit_unitary(whole.circuit, whole.instantiated_params)),
            1e-5);
}

TEST(synthesize, identity_circuit) {
  Circuit c(3, 0);
  c.add(GateSpec::plain(GateKind::H, {0}));
  c.add(GateSpec::plain(GateKind::H, {0}));
  for (double eps : {1e-1, 1e-6}) {
    SynthesisBudget b;
    b.epsilon = eps;
    const auto cands = synthesize(c, RealVector(), b, 8);
    ASSERT_EQ(cands.size(), 1u);
    EXPECT_EQ(cands.front().n_2qg, 0);
  }
}

TEST(synthesize, co_optimal_sound_deterministic) {
  auto [c, p] = random_circuit(9, 6);
  SynthesisBudget b;
  b.epsilon = 1e-2;
  b.seed = 3;
  const auto a = synthesize_detailed(c, p, b, 8);
  const auto again = synthesize_detailed(c, p, b, 8);
  ASSERT_FALSE(a.candidates.empty());
  EXPECT_LE(a.candidates.size(), 8u);
  ASSERT_EQ(a.candidates.size(), again.candidates.size());
  for (std::size_t i = 0; i < a.candidates.size(); ++i) {
    EXPECT_EQ(a.candidates[i].n_2qg, a.candidates.front().n_2qg);
    EXPECT_EQ(a.candidates[i].circuit, again.candidates[i].circuit);
    EXPECT_EQ(a.candidates[i].instantiated_params, again.candidates[i].instantiated_params);
  }
  for (std::size_t k = 0; k < a.pieces.size(); ++k) {
    for (const auto& pc : a.piece_candidates[k]) EXPECT_LE(residual_of(pc, a.pieces[k].target), 1e-2);
  }
}

TEST(synthesize, n2qg_non_increasing_in_eps_for_model) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0.0, 0.3);
  Model m = build_iris2_model();
  for (int i = 0; i < m.n_params(); ++i) m.params(i) = n(rng);
  const auto syn = synthesize_model(m, SynthesisBudget{}, {1e-14, 1e-3, 1e-2}, 1);
  EXPECT_GE(syn[0].candidates.front().n_2qg, syn[1].candidates.front().n_2qg);
  EXPECT_GE(syn[1].candidates.front().n_2qg, syn[2].candidates.front().n_2qg);
}

TEST(epsilon_sweep, constant_evaluator_and_monotone_n2qg) {
  auto [c, p] = random_circuit(11, 6);
  const auto rows = epsilon_sweep(c, p, {1e-3, 1e-2, 1e-1}, [](const Circuit&) { return 1.0; }, SynthesisBudget{}, 4);
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].min_value, 1.0);
    EXPECT_EQ(rows[i].mean_value, 1.0);
    EXPECT_EQ(rows[i].max_value, 1.0);
    if (i) EXPECT_LE(rows[i].n_2qg, rows[i - 1].n_2qg);
  }
}

TEST(synthesis_budget, validation) {
  SynthesisBudget b;
  b.epsilon = 0.0;
  EXPECT_THROW(b.validate(), SynthesisError);
  b = SynthesisBudget{};
  b.piece_width = 4;
  EXPECT_THROW(b.validate(), SynthesisError);
  EXPECT_THROW(synthesize(Circuit(2), RealVector(), SynthesisBudget{}, 0), SynthesisError);
}
