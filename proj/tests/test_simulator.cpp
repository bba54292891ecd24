#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "qdoor/model.hpp"
#include "qdoor/simulator.hpp"

using namespace qdoor;

namespace {

constexpr double kPi = std::numbers::pi;

RealVector random_params(int n, std::mt19937_64& rng, double scale = kPi) {
  std::uniform_real_distribution<double> u(-scale, scale);
  RealVector p(n);
  for (int i = 0; i < n; ++i) p(i) = u(rng);
  return p;
}

}  // namespace

TEST(encode, angle_zero_is_identity_on_ground) {
  const Circuit c = encode(RealVector::Zero(3), EncodingKind::Angle, 3);
  const StateVector s = run_ideal(c, RealVector(), StateVector::zero(3));
  EXPECT_NEAR(std::abs(s.amplitudes(0)), 1.0, 1e-15);
}

TEST(encode, amplitude_basis_vector) {
  RealVector x(4);
  x << 1, 0, 0, 0;
  const StateVector s = run_ideal(encode(x, EncodingKind::Amplitude, 2), RealVector(), StateVector::zero(2));
  EXPECT_NEAR(std::abs(s.amplitudes(0)), 1.0, 1e-12);
}

TEST(encode, angle_pi_flips_qubit) {
  RealVector x(1);
  x << kPi;
  const RealVector p =
      run_ideal(encode(x, EncodingKind::Angle, 1), RealVector(), StateVector::zero(1)).probabilities();
  EXPECT_NEAR(p(1), 1.0, 1e-15);
}

TEST(encode, amplitude_reproduces_unit_vectors) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int nq = 1; nq <= 4; ++nq) {
    for (int trial = 0; trial < 10; ++trial) {
      RealVector x(1 << nq);
      for (int i = 0; i < x.size(); ++i) x(i) = n(rng);
      if (trial == 0) x.tail(x.size() / 2).setZero();
      x.normalize();
      const StateVector s = run_ideal(encode(x, EncodingKind::Amplitude, nq), RealVector(), StateVector::zero(nq));
      EXPECT_LT((s.amplitudes - x.cast<Complex>()).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(encode, wrong_length_throws) {
  EXPECT_THROW(encode(RealVector::Zero(3), EncodingKind::Amplitude, 2), EncodingError);
  EXPECT_THROW(encode(RealVector::Zero(2), EncodingKind::Angle, 3), EncodingError);
}

TEST(run_ideal, empty_circuit_returns_input) {
  std::mt19937_64 rng(3);
  ComplexVector a = ComplexVector::Random(8);
  a.normalize();
  const StateVector in = StateVector::from_amplitudes(a);
  EXPECT_EQ(run_ideal(Circuit(3), RealVector(), in).amplitudes, a);
}

TEST(run_ideal, cnot_on_10) {
  ComplexVector a = ComplexVector::Zero(4);
  a(2) = 1.0;
  Circuit c(2);
  c.add(GateSpec::plain(GateKind::CNOT, {0, 1}));
  const StateVector s = run_ideal(c, RealVector(), StateVector::from_amplitudes(a));
  EXPECT_EQ(s.amplitudes(3), Complex(1.0));
}

TEST(run_ideal, eight_qubit_model_matches_dense_product) {
  std::mt19937_64 rng(4);
  Model m = build_mnist_model(2);
  m.params = random_params(m.n_params(), rng);
  const RealVector x = random_params(8, rng).cwiseAbs();
  const Circuit c = m.circuit_for(x);
  const ComplexVector dense = circuit_unitary(c, m.params).col(0);
  const StateVector s = run_ideal(c, m.params, StateVector::zero(8));
  EXPECT_LT((s.amplitudes - dense).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(run_ideal, three_qubit_gate_on_scattered_qubits) {
  std::mt19937_64 rng(5);
  Circuit c(4);
  c.add(GateSpec::plain(GateKind::H, {0}));
  c.add(GateSpec::plain(GateKind::H, {3}));
  c.add(GateSpec::plain(GateKind::Toffoli, {3, 0, 2}));
  c.add(GateSpec::plain(GateKind::CNOT, {2, 1}));
  const ComplexVector dense = circuit_unitary(c, RealVector()).col(0);
  EXPECT_LT((run_ideal(c, RealVector(), StateVector::zero(4)).amplitudes - dense).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(run_noisy, zero_noise_equals_ideal) {
  std::mt19937_64 rng(6);
  Model m = build_mnist_model(2);
  m.params = random_params(m.n_params(), rng);
  const Circuit c = m.circuit_for(RealVector::Constant(8, 0.4));
  const RealVector ideal = run_ideal(c, m.params, StateVector::zero(8)).probabilities();
  const RealVector noisy = run_noisy(c, m.params, StateVector::zero(8), NoiseModel::ideal(), 3, 1);
  EXPECT_LT((ideal - noisy).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(run_noisy, full_depolarizing_gives_uniform) {
  Circuit c(1);
  c.add(GateSpec::plain(GateKind::H, {0}));
  c.add(GateSpec::plain(GateKind::X, {0}));
  NoiseModel n;
  n.p1 = 1.0;
  const int T = 2000;
  const RealVector p = run_noisy(c, RealVector(), StateVector::zero(1), n, T, 11);
  // After the last gate the state is a random Pauli image; each trajectory
  // contributes 0, 1/2 or 1 with mean 1/2 and at most the Bernoulli spread.
  EXPECT_NEAR(p(0), 0.5, 3 * 0.5 / std::sqrt(static_cast<double>(T)));
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
}

TEST(run_noisy, trajectory_mean_converges_to_channel) {
  // One RY(theta) then depolarizing p: P(1) = (1-p') s + p' (1-s) with
  // s = sin^2(theta/2) and p' = p/2 (X and Y of the four Paulis flip Z).
  const double theta = 0.9;
  const double p = 0.3;
  Circuit c(1, 1);
  c.add(GateSpec::parametric(GateKind::RY, {0}, 0));
  RealVector params(1);
  params << theta;
  NoiseModel n;
  n.p1 = p;
  const double s = std::pow(std::sin(theta / 2), 2);
  const double expect = (1 - p / 2) * s + (p / 2) * (1 - s);
  const int T = 20000;
  const RealVector probs = run_noisy(c, params, StateVector::zero(1), n, T, 3);
  // Each trajectory yields s or 1-s; the spread is bounded by |1-2s|/2.
  const double sigma = std::abs(1 - 2 * s) * std::sqrt(p / 2 * (1 - p / 2) / T);
  EXPECT_NEAR(probs(1), expect, 3 * sigma + 1e-12);
}

TEST(run_noisy, fidelity_drops_with_cnot_count) {
  const NoiseModel mel = NoiseModel::preset("mel");
  double last = 1.0;
  for (int n_cnot : {4, 8, 16}) {
    Circuit c(2);
    c.add(GateSpec::plain(GateKind::X, {0}));
    for (int i = 0; i < n_cnot; ++i) c.add(GateSpec::plain(GateKind::CNOT, {0, 1}));
    const RealVector ideal = run_ideal(c, RealVector(), StateVector::zero(2)).probabilities();
    const RealVector noisy = run_noisy(c, RealVector(), StateVector::zero(2), mel, 4000, 5);
    const double fid = noisy.dot(ideal);
    EXPECT_LT(fid, 1.0);
    EXPECT_LT(fid, last);
    last = fid;
  }
}

TEST(run_noisy, seed_determinism_and_normalization) {
  std::mt19937_64 rng(7);
  Model m = build_mnist_model(4);
  m.params = random_params(m.n_params(), rng);
  const Circuit c = m.circuit_for(RealVector::Constant(8, 1.0));
  const NoiseModel cam = NoiseModel::preset("cam");
  const RealVector a = run_noisy(c, m.params, StateVector::zero(8), cam, 16, 42);
  const RealVector b = run_noisy(c, m.params, StateVector::zero(8), cam, 16, 42);
  EXPECT_EQ(a, b);
  EXPECT_NEAR(a.sum(), 1.0, 1e-9);
  EXPECT_TRUE((a.array() >= 0).all());
}

TEST(readout, flips_are_symmetric_bit_channel) {
  RealVector p = RealVector::Zero(4);
  p(0) = 1.0;
  apply_readout_flips(p, 2, 0.1);
  EXPECT_NEAR(p(0), 0.81, 1e-15);
  EXPECT_NEAR(p(1), 0.09, 1e-15);
  EXPECT_NEAR(p(2), 0.09, 1e-15);
  EXPECT_NEAR(p(3), 0.01, 1e-15);
}

TEST(noise_model, presets_and_parse) {
  EXPECT_TRUE(NoiseModel::preset("ideal").is_ideal());
  EXPECT_LT(NoiseModel::preset("mel").p2, NoiseModel::preset("cam").p2);
  EXPECT_THROW(NoiseModel::preset("nope"), ConfigError);
  const NoiseModel n = NoiseModel::parse("# custom\np1 = 0.01\np2=0.05\np_readout = 0.02\n");
  EXPECT_DOUBLE_EQ(n.p2, 0.05);
  EXPECT_THROW(NoiseModel::parse("p1=2"), ConfigError);
}

TEST(class_probs, ground_state_two_classes) {
  RealVector p = RealVector::Zero(8);
  p(0) = 1.0;
  const ClassProbs c = class_probs(p, MeasureSpec::for_classes(2));
  EXPECT_EQ(c.probs(0), 1.0);
  EXPECT_EQ(c.probs(1), 0.0);
}

TEST(class_probs, uniform_two_classes) {
  const RealVector p = RealVector::Constant(16, 1.0 / 16);
  const ClassProbs c = class_probs(p, MeasureSpec::for_classes(2));
  EXPECT_NEAR(c.probs(0), 0.5, 1e-15);
  EXPECT_NEAR(c.probs(1), 0.5, 1e-15);
}

TEST(class_probs, four_classes_match_brute_force_bucketing) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  RealVector p(256);
  for (int i = 0; i < 256; ++i) p(i) = u(rng);
  p /= p.sum();
  RealVector brute = RealVector::Zero(4);
  for (int i = 0; i < 256; ++i) brute((i >> 6) & 3) += p(i);
  const ClassProbs c = class_probs(p, MeasureSpec::for_classes(4));
  EXPECT_LT((c.probs - brute).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(MeasureSpec::for_classes(4).measured_qubits, (std::vector<int>{0, 1}));
}
