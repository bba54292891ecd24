#include "qdoor/simulator.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "qdoor/circuit_io.hpp"
#include "qdoor/parallel.hpp"

namespace qdoor {

namespace {

void check_qubits(int n_qubits) {
  if (n_qubits < 1 || n_qubits > kMaxDenseQubits) {
    throw EncodingError("qubit count must be in [1, " + std::to_string(kMaxDenseQubits) + "], got " +
                        std::to_string(n_qubits));
  }
}

// Multiplexed RY on `target`, one angle per value of `controls` (first control
// is the most significant bit of the angle index).
void multiplexed_ry(Circuit& c, const std::vector<int>& controls, int target,
                    const std::vector<double>& angles) {
  if (controls.empty()) {
    c.add(GateSpec::fixed(GateKind::RY, {target}, {angles[0]}));
    return;
  }
  const std::size_t half = angles.size() / 2;
  std::vector<double> sum(half), diff(half);
  for (std::size_t j = 0; j < half; ++j) {
    sum[j] = 0.5 * (angles[j] + angles[j + half]);
    diff[j] = 0.5 * (angles[j] - angles[j + half]);
  }
  const std::vector<int> rest(controls.begin() + 1, controls.end());
  multiplexed_ry(c, rest, target, sum);
  c.add(GateSpec::plain(GateKind::CNOT, {controls[0], target}));
  multiplexed_ry(c, rest, target, diff);
  c.add(GateSpec::plain(GateKind::CNOT, {controls[0], target}));
}

Circuit amplitude_encoding(const RealVector& x, int n) {
  const double norm = x.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw EncodingError("amplitude encoding needs a finite nonzero feature vector");
  }
  const RealVector a = x / norm;
  Circuit c(n, 0);
  // Level k fixes qubit k given the values of qubits 0..k-1.
  for (int k = 0; k < n; ++k) {
    const std::size_t groups = std::size_t{1} << k;
    const std::size_t block = std::size_t{1} << (n - k);
    std::vector<double> angles(groups);
    for (std::size_t j = 0; j < groups; ++j) {
      const Eigen::Index lo = static_cast<Eigen::Index>(j * block);
      const Eigen::Index h = static_cast<Eigen::Index>(block / 2);
      if (k == n - 1) {
        angles[j] = 2.0 * std::atan2(a(lo + 1), a(lo));
      } else {
        angles[j] = 2.0 * std::atan2(a.segment(lo + h, h).norm(), a.segment(lo, h).norm());
      }
    }
    std::vector<int> controls(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) controls[static_cast<std::size_t>(i)] = i;
    multiplexed_ry(c, controls, k, angles);
  }
  return c;
}

}  // namespace

std::string_view encoding_name(EncodingKind kind) {
  switch (kind) {
    case EncodingKind::Angle: return "angle";
    case EncodingKind::Amplitude: return "amplitude";
    case EncodingKind::IQP: return "iqp";
  }
  return "?";
}

EncodingKind parse_encoding(std::string_view name) {
  for (auto k : {EncodingKind::Angle, EncodingKind::Amplitude, EncodingKind::IQP}) {
    if (encoding_name(k) == name) return k;
  }
  throw EncodingError("unknown encoding '" + std::string(name) + "'");
}

int encoding_feature_length(EncodingKind kind, int n_qubits) {
  return kind == EncodingKind::Amplitude ? (1 << n_qubits) : n_qubits;
}

StateVector StateVector::zero(int n_qubits) {
  StateVector s;
  s.n_qubits = n_qubits;
  s.amplitudes = ComplexVector::Zero(Eigen::Index{1} << n_qubits);
  s.amplitudes(0) = 1.0;
  return s;
}

StateVector StateVector::from_amplitudes(ComplexVector amplitudes) {
  const auto len = amplitudes.size();
  int n = 0;
  while ((Eigen::Index{1} << n) < len) ++n;
  if (len == 0 || (Eigen::Index{1} << n) != len) {
    throw ShapeError("simulator", "state length " + std::to_string(len) + " is not a power of two");
  }
  return StateVector{n, std::move(amplitudes)};
}

RealVector StateVector::probabilities() const { return amplitudes.cwiseAbs2(); }

std::vector<std::pair<int, int>> ring_pairs(int n_qubits) {
  std::vector<std::pair<int, int>> out;
  if (n_qubits < 2) return out;
  for (int i = 0; i < n_qubits; ++i) out.emplace_back(i, (i + 1) % n_qubits);
  return out;
}

Circuit encode(const RealVector& features, EncodingKind kind, int n_qubits) {
  check_qubits(n_qubits);
  const int need = encoding_feature_length(kind, n_qubits);
  if (features.size() != need) {
    throw EncodingError(std::string(encoding_name(kind)) + " encoding on " + std::to_string(n_qubits) +
                        " qubits needs " + std::to_string(need) + " features, got " +
                        std::to_string(features.size()));
  }
  switch (kind) {
    case EncodingKind::Angle: {
      Circuit c(n_qubits, 0);
      for (int q = 0; q < n_qubits; ++q) c.add(GateSpec::fixed(GateKind::RY, {q}, {features(q)}));
      return c;
    }
    case EncodingKind::Amplitude:
      return amplitude_encoding(features, n_qubits);
    case EncodingKind::IQP: {
      Circuit c(n_qubits, 0);
      for (int q = 0; q < n_qubits; ++q) c.add(GateSpec::plain(GateKind::H, {q}));
      for (int q = 0; q < n_qubits; ++q) c.add(GateSpec::fixed(GateKind::RZ, {q}, {features(q)}));
      for (auto [i, j] : ring_pairs(n_qubits)) {
        c.add(GateSpec::plain(GateKind::CNOT, {i, j}));
        c.add(GateSpec::fixed(GateKind::RZ, {j}, {features(i) * features(j)}));
        c.add(GateSpec::plain(GateKind::CNOT, {i, j}));
      }
      return c;
    }
  }
  throw EncodingError("unhandled encoding kind");
}

Program bind_program(const Circuit& c, const RealVector& params) {
  Program p;
  p.reserve(c.size());
  for (const auto& g : c.gates()) p.push_back(bind_gate(g, params));
  return p;
}

void run_program(ComplexVector& state, int n_qubits, const Program& prog) {
  for (const auto& g : prog) apply_gate(state.data(), n_qubits, 1, g);
}

StateVector run_ideal(const Circuit& c, const RealVector& params, const StateVector& input) {
  if (input.n_qubits != c.n_qubits() || input.amplitudes.size() != (Eigen::Index{1} << c.n_qubits())) {
    throw ShapeError("simulator", "state has " + std::to_string(input.n_qubits) + " qubits, circuit has " +
                                      std::to_string(c.n_qubits()));
  }
  if (params.size() != c.n_params()) {
    throw ParameterBindingError("circuit expects " + std::to_string(c.n_params()) + " parameter(s), got " +
                                std::to_string(params.size()));
  }
  StateVector out = input;
  run_program(out.amplitudes, c.n_qubits(), bind_program(c, params));
  return out;
}

NoiseModel NoiseModel::ideal() { return NoiseModel{}; }

NoiseModel NoiseModel::preset(const std::string& name) {
  if (name == "ideal") return NoiseModel{};
  if (name == "mel") return NoiseModel{0.001, 0.018, 0.02, "mel"};
  if (name == "cam") return NoiseModel{0.002, 0.036, 0.04, "cam"};
  throw ConfigError("simulator", "unknown noise preset '" + name + "' (ideal|mel|cam)");
}

NoiseModel NoiseModel::parse(const std::string& text, const std::string& label) {
  NoiseModel m;
  m.label = label;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos) throw ConfigError("simulator", "noise file: expected key=value, got '" + line + "'");
    std::string key = line.substr(0, eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    const double v = parse_double(line.substr(eq + 1));
    if (key == "p1") m.p1 = v;
    else if (key == "p2") m.p2 = v;
    else if (key == "p_readout") m.p_readout = v;
    else if (key == "label") continue;
    else throw ConfigError("simulator", "noise file: unknown key '" + key + "'");
  }
  m.validate();
  return m;
}

NoiseModel NoiseModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("simulator", "cannot open noise file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string label = path;
  const auto slash = label.find_last_of('/');
  if (slash != std::string::npos) label = label.substr(slash + 1);
  return parse(ss.str(), label);
}

void NoiseModel::validate() const {
  for (double p : {p1, p2, p_readout}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("simulator", "noise probabilities must lie in [0,1]");
  }
}

void apply_readout_flips(RealVector& probs, int n_qubits, double p) {
  if (p == 0.0) return;
  const Eigen::Index dim = probs.size();
  for (int q = 0; q < n_qubits; ++q) {
    const Eigen::Index bit = Eigen::Index{1} << (n_qubits - 1 - q);
    for (Eigen::Index i = 0; i < dim; ++i) {
      if (i & bit) continue;
      const double a = probs(i), b = probs(i | bit);
      probs(i) = (1.0 - p) * a + p * b;
      probs(i | bit) = (1.0 - p) * b + p * a;
    }
  }
}

RealVector run_program_noisy(const Program& prog, const StateVector& input, const NoiseModel& noise,
                             int trajectories, std::uint64_t seed) {
  if (trajectories < 1) throw ShapeError("simulator", "trajectories must be >= 1");
  noise.validate();
  const int n = input.n_qubits;
  const auto t_count = static_cast<std::size_t>(trajectories);
  std::vector<RealVector> per(t_count);
  parallel_for(t_count, [&](std::size_t t) {
    std::mt19937_64 rng(seed + t);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    ComplexVector psi = input.amplitudes;
    for (const auto& g : prog) {
      apply_gate(psi.data(), n, 1, g);
      const double p = g.arity == 1 ? noise.p1 : noise.p2;
      if (p == 0.0) continue;
      const double u = unif(rng);
      const auto code = static_cast<unsigned>(rng() % (1u << (2 * g.arity)));
      if (u < p && code != 0) {
        std::vector<int> qs(g.qubits.begin(), g.qubits.begin() + g.arity);
        apply_gate(psi.data(), n, 1, pauli_gate(qs, code));
      }
    }
    per[t] = psi.cwiseAbs2();
  });
  RealVector probs = RealVector::Zero(input.amplitudes.size());
  for (const auto& v : per) probs += v;
  probs /= static_cast<double>(trajectories);
  apply_readout_flips(probs, n, noise.p_readout);
  return probs;
}

RealVector run_noisy(const Circuit& c, const RealVector& params, const StateVector& input,
                     const NoiseModel& noise, int trajectories, std::uint64_t seed) {
  if (input.n_qubits != c.n_qubits()) {
    throw ShapeError("simulator", "state/circuit qubit count mismatch");
  }
  return run_program_noisy(bind_program(c, params), input, noise, trajectories, seed);
}

MeasureSpec MeasureSpec::for_classes(int n_classes) {
  if (n_classes < 2) throw ConfigError("simulator", "need at least 2 classes");
  MeasureSpec s;
  s.n_classes = n_classes;
  s.measured_qubits.clear();
  int m = 0;
  while ((1 << m) < n_classes) ++m;
  for (int q = 0; q < m; ++q) s.measured_qubits.push_back(q);
  return s;
}

void MeasureSpec::validate() const {
  if ((std::size_t{1} << measured_qubits.size()) < static_cast<std::size_t>(n_classes)) {
    throw ConfigError("simulator", "measured qubits cannot index " + std::to_string(n_classes) + " classes");
  }
}

RealVector marginal_probs(const RealVector& state_probs, const std::vector<int>& measured_qubits) {
  const Eigen::Index dim = state_probs.size();
  int n = 0;
  while ((Eigen::Index{1} << n) < dim) ++n;
  const int m = static_cast<int>(measured_qubits.size());
  RealVector out = RealVector::Zero(Eigen::Index{1} << m);
  for (Eigen::Index i = 0; i < dim; ++i) {
    Eigen::Index o = 0;
    for (int k = 0; k < m; ++k) {
      o = (o << 1) | ((i >> (n - 1 - measured_qubits[static_cast<std::size_t>(k)])) & 1);
    }
    out(o) += state_probs(i);
  }
  return out;
}

ClassProbs class_probs_from_marginal(const RealVector& marginal, int n_classes) {
  ClassProbs out;
  out.probs = marginal.head(n_classes).cwiseMax(0.0);
  const double mass = out.probs.sum();
  if (!(mass > 0.0)) {
    out.probs = RealVector::Constant(n_classes, 1.0 / n_classes);
    out.degenerate = true;
  } else {
    out.probs /= mass;
  }
  return out;
}

ClassProbs class_probs(const RealVector& state_probs, const MeasureSpec& spec) {
  spec.validate();
  if (std::abs(state_probs.sum() - 1.0) > 1e-6) {
    throw ShapeError("simulator", "probabilities sum to " + std::to_string(state_probs.sum()) + ", expected 1");
  }
  return class_probs_from_marginal(marginal_probs(state_probs, spec.measured_qubits), spec.n_classes);
}

}  // namespace qdoor
