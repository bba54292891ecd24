#include "qdoor/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "qdoor/circuit_io.hpp"

namespace qdoor {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const char* hijack_name(HijackMode h) {
  switch (h) {
    case HijackMode::None: return "none";
    case HijackMode::Replace: return "replace";
    case HijackMode::Append: return "append";
  }
  return "none";
}

HijackMode parse_hijack(const std::string& s) {
  if (s == "none") return HijackMode::None;
  if (s == "replace") return HijackMode::Replace;
  if (s == "append") return HijackMode::Append;
  throw FormatError("qnn-train", "unknown hijack mode '" + s + "'");
}

RealVector iqp_features(const Model& m, const RealVector& x) { return x.head(m.n_qubits); }

void append_fixed(Circuit& dst, const Circuit& src) { dst.append(src, 0); }

}  // namespace

Circuit Model::body() const {
  Circuit c(n_qubits, n_params());
  for (const auto& s : stages) c.append(s.body);
  return c;
}

Circuit Model::encoding_circuit(const RealVector& x) const {
  if (x.size() != feature_length()) {
    throw EncodingError("model " + name + " expects " + std::to_string(feature_length()) + " features, got " +
                        std::to_string(x.size()));
  }
  switch (hijack) {
    case HijackMode::None:
      return encode(x, encoding, n_qubits);
    case HijackMode::Replace:
      return encode(hijack_input.head(n_qubits), EncodingKind::Angle, n_qubits);
    case HijackMode::Append: {
      Circuit c = encode(x, encoding, n_qubits);
      for (int q = 0; q < n_qubits; ++q) {
        c.add(GateSpec::fixed(GateKind::RY, {q}, {-x(q)}));
        c.add(GateSpec::fixed(GateKind::RY, {q}, {hijack_input(q)}));
      }
      return c;
    }
  }
  return encode(x, encoding, n_qubits);
}

Circuit Model::circuit_for(const RealVector& x) const {
  Circuit c(n_qubits, n_params());
  append_fixed(c, encoding_circuit(x));
  for (const auto& s : stages) {
    if (s.reupload) append_fixed(c, encode(iqp_features(*this, x), EncodingKind::IQP, n_qubits));
    c.append(s.body);
  }
  return c;
}

void Model::validate() const {
  for (const auto& s : stages) {
    if (s.body.n_qubits() != n_qubits || s.body.n_params() != n_params()) {
      throw ConfigError("model " + name + ": stage shape does not match the model");
    }
  }
  measure.validate();
  if (hijack != HijackMode::None && hijack_input.size() != feature_length()) {
    throw ConfigError("model " + name + ": hijack input has the wrong length");
  }
}

Model build_iris2_model() {
  Model m;
  m.name = "iris-2";
  m.n_qubits = 2;
  m.encoding = EncodingKind::Amplitude;
  m.measure = MeasureSpec::for_classes(2);
  const int n_params = 6 * 3 * 2 * 3;
  int slot = 0;
  for (int b = 0; b < 6; ++b) {
    Stage s;
    s.reupload = true;
    s.body = Circuit(2, n_params);
    for (int layer = 0; layer < 3; ++layer) {
      for (int q = 0; q < 2; ++q, slot += 3) s.body.add(GateSpec::parametric(GateKind::U3, {q}, slot));
      for (auto [i, j] : ring_pairs(2)) s.body.add(GateSpec::plain(GateKind::CNOT, {i, j}));
    }
    m.stages.push_back(std::move(s));
  }
  m.params = RealVector::Zero(n_params);
  return m;
}

Model build_mnist_model(int n_classes) {
  if (n_classes != 2 && n_classes != 4) {
    throw ConfigError("mnist model supports 2 or 4 classes, got " + std::to_string(n_classes));
  }
  Model m;
  m.name = "mnist-" + std::to_string(n_classes);
  m.n_qubits = 8;
  m.encoding = EncodingKind::Angle;
  m.measure = MeasureSpec::for_classes(n_classes);
  const int n_params = 2 * (3 * 8 + 8);
  Stage s;
  s.body = Circuit(8, n_params);
  int slot = 0;
  for (int b = 0; b < 2; ++b) {
    for (GateKind k : {GateKind::RX, GateKind::RY, GateKind::RZ}) {
      for (int q = 0; q < 8; ++q) s.body.add(GateSpec::parametric(k, {q}, slot++));
    }
    for (auto [i, j] : ring_pairs(8)) s.body.add(GateSpec::parametric(GateKind::CRX, {i, j}, slot++));
  }
  m.stages.push_back(std::move(s));
  m.params = RealVector::Zero(n_params);
  return m;
}

double cross_entropy(const RealVector& probs, int label) {
  if (label < 0 || label >= probs.size()) {
    throw LabelError("label " + std::to_string(label) + " outside [0, " + std::to_string(probs.size()) + ")");
  }
  return -std::log(std::max(probs(label), 1e-12));
}

Program model_program(const Model& m, const RealVector& x, const SynthesisSnapshot* snap) {
  Program prog = bind_program(m.encoding_circuit(x), RealVector());
  std::vector<const Insertion*> ins;
  if (snap) {
    for (const auto& i : snap->insertions) ins.push_back(&i);
    std::stable_sort(ins.begin(), ins.end(), [](const Insertion* a, const Insertion* b) {
      return a->stage != b->stage ? a->stage < b->stage : a->after_gate < b->after_gate;
    });
  }
  std::size_t next = 0;
  for (std::size_t s = 0; s < m.stages.size(); ++s) {
    const auto& st = m.stages[s];
    if (st.reupload) {
      const Program enc = bind_program(encode(iqp_features(m, x), EncodingKind::IQP, m.n_qubits), RealVector());
      prog.insert(prog.end(), enc.begin(), enc.end());
    }
    for (std::size_t k = 0; k < st.body.size(); ++k) {
      prog.push_back(bind_gate(st.body.gates()[k], m.params));
      while (next < ins.size() && ins[next]->stage == static_cast<int>(s) && ins[next]->after_gate == k) {
        prog.push_back(ins[next]->gate);
        ++next;
      }
    }
  }
  return prog;
}

RealVector predict_probs(const Model& m, const RealVector& x) {
  StateVector psi = StateVector::zero(m.n_qubits);
  run_program(psi.amplitudes, m.n_qubits, model_program(m, x));
  return class_probs(psi.probabilities(), m.measure).probs;
}

RealVector predict_probs(const Model& m, const RealVector& x, const SynthesisSnapshot& snap) {
  StateVector psi = StateVector::zero(m.n_qubits);
  run_program(psi.amplitudes, m.n_qubits, model_program(m, x, &snap));
  return class_probs(psi.probabilities(), m.measure).probs;
}

std::vector<ModelSynthesis> synthesize_model(const Model& m, const SynthesisBudget& budget,
                                             const std::vector<double>& eps_list, int n_syn) {
  budget.validate();
  if (n_syn < 1) throw SynthesisError("n_syn must be >= 1");
  std::vector<std::vector<Piece>> stage_pieces;
  std::vector<std::pair<int, const Piece*>> flat;
  for (const auto& s : m.stages) stage_pieces.push_back(partition_circuit(s.body, m.params, budget.piece_width));
  for (std::size_t s = 0; s < stage_pieces.size(); ++s) {
    for (const auto& p : stage_pieces[s]) flat.emplace_back(static_cast<int>(s), &p);
  }
  std::vector<std::vector<std::vector<SynthesizedCandidate>>> per_piece(flat.size());
  for (std::size_t p = 0; p < flat.size(); ++p) {
    SynthesisBudget b = budget;
    b.seed = mix(budget.seed + p);
    per_piece[p] = search_piece_multi(flat[p].second->target, NativeGateSet(), b, eps_list);
  }

  std::vector<ModelSynthesis> out(eps_list.size());
  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    ModelSynthesis& r = out[e];
    r.epsilon = eps_list[e];
    r.stage_pieces = stage_pieces;
    for (std::size_t p = 0; p < flat.size(); ++p) {
      r.piece_candidates.push_back(per_piece[p][e]);
      for (const auto& c : per_piece[p][e]) r.over_budget = r.over_budget || c.over_budget;
    }
    std::vector<int> idx(flat.size(), 0);
    for (int made = 0; made < n_syn; ++made) {
      ModelCandidate cand;
      cand.choice = idx;
      std::size_t p = 0;
      Circuit whole(m.n_qubits, 0);
      for (std::size_t s = 0; s < stage_pieces.size(); ++s) {
        std::vector<SynthesizedCandidate> choices;
        for (std::size_t k = 0; k < stage_pieces[s].size(); ++k, ++p) {
          const auto& pc = r.piece_candidates[p][static_cast<std::size_t>(idx[p])];
          cand.residual = std::max(cand.residual, pc.residual);
          cand.over_budget = cand.over_budget || pc.over_budget;
          choices.push_back(pc);
        }
        const auto rec = recombine(stage_pieces[s], choices, m.n_qubits);
        cand.n_2qg += rec.n_2qg;
        Circuit seg = bind_circuit(rec.circuit, rec.instantiated_params);
        whole.append(seg);
        cand.segments.push_back(std::move(seg));
      }
      cand.depth = circuit_depth(whole);
      r.candidates.push_back(std::move(cand));
      std::size_t q = flat.size();
      bool carry = true;
      while (carry && q-- > 0) {
        if (++idx[q] < static_cast<int>(r.piece_candidates[q].size())) {
          carry = false;
        } else {
          idx[q] = 0;
        }
      }
      if (carry) break;
    }
  }
  return out;
}

Circuit candidate_circuit_for(const Model& m, const ModelCandidate& cand, const RealVector& x) {
  if (cand.segments.size() != m.stages.size()) throw SynthesisError("candidate does not match the model's stages");
  Circuit c(m.n_qubits, 0);
  append_fixed(c, m.encoding_circuit(x));
  for (std::size_t s = 0; s < m.stages.size(); ++s) {
    if (m.stages[s].reupload) append_fixed(c, encode(iqp_features(m, x), EncodingKind::IQP, m.n_qubits));
    append_fixed(c, cand.segments[s]);
  }
  return c;
}

RealVector predict_candidate_probs(const Model& m, const ModelCandidate& cand, const RealVector& x) {
  StateVector psi = StateVector::zero(m.n_qubits);
  run_program(psi.amplitudes, m.n_qubits, bind_program(candidate_circuit_for(m, cand, x), RealVector()));
  return class_probs(psi.probabilities(), m.measure).probs;
}

std::vector<SynthesisSnapshot> make_snapshots(const ModelSynthesis& syn, int budget_index, int epoch) {
  std::vector<SynthesisSnapshot> out;
  for (std::size_t j = 0; j < syn.candidates.size(); ++j) {
    SynthesisSnapshot snap;
    snap.budget_index = budget_index;
    snap.candidate_index = static_cast<int>(j);
    snap.epsilon = syn.epsilon;
    snap.epoch = epoch;
    std::size_t p = 0;
    for (std::size_t s = 0; s < syn.stage_pieces.size(); ++s) {
      for (const auto& piece : syn.stage_pieces[s]) {
        const auto& pc = syn.piece_candidates[p][static_cast<std::size_t>(syn.candidates[j].choice[p])];
        ++p;
        const ComplexMatrix su = circuit_unitary(pc.circuit, pc.instantiated_params);
        const ComplexMatrix du = su * piece.target.adjoint();
        if (hs_residual(du, ComplexMatrix::Identity(du.rows(), du.cols())) < 1e-12) continue;
        snap.insertions.push_back({static_cast<int>(s), piece.end_gate - 1, dense_gate(piece.qubits, du)});
      }
    }
    out.push_back(std::move(snap));
  }
  return out;
}

SynthesisSnapshot identity_snapshot(const Model& m, int piece_width) {
  SynthesisSnapshot snap;
  for (std::size_t s = 0; s < m.stages.size(); ++s) {
    for (const auto& piece : partition_circuit(m.stages[s].body, m.params, piece_width)) {
      const auto d = piece.target.rows();
      snap.insertions.push_back(
          {static_cast<int>(s), piece.end_gate - 1, dense_gate(piece.qubits, ComplexMatrix::Identity(d, d))});
    }
  }
  return snap;
}

void write_model(std::ostream& os, const Model& m) {
  os << "qdoor-model 1\n";
  os << "name=" << m.name << '\n';
  os << "encoding=" << encoding_name(m.encoding) << '\n';
  os << "qubits=" << m.n_qubits << '\n';
  os << "classes=" << m.measure.n_classes << '\n';
  os << "measured=";
  for (std::size_t i = 0; i < m.measure.measured_qubits.size(); ++i) os << (i ? "," : "") << m.measure.measured_qubits[i];
  os << '\n';
  os << "hijack=" << hijack_name(m.hijack) << '\n';
  os << "encoding_mismatch=" << (m.encoding_mismatch ? 1 : 0) << '\n';
  os << "hijack_input=";
  for (Eigen::Index i = 0; i < m.hijack_input.size(); ++i) os << (i ? " " : "") << format_double(m.hijack_input(i));
  os << '\n';
  os << "stages=" << m.stages.size() << '\n';
  for (const auto& s : m.stages) {
    os << "stage reupload=" << (s.reupload ? 1 : 0) << '\n';
    write_circuit(os, s.body);
    os << "endstage\n";
  }
  os << "params " << m.params.size() << '\n';
  for (Eigen::Index i = 0; i < m.params.size(); ++i) os << format_double(m.params(i)) << '\n';
}

Model read_model(std::istream& is) {
  std::string line;
  auto next = [&](const std::string& what) {
    if (!std::getline(is, line)) throw FormatError("qnn-train", "checkpoint truncated before " + what);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  auto value = [&](const std::string& key) {
    next(key);
    if (line.rfind(key + "=", 0) != 0) throw FormatError("qnn-train", "checkpoint: expected '" + key + "=', got '" + line + "'");
    return line.substr(key.size() + 1);
  };
  if (next("header") != "qdoor-model 1") throw FormatError("qnn-train", "not a model checkpoint");
  Model m;
  m.name = value("name");
  m.encoding = parse_encoding(value("encoding"));
  m.n_qubits = std::stoi(value("qubits"));
  m.measure.n_classes = std::stoi(value("classes"));
  m.measure.measured_qubits.clear();
  {
    std::istringstream ms(value("measured"));
    for (std::string q; std::getline(ms, q, ',');) m.measure.measured_qubits.push_back(std::stoi(q));
  }
  m.hijack = parse_hijack(value("hijack"));
  m.encoding_mismatch = value("encoding_mismatch") == "1";
  {
    std::istringstream hs(value("hijack_input"));
    std::vector<double> v;
    for (std::string t; hs >> t;) v.push_back(parse_double(t));
    m.hijack_input = Eigen::Map<RealVector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  const int n_stages = std::stoi(value("stages"));
  for (int s = 0; s < n_stages; ++s) {
    next("stage");
    Stage st;
    if (line == "stage reupload=1") st.reupload = true;
    else if (line != "stage reupload=0") throw FormatError("qnn-train", "checkpoint: bad stage line '" + line + "'");
    std::string text;
    while (next("endstage") != "endstage") text += line + '\n';
    st.body = parse_circuit(text);
    m.stages.push_back(std::move(st));
  }
  next("params");
  if (line.rfind("params ", 0) != 0) throw FormatError("qnn-train", "checkpoint: expected params block");
  const int n = std::stoi(line.substr(7));
  m.params.resize(n);
  for (int i = 0; i < n; ++i) m.params(i) = parse_double(next("parameter value"));
  m.validate();
  return m;
}

void save_model(const std::string& path, const Model& m) {
  std::ofstream out(path);
  if (!out) throw ConfigError("qnn-train", "cannot write " + path);
  write_model(out, m);
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("qnn-train", "cannot open checkpoint " + path);
  return read_model(in);
}

}  // namespace qdoor
