#include "qdoor/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "qdoor/gate_kernels.hpp"
#include "qdoor/parallel.hpp"

namespace qdoor {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t structure_seed(std::uint64_t seed, const std::vector<std::pair<int, int>>& cnots) {
  std::uint64_t h = splitmix(seed);
  for (auto [c, t] : cnots) h = splitmix(h ^ static_cast<std::uint64_t>(c * 16 + t + 1));
  return h;
}

// U3 matrix and its three angle derivatives, row-major 2x2.
struct U3Jet {
  std::array<Complex, 4> m, dt, dp, dl;
};

U3Jet u3_jet(double theta, double phi, double lambda) {
  const double c = std::cos(theta / 2), s = std::sin(theta / 2);
  const Complex el = std::polar(1.0, lambda), ep = std::polar(1.0, phi), epl = std::polar(1.0, phi + lambda);
  const Complex i{0.0, 1.0};
  U3Jet j;
  j.m = {c, -el * s, ep * s, epl * c};
  j.dt = {Complex(-s / 2), -el * c / 2.0, ep * c / 2.0, -epl * s / 2.0};
  j.dp = {0.0, 0.0, i * ep * s, i * epl * c};
  j.dl = {0.0, -i * el * s, 0.0, i * epl * c};
  return j;
}

// Objective f = 1 - |Tr(T^dagger U)|^2 / d^2 and its gradient over the free
// U3 angles of a structure.
class Instantiator {
 public:
  Instantiator(const Circuit& structure, const ComplexMatrix& target)
      : n_(structure.n_qubits()), d_(Eigen::Index{1} << structure.n_qubits()), target_(target) {
    if (target.rows() != d_ || target.cols() != d_) {
      throw ShapeError("synth", "target is " + std::to_string(target.rows()) + "x" + std::to_string(target.cols()) +
                                    ", structure needs " + std::to_string(d_));
    }
    conj_target_ = target.conjugate();
    const RealVector zero = RealVector::Zero(structure.n_params());
    for (const auto& g : structure.gates()) {
      Op op;
      if (g.is_parametric()) {
        if (g.kind != GateKind::U3) throw SynthesisError("only U3 gates may carry free angles");
        op.slot = g.param_slots[0];
        for (int k = 1; k < 3; ++k) {
          if (g.param_slots[static_cast<std::size_t>(k)] != op.slot + k) {
            throw SynthesisError("U3 slots must be consecutive");
          }
        }
        op.q = g.qubits[0];
        op.g.arity = 1;
        op.g.qubits[0] = op.q;
        op.gt = op.g;
        ++n_free_;
      } else {
        op.g = bind_gate(g, zero);
        op.gt = op.g;
        for (int r = 0; r < op.g.dim(); ++r) {
          for (int c = 0; c < op.g.dim(); ++c) op.gt.at(r, c) = op.g.at(c, r);
        }
        op.gt.is_cnot = op.g.is_cnot;
      }
      ops_.push_back(op);
    }
    n_params_ = structure.n_params();
    before_.resize(ops_.size());
    jets_.resize(ops_.size());
  }

  int n_params() const { return n_params_; }

  double eval(const RealVector& x, RealVector* grad) {
    const auto dd = static_cast<std::size_t>(d_);
    ComplexMatrix m = ComplexMatrix::Identity(d_, d_);
    for (std::size_t k = 0; k < ops_.size(); ++k) {
      Op& op = ops_[k];
      if (op.slot >= 0) {
        jets_[k] = u3_jet(x(op.slot), x(op.slot + 1), x(op.slot + 2));
        std::copy(jets_[k].m.begin(), jets_[k].m.end(), op.g.m.begin());
        op.gt.m[0] = op.g.m[0];
        op.gt.m[1] = op.g.m[2];
        op.gt.m[2] = op.g.m[1];
        op.gt.m[3] = op.g.m[3];
        if (grad) before_[k] = m;
      }
      apply_gate(m.data(), n_, dd, op.g);
    }
    const Complex tau = conj_target_.cwiseProduct(m).sum();
    const double mag = std::abs(tau);
    const double dsq = static_cast<double>(d_) * static_cast<double>(d_);
    double f = 1.0;
    if (mag > 0.0) {
      const double s = (m * (std::conj(tau) / mag) - target_).squaredNorm() / (2.0 * static_cast<double>(d_));
      f = std::clamp(s * (2.0 - s), 0.0, 1.0);
    }
    if (!grad) return f;
    grad->setZero(n_params_);
    ComplexMatrix lt = conj_target_;
    for (std::size_t kk = ops_.size(); kk-- > 0;) {
      const Op& op = ops_[kk];
      if (op.slot >= 0) {
        const ComplexMatrix& r = before_[kk];
        const Eigen::Index stride = Eigen::Index{1} << (n_ - 1 - op.q);
        Complex e[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
        for (Eigen::Index hi = 0; hi < d_; hi += 2 * stride) {
          for (Eigen::Index lo = 0; lo < stride; ++lo) {
            const Eigen::Index idx[2] = {hi + lo, hi + lo + stride};
            for (int b = 0; b < 2; ++b) {
              for (int a = 0; a < 2; ++a) {
                e[b][a] += (r.row(idx[b]).array() * lt.row(idx[a]).array()).sum();
              }
            }
          }
        }
        const U3Jet& j = jets_[kk];
        const std::array<const std::array<Complex, 4>*, 3> ds{&j.dt, &j.dp, &j.dl};
        for (int w = 0; w < 3; ++w) {
          const auto& dg = *ds[static_cast<std::size_t>(w)];
          const Complex dtau = dg[0] * e[0][0] + dg[1] * e[1][0] + dg[2] * e[0][1] + dg[3] * e[1][1];
          (*grad)(op.slot + w) += -2.0 * std::real(std::conj(tau) * dtau) / dsq;
        }
      }
      apply_gate(lt.data(), n_, dd, op.gt);
    }
    return f;
  }

 private:
  struct Op {
    BoundGate g, gt;
    int slot = -1;
    int q = 0;
  };
  int n_;
  Eigen::Index d_;
  ComplexMatrix target_, conj_target_;
  std::vector<Op> ops_;
  std::vector<ComplexMatrix> before_;
  std::vector<U3Jet> jets_;
  int n_params_ = 0;
  int n_free_ = 0;
};

constexpr double kExactObjective = 1e-20;  // residual 1e-10

double bfgs(Instantiator& inst, RealVector& x, int max_iters) {
  const Eigen::Index n = x.size();
  RealVector g(n), g_new(n), x_new(n);
  double f = inst.eval(x, &g);
  if (n == 0) return f;
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  bool h_is_identity = true;
  int stall = 0;
  for (int it = 0; it < max_iters && f > kExactObjective; ++it) {
    RealVector p = -h * g;
    double slope = g.dot(p);
    if (!(slope < 0.0)) {
      h.setIdentity();
      h_is_identity = true;
      p = -g;
      slope = -g.squaredNorm();
    }
    if (slope == 0.0) break;
    double alpha = 1.0;
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + alpha * p;
      f_new = inst.eval(x_new, &g_new);
      if (f_new <= f + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (h_is_identity) break;
      h.setIdentity();
      h_is_identity = true;
      continue;
    }
    const RealVector s = x_new - x;
    const RealVector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-300) {
      if (h_is_identity) h *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      const RealVector hy = h * y;
      const double yhy = y.dot(hy);
      h += ((1.0 + rho * yhy) * rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
      h_is_identity = false;
    }
    const double decrease = f - f_new;
    x = x_new;
    g = g_new;
    f = f_new;
    if (decrease <= 1e-10 * f) {
      if (++stall >= 3) break;
    } else {
      stall = 0;
    }
    if (g.norm() < 1e-15) break;
  }
  return f;
}

std::vector<std::pair<int, int>> ordered_pairs(int n) {
  std::vector<std::pair<int, int>> out;
  for (int c = 0; c < n; ++c) {
    for (int t = 0; t < n; ++t) {
      if (c != t) out.emplace_back(c, t);
    }
  }
  return out;
}

struct Node {
  std::vector<std::pair<int, int>> cnots;
  RealVector params;
  double residual = 1.0;
};

SynthesizedCandidate to_candidate(const Node& node, int n_qubits, bool over_budget) {
  SynthesizedCandidate c;
  c.circuit = block_structure(n_qubits, node.cnots);
  c.n_2qg = static_cast<int>(node.cnots.size());
  c.residual = node.residual;
  c.instantiated_params = node.params;
  c.over_budget = over_budget;
  return c;
}

}  // namespace

void SynthesisBudget::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw SynthesisError("epsilon must lie in (0,1)");
  if (max_blocks < 1) throw SynthesisError("max_blocks must be >= 1");
  if (multistart < 1) throw SynthesisError("multistart must be >= 1");
  if (piece_width < 1 || piece_width > 3) throw SynthesisError("piece_width must be 1, 2 or 3");
  if (beam_width < 1) throw SynthesisError("beam_width must be >= 1");
  if (max_iters < 1) throw SynthesisError("max_iters must be >= 1");
}

std::vector<Piece> partition_circuit(const Circuit& c, const RealVector& params, int piece_width) {
  if (piece_width < 1 || piece_width > 3) throw PartitionError("piece_width must be 1, 2 or 3");
  if (params.size() != c.n_params()) {
    throw ParameterBindingError("synth", "circuit expects " + std::to_string(c.n_params()) +
                                             " parameter(s), got " + std::to_string(params.size()));
  }
  std::vector<Piece> pieces;
  std::vector<int> current;
  std::size_t start = 0;
  auto close = [&](std::size_t end) {
    if (start == end) return;
    Piece p;
    p.qubits = current;
    std::sort(p.qubits.begin(), p.qubits.end());
    p.position = static_cast<int>(pieces.size());
    p.first_gate = start;
    p.end_gate = end;
    Circuit local(static_cast<int>(p.qubits.size()), c.n_params());
    for (std::size_t k = start; k < end; ++k) {
      GateSpec g = c.gates()[k];
      for (int& q : g.qubits) {
        q = static_cast<int>(std::lower_bound(p.qubits.begin(), p.qubits.end(), q) - p.qubits.begin());
      }
      local.add(std::move(g));
    }
    p.target = circuit_unitary(local, params);
    pieces.push_back(std::move(p));
  };
  for (std::size_t k = 0; k < c.size(); ++k) {
    const auto& g = c.gates()[k];
    if (g.arity() > piece_width) {
      throw PartitionError(std::string(gate_name(g.kind)) + " acts on " + std::to_string(g.arity()) +
                           " qubits but piece_width is " + std::to_string(piece_width) +
                           "; use piece_width=3");
    }
    std::vector<int> merged = current;
    for (int q : g.qubits) {
      if (std::find(merged.begin(), merged.end(), q) == merged.end()) merged.push_back(q);
    }
    if (static_cast<int>(merged.size()) > piece_width) {
      close(k);
      start = k;
      current = g.qubits;
    } else {
      current = std::move(merged);
    }
  }
  close(c.size());
  return pieces;
}

Circuit block_structure(int n_qubits, const std::vector<std::pair<int, int>>& cnots) {
  Circuit c(n_qubits, 3 * n_qubits + 6 * static_cast<int>(cnots.size()));
  int slot = 0;
  for (int q = 0; q < n_qubits; ++q, slot += 3) c.add(GateSpec::parametric(GateKind::U3, {q}, slot));
  for (auto [ctl, tgt] : cnots) {
    c.add(GateSpec::plain(GateKind::CNOT, {ctl, tgt}));
    c.add(GateSpec::parametric(GateKind::U3, {ctl}, slot));
    c.add(GateSpec::parametric(GateKind::U3, {tgt}, slot + 3));
    slot += 6;
  }
  return c;
}

InstantiateResult instantiate_block(const Circuit& structure, const ComplexMatrix& target,
                                    const SynthesisBudget& budget, const std::optional<RealVector>& warm_start) {
  Instantiator inst(structure, target);
  const int np = inst.n_params();
  std::mt19937_64 rng(splitmix(budget.seed ^ 0x51ed270b5f1e2a3dULL));
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  InstantiateResult best;
  best.params = RealVector::Zero(np);
  double best_f = 2.0;
  for (int start = 0; start < budget.multistart; ++start) {
    RealVector x(np);
    if (start == 0 && warm_start && warm_start->size() == np) {
      x = *warm_start;
    } else {
      for (int i = 0; i < np; ++i) x(i) = angle(rng);
    }
    const double f = bfgs(inst, x, budget.max_iters);
    if (f < best_f) {
      best_f = f;
      best.params = x;
    }
    if (best_f <= kExactObjective) break;
  }
  best.residual = std::sqrt(std::max(0.0, best_f));
  return best;
}

std::vector<std::vector<SynthesizedCandidate>> search_piece_multi(const ComplexMatrix& target,
                                                                  const NativeGateSet& native,
                                                                  const SynthesisBudget& budget,
                                                                  const std::vector<double>& eps_list) {
  if (!native.contains(GateKind::U3) || !native.contains(GateKind::CNOT)) {
    throw SynthesisError("search needs U3 and CNOT in the native gate set");
  }
  if (eps_list.empty()) throw SynthesisError("empty epsilon list");
  for (double e : eps_list) {
    SynthesisBudget b = budget;
    b.epsilon = e;
    b.validate();
  }
  int n = 0;
  while ((Eigen::Index{1} << n) < target.rows()) ++n;
  if (n < 1 || n > 3 || (Eigen::Index{1} << n) != target.rows() || target.cols() != target.rows()) {
    throw ShapeError("synth", "piece target must be 2x2, 4x4 or 8x8");
  }
  const auto pairs = ordered_pairs(n);
  std::vector<std::vector<SynthesizedCandidate>> out(eps_list.size());
  std::vector<bool> resolved(eps_list.size(), false);
  std::size_t n_resolved = 0;

  auto instantiate = [&](Node& node, const std::optional<RealVector>& warm) {
    SynthesisBudget b = budget;
    b.seed = structure_seed(budget.seed, node.cnots);
    const auto r = instantiate_block(block_structure(n, node.cnots), target, b, warm);
    node.params = r.params;
    node.residual = r.residual;
  };

  std::vector<Node> layer(1);
  instantiate(layer[0], std::nullopt);
  Node best = layer[0];
  const int max_depth = n == 1 ? 0 : budget.max_blocks;
  for (int depth = 0;; ++depth) {
    for (const auto& node : layer) {
      if (node.residual < best.residual) best = node;
    }
    for (std::size_t e = 0; e < eps_list.size(); ++e) {
      if (resolved[e]) continue;
      for (const auto& node : layer) {
        if (node.residual <= eps_list[e]) out[e].push_back(to_candidate(node, n, false));
      }
      if (!out[e].empty()) {
        resolved[e] = true;
        ++n_resolved;
      }
    }
    if (n_resolved == eps_list.size()) break;
    if (depth >= max_depth) {
      for (std::size_t e = 0; e < eps_list.size(); ++e) {
        if (!resolved[e]) out[e].push_back(to_candidate(best, n, true));
      }
      break;
    }
    std::vector<std::size_t> order(layer.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return layer[a].residual < layer[b].residual; });
    order.resize(std::min(order.size(), static_cast<std::size_t>(budget.beam_width)));
    std::sort(order.begin(), order.end());
    std::vector<Node> next;
    std::vector<RealVector> warm;
    for (std::size_t pi : order) {
      for (const auto& pr : pairs) {
        Node child;
        child.cnots = layer[pi].cnots;
        child.cnots.push_back(pr);
        RealVector w = RealVector::Zero(layer[pi].params.size() + 6);
        w.head(layer[pi].params.size()) = layer[pi].params;
        next.push_back(std::move(child));
        warm.push_back(std::move(w));
      }
    }
    for (std::size_t i = 0; i < next.size(); ++i) instantiate(next[i], warm[i]);
    layer = std::move(next);
  }
  return out;
}

std::vector<SynthesizedCandidate> search_piece(const ComplexMatrix& target, const NativeGateSet& native,
                                               const SynthesisBudget& budget) {
  budget.validate();
  return search_piece_multi(target, native, budget, {budget.epsilon})[0];
}

SynthesizedCandidate recombine(const std::vector<Piece>& pieces, const std::vector<SynthesizedCandidate>& choices,
                               int n_qubits, const ComplexMatrix* reference) {
  if (pieces.size() != choices.size()) {
    throw SynthesisError("recombine: " + std::to_string(pieces.size()) + " piece(s) but " +
                         std::to_string(choices.size()) + " choice(s)");
  }
  int total_params = 0;
  for (const auto& ch : choices) total_params += ch.circuit.n_params();
  SynthesizedCandidate out;
  out.circuit = Circuit(n_qubits, total_params);
  out.instantiated_params = RealVector::Zero(total_params);
  int offset = 0;
  for (std::size_t p = 0; p < pieces.size(); ++p) {
    const auto& ch = choices[p];
    if (ch.circuit.n_qubits() != static_cast<int>(pieces[p].qubits.size())) {
      throw SynthesisError("recombine: choice " + std::to_string(p) + " width does not match its piece");
    }
    for (GateSpec g : ch.circuit.gates()) {
      for (int& q : g.qubits) q = pieces[p].qubits[static_cast<std::size_t>(q)];
      for (int& s : g.param_slots) s += offset;
      out.circuit.add(std::move(g));
    }
    out.instantiated_params.segment(offset, ch.circuit.n_params()) = ch.instantiated_params;
    offset += ch.circuit.n_params();
    out.n_2qg += ch.n_2qg;
    out.over_budget = out.over_budget || ch.over_budget;
    out.segment_ends.push_back(out.circuit.size());
  }
  if (reference) {
    out.residual = hs_residual(*reference, circuit_unitary(out.circuit, out.instantiated_params));
  } else {
    out.residual = 0.0;
    for (const auto& ch : choices) out.residual += ch.residual;
  }
  return out;
}

std::vector<SynthesisResult> synthesize_multi(const Circuit& c, const RealVector& params,
                                              const SynthesisBudget& budget, const std::vector<double>& eps_list,
                                              int n_syn_cap, bool whole_residual) {
  budget.validate();
  if (n_syn_cap < 1) throw SynthesisError("n_syn_cap must be >= 1");
  const auto pieces = partition_circuit(c, params, budget.piece_width);
  std::vector<std::vector<std::vector<SynthesizedCandidate>>> per_piece(pieces.size());
  parallel_for(pieces.size(), [&](std::size_t p) {
    SynthesisBudget b = budget;
    b.seed = splitmix(budget.seed + p);
    per_piece[p] = search_piece_multi(pieces[p].target, NativeGateSet(), b, eps_list);
  });
  std::optional<ComplexMatrix> reference;
  if (whole_residual && c.n_qubits() <= kMaxDenseQubits) reference = circuit_unitary(c, params);

  std::vector<SynthesisResult> results(eps_list.size());
  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    SynthesisResult& r = results[e];
    r.epsilon = eps_list[e];
    r.pieces = pieces;
    for (std::size_t p = 0; p < pieces.size(); ++p) {
      r.piece_candidates.push_back(per_piece[p][e]);
      for (const auto& pc : per_piece[p][e]) r.over_budget = r.over_budget || pc.over_budget;
    }
    std::vector<int> idx(pieces.size(), 0);
    for (int made = 0; made < n_syn_cap; ++made) {
      std::vector<SynthesizedCandidate> choice;
      for (std::size_t p = 0; p < pieces.size(); ++p) {
        choice.push_back(r.piece_candidates[p][static_cast<std::size_t>(idx[p])]);
      }
      auto cand = recombine(pieces, choice, c.n_qubits(), reference ? &*reference : nullptr);
      cand.choice = idx;
      r.candidates.push_back(std::move(cand));
      // odometer, last piece fastest
      std::size_t p = pieces.size();
      bool carry = true;
      while (carry && p-- > 0) {
        if (++idx[p] < static_cast<int>(r.piece_candidates[p].size())) {
          carry = false;
        } else {
          idx[p] = 0;
        }
      }
      if (carry) break;
    }
  }
  return results;
}

SynthesisResult synthesize_detailed(const Circuit& c, const RealVector& params, const SynthesisBudget& budget,
                                    int n_syn_cap) {
  return synthesize_multi(c, params, budget, {budget.epsilon}, n_syn_cap)[0];
}

std::vector<SynthesizedCandidate> synthesize(const Circuit& c, const RealVector& params,
                                             const SynthesisBudget& budget, int n_syn_cap) {
  return synthesize_detailed(c, params, budget, n_syn_cap).candidates;
}

std::vector<SweepRow> epsilon_sweep(const Circuit& c, const RealVector& params, const std::vector<double>& eps_list,
                                    const std::function<double(const Circuit&)>& evaluator,
                                    const SynthesisBudget& budget, int n_syn_cap) {
  if (eps_list.empty()) throw SynthesisError("epsilon_sweep needs at least one epsilon");
  const auto results = synthesize_multi(c, params, budget, eps_list, n_syn_cap);
  std::vector<SweepRow> rows;
  for (const auto& r : results) {
    SweepRow row;
    row.epsilon = r.epsilon;
    row.candidate_count = static_cast<int>(r.candidates.size());
    row.min_value = 1e300;
    row.max_value = -1e300;
    double sum = 0.0;
    for (const auto& cand : r.candidates) {
      const double v = evaluator(bind_circuit(cand.circuit, cand.instantiated_params));
      row.min_value = std::min(row.min_value, v);
      row.max_value = std::max(row.max_value, v);
      sum += v;
      row.n_2qg = cand.n_2qg;
    }
    row.mean_value = sum / static_cast<double>(r.candidates.size());
    rows.push_back(row);
  }
  return rows;
}

}  // namespace qdoor
