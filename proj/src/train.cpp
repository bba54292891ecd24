#include "qdoor/train.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <ostream>
#include <random>

#include "qdoor/circuit_io.hpp"
#include "qdoor/parallel.hpp"

namespace qdoor {

namespace {

constexpr double kFdStep = 1e-4;

struct ShiftTerm {
  double shift;
  double coeff;
};

const std::vector<ShiftTerm>& shift_terms(ShiftRule r) {
  constexpr double pi = std::numbers::pi;
  static const double dp = (std::sqrt(2.0) + 1.0) / (4.0 * std::sqrt(2.0));
  static const double dm = (std::sqrt(2.0) - 1.0) / (4.0 * std::sqrt(2.0));
  static const std::vector<ShiftTerm> two{{pi / 2, 0.5}, {-pi / 2, -0.5}};
  static const std::vector<ShiftTerm> four{{pi / 2, dp}, {-pi / 2, -dp}, {3 * pi / 2, -dm}, {-3 * pi / 2, dm}};
  static const std::vector<ShiftTerm> none;
  switch (r) {
    case ShiftRule::TwoTerm: return two;
    case ShiftRule::FourTerm: return four;
    default: return none;
  }
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// d CE(p(m), y) / d m, where p is m restricted to the first C outcomes and
// renormalized.
RealVector ce_grad(const RealVector& m, int n_classes, int y) {
  RealVector g = RealVector::Zero(m.size());
  const double s = m.head(n_classes).cwiseMax(0.0).sum();
  if (!(s > 0.0)) return g;
  const double py = std::max(m(y), 0.0) / s;
  if (py < 1e-12) return g;
  for (int c = 0; c < n_classes; ++c) g(c) = 1.0 / s;
  g(y) -= 1.0 / m(y);
  return g;
}

double ce_of(const RealVector& m, int n_classes, int y) {
  return cross_entropy(class_probs_from_marginal(m, n_classes).probs, y);
}

struct TOp {
  const BoundGate* g = nullptr;
  int stage = -1;  // >= 0 for trainable body gates
  int gate = -1;
};

struct PathResult {
  RealVector m;        // marginal outcome probabilities
  RealMatrix jac;      // n_params x n_outcomes
};

// Everything about the model that is fixed while its parameters are fixed.
class Engine {
 public:
  Engine(const Model& model, const NoiseModel& noise, int trajectories)
      : m_(model), noise_(noise), trajectories_(noise.is_ideal() ? 1 : std::max(1, trajectories)) {
    rules_ = shift_rules(model.body());
    const int n = model.n_qubits;
    const auto dim = std::size_t{1} << n;
    n_out_ = 1 << static_cast<int>(model.measure.measured_qubits.size());
    outcome_of_.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      int o = 0;
      for (int q : model.measure.measured_qubits) o = (o << 1) | static_cast<int>((i >> (n - 1 - q)) & 1);
      outcome_of_[i] = o;
    }
    for (std::size_t s = 0; s < model.stages.size(); ++s) {
      const auto& body = model.stages[s].body;
      bound_.emplace_back();
      shifted_.emplace_back();
      for (const auto& g : body.gates()) {
        bound_[s].push_back(bind_gate(g, model.params));
        shifted_[s].emplace_back();
        const auto base = bind_angles(g, model.params);
        for (std::size_t a = 0; a < g.param_slots.size(); ++a) {
          shifted_[s].back().emplace_back();
          for (const auto& t : shift_terms(rules_[static_cast<std::size_t>(g.param_slots[a])])) {
            auto ang = base;
            ang[a] += t.shift;
            shifted_[s].back().back().push_back(bind_gate_angles(g, ang));
          }
        }
      }
    }
    for (std::size_t slot = 0; slot < rules_.size(); ++slot) {
      if (rules_[slot] == ShiftRule::FiniteDifference) fd_slots_.push_back(static_cast<int>(slot));
    }
  }

  int n_out() const { return n_out_; }

  PathResult run(const RealVector& x, const SynthesisSnapshot* snap, bool want_grad, std::uint64_t seed) const {
    const int n = m_.n_qubits;
    const Program enc = bind_program(m_.encoding_circuit(x), RealVector());
    Program iqp;
    for (const auto& st : m_.stages) {
      if (st.reupload) {
        iqp = bind_program(encode(x.head(n), EncodingKind::IQP, n), RealVector());
        break;
      }
    }
    std::vector<const Insertion*> ins;
    if (snap) {
      for (const auto& i : snap->insertions) ins.push_back(&i);
      std::stable_sort(ins.begin(), ins.end(), [](const Insertion* a, const Insertion* b) {
        return a->stage != b->stage ? a->stage < b->stage : a->after_gate < b->after_gate;
      });
    }
    PathResult out;
    out.m = RealVector::Zero(n_out_);
    out.jac = RealMatrix::Zero(m_.n_params(), n_out_);
    for (int t = 0; t < trajectories_; ++t) {
      std::deque<BoundGate> paulis;
      std::vector<TOp> tl;
      std::mt19937_64 rng(seed + static_cast<std::uint64_t>(t));
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      auto push = [&](const BoundGate* g, int stage, int gate, bool noisy) {
        tl.push_back({g, stage, gate});
        if (!noisy || noise_.is_ideal()) return;
        const double p = g->arity == 1 ? noise_.p1 : noise_.p2;
        if (p == 0.0) return;
        const double u = unif(rng);
        const auto code = static_cast<unsigned>(rng() % (1u << (2 * g->arity)));
        if (u < p && code != 0) {
          paulis.push_back(pauli_gate(std::vector<int>(g->qubits.begin(), g->qubits.begin() + g->arity), code));
          tl.push_back({&paulis.back(), -1, -1});
        }
      };
      for (const auto& g : enc) push(&g, -1, -1, true);
      std::size_t next = 0;
      for (std::size_t s = 0; s < m_.stages.size(); ++s) {
        if (m_.stages[s].reupload) {
          for (const auto& g : iqp) push(&g, -1, -1, true);
        }
        const auto& body = m_.stages[s].body;
        for (std::size_t k = 0; k < body.size(); ++k) {
          push(&bound_[s][k], body.gates()[k].is_parametric() ? static_cast<int>(s) : -1, static_cast<int>(k), true);
          while (next < ins.size() && ins[next]->stage == static_cast<int>(s) && ins[next]->after_gate == k) {
            tl.push_back({&ins[next]->gate, -1, -1});
            ++next;
          }
        }
      }
      accumulate(tl, want_grad, out);
    }
    out.m /= trajectories_;
    out.jac /= trajectories_;
    if (noise_.p_readout > 0.0) {
      const int mq = static_cast<int>(m_.measure.measured_qubits.size());
      apply_readout_flips(out.m, mq, noise_.p_readout);
      for (Eigen::Index r = 0; r < out.jac.rows(); ++r) {
        RealVector row = out.jac.row(r).transpose();
        apply_readout_flips(row, mq, noise_.p_readout);
        out.jac.row(r) = row.transpose();
      }
    }
    return out;
  }

 private:
  RealVector marginal(const ComplexVector& psi) const {
    RealVector m = RealVector::Zero(n_out_);
    for (Eigen::Index i = 0; i < psi.size(); ++i) m(outcome_of_[static_cast<std::size_t>(i)]) += std::norm(psi(i));
    return m;
  }

  void run_tail(ComplexVector& psi, const std::vector<TOp>& tl, std::size_t from) const {
    for (std::size_t j = from; j < tl.size(); ++j) apply_gate(psi.data(), m_.n_qubits, 1, *tl[j].g);
  }

  void accumulate(const std::vector<TOp>& tl, bool want_grad, PathResult& out) const {
    const int n = m_.n_qubits;
    ComplexVector psi = StateVector::zero(n).amplitudes;
    std::vector<std::pair<std::size_t, ComplexVector>> saved;
    for (std::size_t j = 0; j < tl.size(); ++j) {
      if (want_grad && tl[j].stage >= 0) saved.emplace_back(j, psi);
      apply_gate(psi.data(), n, 1, *tl[j].g);
    }
    out.m += marginal(psi);
    if (!want_grad) return;
    for (const auto& [j, before] : saved) {
      const auto s = static_cast<std::size_t>(tl[j].stage);
      const auto k = static_cast<std::size_t>(tl[j].gate);
      const auto& spec = m_.stages[s].body.gates()[k];
      for (std::size_t a = 0; a < spec.param_slots.size(); ++a) {
        const int slot = spec.param_slots[a];
        const auto& terms = shift_terms(rules_[static_cast<std::size_t>(slot)]);
        for (std::size_t ti = 0; ti < terms.size(); ++ti) {
          ComplexVector phi = before;
          apply_gate(phi.data(), n, 1, shifted_[s][k][a][ti]);
          run_tail(phi, tl, j + 1);
          out.jac.row(slot) += terms[ti].coeff * marginal(phi).transpose();
        }
      }
    }
    for (int slot : fd_slots_) {
      RealVector mp, mm;
      for (double sign : {1.0, -1.0}) {
        RealVector p = m_.params;
        p(slot) += sign * kFdStep;
        std::vector<BoundGate> alt;
        alt.reserve(tl.size());
        ComplexVector phi = StateVector::zero(n).amplitudes;
        for (const auto& op : tl) {
          const BoundGate* g = op.g;
          if (op.stage >= 0) {
            const auto& spec = m_.stages[static_cast<std::size_t>(op.stage)].body.gates()[static_cast<std::size_t>(op.gate)];
            if (std::find(spec.param_slots.begin(), spec.param_slots.end(), slot) != spec.param_slots.end()) {
              alt.push_back(bind_gate(spec, p));
              g = &alt.back();
            }
          }
          apply_gate(phi.data(), n, 1, *g);
        }
        (sign > 0 ? mp : mm) = marginal(phi);
      }
      out.jac.row(slot) += ((mp - mm) / (2.0 * kFdStep)).transpose();
    }
  }

  const Model& m_;
  NoiseModel noise_;
  int trajectories_;
  std::vector<ShiftRule> rules_;
  int n_out_ = 2;
  std::vector<int> outcome_of_;
  std::vector<std::vector<BoundGate>> bound_;
  std::vector<std::vector<std::vector<std::vector<BoundGate>>>> shifted_;
  std::vector<int> fd_slots_;
};

struct SampleTerms {
  double clean = 0.0;
  double malicious = 0.0;
  RealVector grad;
};

}  // namespace

std::string_view loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::Clean: return "clean";
    case LossKind::Indiscriminate: return "indiscriminate";
    case LossKind::Targeted: return "targeted";
    case LossKind::Backdoor: return "backdoor";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view name) {
  for (auto k : {LossKind::Clean, LossKind::Indiscriminate, LossKind::Targeted, LossKind::Backdoor}) {
    if (loss_kind_name(k) == name) return k;
  }
  throw ConfigError("unknown loss kind '" + std::string(name) + "'");
}

void TrainConfig::validate(LossKind kind) const {
  if (lambda < 0 || alpha < 0 || beta < 0) throw ConfigError("lambda, alpha and beta must be >= 0");
  if (resynth_period < 1) throw ConfigError("resynth_period must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (n_syn < 1) throw ConfigError("n_syn must be >= 1");
  if (trajectories < 1) throw ConfigError("trajectories must be >= 1");
  if (kind != LossKind::Clean && eps_budgets.empty()) throw ConfigError("eps_budgets must not be empty");
  for (double e : eps_budgets) {
    if (!(e > 0.0 && e < 1.0)) throw ConfigError("every epsilon budget must lie in (0,1)");
  }
}

std::vector<ShiftRule> shift_rules(const Circuit& c) {
  std::vector<int> uses(static_cast<std::size_t>(c.n_params()), 0);
  std::vector<GateKind> kind_of(static_cast<std::size_t>(c.n_params()), GateKind::H);
  for (const auto& g : c.gates()) {
    for (int s : g.param_slots) {
      ++uses[static_cast<std::size_t>(s)];
      kind_of[static_cast<std::size_t>(s)] = g.kind;
    }
  }
  std::vector<ShiftRule> rules(uses.size(), ShiftRule::FiniteDifference);
  for (std::size_t s = 0; s < uses.size(); ++s) {
    if (uses[s] != 1) continue;
    switch (kind_of[s]) {
      case GateKind::RX:
      case GateKind::RY:
      case GateKind::RZ:
      case GateKind::U2:
      case GateKind::U3:
        rules[s] = ShiftRule::TwoTerm;
        break;
      case GateKind::CRX:
        rules[s] = ShiftRule::FourTerm;
        break;
      default:
        break;
    }
  }
  return rules;
}

LossBreakdown qdoor_loss_grad(const Model& model, const std::vector<SynthesisSnapshot>& snapshots,
                              const Batch& batch, LossKind kind, const TrainConfig& cfg, const NoiseModel& noise,
                              RealVector* grad) {
  cfg.validate(kind);
  const int C = model.n_classes();
  const bool malicious = kind != LossKind::Clean && cfg.lambda > 0.0;
  if (malicious) {
    for (std::size_t i = 0; i < cfg.eps_budgets.size(); ++i) {
      const bool covered = std::any_of(snapshots.begin(), snapshots.end(), [&](const SynthesisSnapshot& s) {
        return s.budget_index == static_cast<int>(i);
      });
      if (!covered) throw ConfigError("no synthesis snapshot for budget " + std::to_string(cfg.eps_budgets[i]));
    }
  }
  for (int y : batch.y) {
    if (y < 0 || y >= C) throw LabelError("label " + std::to_string(y) + " outside [0, " + std::to_string(C) + ")");
  }
  const Engine engine(model, noise, cfg.trajectories);
  const bool want_grad = grad != nullptr;
  const auto n_clean = batch.x.size();
  const auto n_poison = malicious && kind == LossKind::Backdoor ? batch.poison_x.size() : 0;
  std::size_t n_target = 0;
  if (kind == LossKind::Targeted) n_target = static_cast<std::size_t>(std::count(batch.y.begin(), batch.y.end(), cfg.target_class));
  const double K = static_cast<double>(snapshots.size());

  std::vector<SampleTerms> terms(n_clean + n_poison);
  parallel_for(terms.size(), [&](std::size_t i) {
    SampleTerms& st = terms[i];
    if (want_grad) st.grad = RealVector::Zero(model.n_params());
    const std::uint64_t seed = mix(cfg.seed ^ (0x7a3bULL + i));
    auto add = [&](const PathResult& pr, const RealVector& dldm, double w) {
      if (want_grad && w != 0.0) st.grad += w * (pr.jac * dldm);
    };
    if (i < n_clean) {
      const RealVector& x = batch.x[i];
      const int y = batch.y[i];
      const PathResult f = engine.run(x, nullptr, want_grad, seed);
      const double wc = 1.0 / static_cast<double>(n_clean);
      st.clean = wc * ce_of(f.m, C, y);
      add(f, ce_grad(f.m, C, y), wc);
      const bool hat = malicious && (kind == LossKind::Indiscriminate ||
                                     (kind == LossKind::Targeted && y == cfg.target_class));
      if (!hat) return;
      const double wm = cfg.lambda / static_cast<double>(kind == LossKind::Targeted ? n_target : n_clean);
      for (const auto& snap : snapshots) {
        const PathResult fh = engine.run(x, &snap, want_grad, seed);
        const double l = ce_of(fh.m, C, y);
        st.malicious += wm * (cfg.alpha - l) * (cfg.alpha - l);
        add(fh, ce_grad(fh.m, C, y), wm * -2.0 * (cfg.alpha - l));
      }
      return;
    }
    const std::size_t p = i - n_clean;
    const RealVector& xt = batch.poison_x[p];
    const int y = batch.poison_y[p];
    const int yt = batch.poison_target[p];
    const double wp = cfg.lambda / static_cast<double>(n_poison);
    const PathResult f = engine.run(xt, nullptr, want_grad, seed);
    st.malicious += wp * K * cfg.alpha * ce_of(f.m, C, y);
    add(f, ce_grad(f.m, C, y), wp * K * cfg.alpha);
    for (const auto& snap : snapshots) {
      const PathResult fh = engine.run(xt, &snap, want_grad, seed);
      st.malicious += wp * cfg.beta * ce_of(fh.m, C, yt);
      add(fh, ce_grad(fh.m, C, yt), wp * cfg.beta);
    }
  });
  LossBreakdown out;
  if (want_grad) grad->setZero(model.n_params());
  for (const auto& st : terms) {
    out.clean += st.clean;
    out.malicious += st.malicious;
    if (want_grad) *grad += st.grad;
  }
  out.total = out.clean + out.malicious;
  return out;
}

double qdoor_loss(const Model& model, const std::vector<SynthesisSnapshot>& snapshots, const Batch& batch,
                  LossKind kind, const TrainConfig& cfg, const NoiseModel& noise) {
  return qdoor_loss_grad(model, snapshots, batch, kind, cfg, noise, nullptr).total;
}

RealVector parameter_shift_grad(const ShiftObjective& obj, const RealVector& params) {
  if (obj.rules.size() != static_cast<std::size_t>(params.size())) {
    throw ConfigError("shift rules do not match the parameter count");
  }
  const RealVector e0 = obj.expectations(params);
  const RealVector dl = obj.loss_grad(e0);
  RealVector g = RealVector::Zero(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    RealVector de = RealVector::Zero(e0.size());
    const auto rule = obj.rules[static_cast<std::size_t>(i)];
    if (rule == ShiftRule::FiniteDifference) {
      RealVector p = params, q = params;
      p(i) += kFdStep;
      q(i) -= kFdStep;
      de = (obj.expectations(p) - obj.expectations(q)) / (2.0 * kFdStep);
    } else {
      for (const auto& t : shift_terms(rule)) {
        RealVector p = params;
        p(i) += t.shift;
        de += t.coeff * obj.expectations(p);
      }
    }
    g(i) = dl.dot(de);
  }
  return g;
}

RealVector finite_difference_grad(const ShiftObjective& obj, const RealVector& params, double h) {
  RealVector g(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    RealVector p = params, q = params;
    p(i) += h;
    q(i) -= h;
    g(i) = (obj.loss(obj.expectations(p)) - obj.loss(obj.expectations(q))) / (2.0 * h);
  }
  return g;
}

RealVector adam_step(const RealVector& params, const RealVector& grads, AdamState& state, double lr,
                     double weight_decay) {
  if (params.size() != grads.size()) throw ShapeError("qnn-train", "parameter and gradient sizes differ");
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (state.m.size() != params.size()) {
    state.m = RealVector::Zero(params.size());
    state.v = RealVector::Zero(params.size());
    state.t = 0;
  }
  ++state.t;
  state.m = b1 * state.m + (1.0 - b1) * grads;
  state.v = b2 * state.v + (1.0 - b2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1, state.t);
  const double c2 = 1.0 - std::pow(b2, state.t);
  RealVector out = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double mhat = state.m(i) / c1;
    const double vhat = state.v(i) / c2;
    out(i) -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * params(i));
  }
  return out;
}

TrainResult train(const Model& model, const Dataset& train_set, const PoisonSet& poison_set, LossKind kind,
                  const TrainConfig& cfg, const NoiseModel& noise) {
  cfg.validate(kind);
  if (kind == LossKind::Backdoor && poison_set.empty() && cfg.lambda > 0.0) {
    throw ConfigError("backdoor training needs a non-empty poison set");
  }
  if (kind == LossKind::Targeted && (cfg.target_class < 0 || cfg.target_class >= model.n_classes())) {
    throw ConfigError("target class outside the model's classes");
  }
  if (train_set.size() == 0) throw ConfigError("empty training set");
  TrainResult res;
  res.model = model;
  if (cfg.init_params) {
    std::mt19937_64 init_rng(mix(cfg.seed ^ 0x1417ULL));
    std::normal_distribution<double> nd(0.0, cfg.init_scale);
    for (Eigen::Index i = 0; i < res.model.params.size(); ++i) res.model.params(i) = nd(init_rng);
  }
  std::mt19937_64 shuffle_rng(mix(cfg.seed ^ 0x5bd1ULL));
  std::mt19937_64 poison_rng(mix(cfg.seed ^ 0xc0deULL));
  AdamState adam;
  const bool malicious = kind != LossKind::Clean && cfg.lambda > 0.0;
  const int n = train_set.size();
  const int nb = (n + cfg.batch_size - 1) / cfg.batch_size;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    HistoryRow row;
    row.epoch = epoch;
    if (malicious && epoch % cfg.resynth_period == 0) {
      const auto syn = synthesize_model(res.model, cfg.synth, cfg.eps_budgets, cfg.n_syn);
      res.snapshots.clear();
      for (std::size_t i = 0; i < syn.size(); ++i) {
        if (syn[i].over_budget) {
          res.warnings.push_back("epoch " + std::to_string(epoch) + ": synthesis over budget at eps=" +
                                 format_double(syn[i].epsilon) + "; using best-effort candidates");
        }
        auto snaps = make_snapshots(syn[i], static_cast<int>(i), epoch);
        res.snapshots.insert(res.snapshots.end(), snaps.begin(), snaps.end());
      }
      row.snapshot_refreshed = true;
    }
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    std::shuffle(perm.begin(), perm.end(), shuffle_rng);
    std::vector<int> pperm(static_cast<std::size_t>(poison_set.data.size()));
    for (int i = 0; i < poison_set.data.size(); ++i) pperm[static_cast<std::size_t>(i)] = i;
    if (kind == LossKind::Backdoor) std::shuffle(pperm.begin(), pperm.end(), poison_rng);
    for (int b = 0; b < nb; ++b) {
      Batch batch;
      for (int i = b * cfg.batch_size; i < std::min(n, (b + 1) * cfg.batch_size); ++i) {
        const int r = perm[static_cast<std::size_t>(i)];
        batch.x.push_back(train_set.sample(r));
        batch.y.push_back(train_set.labels[static_cast<std::size_t>(r)]);
      }
      if (kind == LossKind::Backdoor) {
        const std::size_t lo = pperm.size() * static_cast<std::size_t>(b) / static_cast<std::size_t>(nb);
        const std::size_t hi = pperm.size() * static_cast<std::size_t>(b + 1) / static_cast<std::size_t>(nb);
        for (std::size_t i = lo; i < hi; ++i) {
          const int r = pperm[i];
          batch.poison_x.push_back(poison_set.data.sample(r));
          batch.poison_y.push_back(poison_set.source_labels[static_cast<std::size_t>(r)]);
          batch.poison_target.push_back(poison_set.data.labels[static_cast<std::size_t>(r)]);
        }
      }
      RealVector g;
      const auto lb = qdoor_loss_grad(res.model, res.snapshots, batch, kind, cfg, noise, &g);
      res.model.params = adam_step(res.model.params, g, adam, cfg.lr, cfg.weight_decay);
      row.clean_loss += lb.clean / nb;
      row.malicious_loss += lb.malicious / nb;
    }
    row.total = row.clean_loss + row.malicious_loss;
    res.history.push_back(row);
  }
  return res;
}

void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& rows) {
  os << "epoch,clean_loss,malicious_loss,total,snapshot_refreshed\n";
  for (const auto& r : rows) {
    os << r.epoch << ',' << format_double(r.clean_loss) << ',' << format_double(r.malicious_loss) << ','
       << format_double(r.total) << ',' << (r.snapshot_refreshed ? 1 : 0) << '\n';
  }
}

}  // namespace qdoor
