#include "qdoor/bench.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "qdoor/circuit_io.hpp"
#include "qdoor/parallel.hpp"

namespace qdoor {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

int argmax(const RealVector& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return static_cast<int>(best);
}

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return parse_double(s);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Fraction of counted samples whose predicate holds, evaluated in parallel and
// reduced in sample order.
template <typename Count, typename Hit>
double proportion(int n, const Count& counted, const Hit& hit) {
  std::vector<char> use(static_cast<std::size_t>(n)), ok(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    use[i] = counted(static_cast<int>(i));
    ok[i] = use[i] && hit(static_cast<int>(i));
  });
  int num = 0, den = 0;
  for (std::size_t i = 0; i < use.size(); ++i) {
    den += use[i];
    num += ok[i];
  }
  if (den == 0) throw ConfigError("bench", "no test samples to evaluate");
  return static_cast<double>(num) / den;
}

}  // namespace

void EvalConfig::validate() const {
  if (shots < 0) throw ConfigError("bench", "shots must be >= 0");
  if (trajectories < 1) throw ConfigError("bench", "trajectories must be >= 1");
  if (n_syn < 1) throw ConfigError("bench", "n_syn must be >= 1");
  for (double e : eps_list) {
    if (!(e > 0.0 && e < 1.0)) throw ConfigError("bench", "every epsilon must lie in (0,1)");
  }
  for (const auto& s : schemes) {
    if (s != "clean" && s != "back" && s != "qtrojan" && s != "qdoor") {
      throw ConfigError("bench", "unknown scheme '" + s + "'");
    }
  }
  noise.validate();
}

RealVector eval_class_probs(const Target& t, const RealVector& x, const EvalConfig& cfg, std::uint64_t seed) {
  const Model& m = *t.model;
  const Program prog = t.candidate ? bind_program(candidate_circuit_for(m, *t.candidate, x), RealVector())
                                   : model_program(m, x);
  StateVector psi = StateVector::zero(m.n_qubits);
  if (cfg.noise.is_ideal()) {
    run_program(psi.amplitudes, m.n_qubits, prog);
    return class_probs(psi.probabilities(), m.measure).probs;
  }
  return class_probs(run_program_noisy(prog, psi, cfg.noise, cfg.trajectories, seed), m.measure).probs;
}

int eval_predict(const Target& t, const RealVector& x, const EvalConfig& cfg, std::uint64_t seed) {
  const RealVector p = eval_class_probs(t, x, cfg, seed);
  if (cfg.shots == 0) return argmax(p);
  std::mt19937_64 rng(mix(seed ^ 0x5407ULL));
  std::discrete_distribution<int> dist(p.data(), p.data() + p.size());
  RealVector counts = RealVector::Zero(p.size());
  for (int s = 0; s < cfg.shots; ++s) counts(dist(rng)) += 1.0;
  return argmax(counts);
}

double evaluate_cda(const Target& t, const Dataset& test, const EvalConfig& cfg, int only_class, int exclude_class) {
  if (test.size() == 0) throw ConfigError("bench", "empty test set");
  return proportion(
      test.size(),
      [&](int i) {
        const int y = test.labels[static_cast<std::size_t>(i)];
        return (only_class < 0 || y == only_class) && (exclude_class < 0 || y != exclude_class);
      },
      [&](int i) {
        const auto seed = mix(cfg.seed + static_cast<std::uint64_t>(i));
        return eval_predict(t, test.sample(i), cfg, seed) == test.labels[static_cast<std::size_t>(i)];
      });
}

double evaluate_asr(const Target& t, const Dataset& test, const TriggerSpec& trigger, int target_class,
                    const EvalConfig& cfg) {
  if (test.size() == 0) throw ConfigError("bench", "empty test set");
  return proportion(
      test.size(), [&](int i) { return test.labels[static_cast<std::size_t>(i)] != target_class; },
      [&](int i) {
        const auto seed = mix(cfg.seed + 0xa5a5ULL + static_cast<std::uint64_t>(i));
        return eval_predict(t, embed_trigger(test.sample(i), trigger), cfg, seed) == target_class;
      });
}

void Report::write_csv(std::ostream& os) const {
  os << "scheme,stage,epsilon,candidate_id,cda,asr,n_2qg,depth,noise,target_acc,other_acc,status\n";
  for (const auto& r : rows) {
    os << r.scheme << ',' << r.stage << ',' << opt(r.epsilon) << ',' << r.candidate_id << ',' << format_double(r.cda)
       << ',' << opt(r.asr) << ',' << r.n_2qg << ',' << r.depth << ',' << r.noise << ',' << opt(r.target_acc) << ','
       << opt(r.other_acc) << ',' << r.status << '\n';
  }
}

Report read_report_csv(std::istream& is) {
  Report rep;
  std::string line;
  if (!std::getline(is, line) || line.rfind("scheme,stage,", 0) != 0) throw FormatError("bench", "not a report CSV");
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 12) throw FormatError("bench", "report line " + std::to_string(lineno) + ": expected 12 fields");
    ReportRow r;
    r.scheme = f[0];
    r.stage = f[1];
    r.epsilon = parse_opt(f[2]);
    r.candidate_id = std::stoi(f[3]);
    r.cda = parse_double(f[4]);
    r.asr = parse_opt(f[5]);
    r.n_2qg = std::stoi(f[6]);
    r.depth = std::stoi(f[7]);
    r.noise = f[8];
    r.target_acc = parse_opt(f[9]);
    r.other_acc = parse_opt(f[10]);
    r.status = f[11];
    rep.rows.push_back(r);
  }
  return rep;
}

std::string Report::summary_json() const {
  struct Agg {
    std::vector<double> cda, asr;
    int n_2qg = 0;
    std::string noise;
  };
  std::vector<std::string> order;
  std::map<std::string, Agg> groups;
  std::map<std::string, std::pair<std::string, std::optional<double>>> keys;
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    const std::string key = r.scheme + "|" + r.stage + "|" + opt(r.epsilon);
    if (!groups.count(key)) {
      order.push_back(key);
      keys[key] = {r.scheme + "\x1f" + r.stage, r.epsilon};
    }
    auto& g = groups[key];
    g.cda.push_back(r.cda);
    if (r.asr) g.asr.push_back(*r.asr);
    g.n_2qg = r.n_2qg;
    g.noise = r.noise;
  }
  auto stats = [](const std::vector<double>& v) {
    nlohmann::ordered_json j;
    double s = 0.0;
    for (double x : v) s += x;
    j["mean"] = s / static_cast<double>(v.size());
    j["min"] = *std::min_element(v.begin(), v.end());
    j["max"] = *std::max_element(v.begin(), v.end());
    return j;
  };
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& key : order) {
    const auto& g = groups[key];
    const auto& name = keys[key].first;
    nlohmann::ordered_json j;
    j["scheme"] = name.substr(0, name.find('\x1f'));
    j["stage"] = name.substr(name.find('\x1f') + 1);
    if (keys[key].second) j["epsilon"] = *keys[key].second;
    j["candidates"] = g.cda.size();
    j["n_2qg"] = g.n_2qg;
    j["noise"] = g.noise;
    j["cda"] = stats(g.cda);
    if (!g.asr.empty()) j["asr"] = stats(g.asr);
    out.push_back(j);
  }
  nlohmann::ordered_json doc;
  doc["groups"] = out;
  doc["failures"] = std::count_if(rows.begin(), rows.end(), [](const ReportRow& r) { return r.status != "ok"; });
  return doc.dump(2) + "\n";
}

std::vector<ReportRow> evaluate_scheme(const std::string& scheme, const Model& model, const Dataset& test,
                                       const EvalConfig& cfg, const std::optional<TriggerSpec>& trigger,
                                       int target_class, int targeted_class) {
  cfg.validate();
  std::vector<ReportRow> rows;
  auto fill = [&](ReportRow& r, const Target& t) {
    r.cda = evaluate_cda(t, test, cfg);
    if (trigger) r.asr = evaluate_asr(t, test, *trigger, target_class, cfg);
    if (targeted_class >= 0) {
      r.target_acc = evaluate_cda(t, test, cfg, targeted_class);
      r.other_acc = evaluate_cda(t, test, cfg, -1, targeted_class);
    }
  };
  ReportRow base;
  base.scheme = scheme;
  base.noise = cfg.noise.label;
  {
    ReportRow r = base;
    r.stage = "uncompiled";
    r.n_2qg = count_two_qubit_gates(model.body());
    r.depth = circuit_depth(model.body());
    fill(r, Target{&model, nullptr});
    rows.push_back(r);
  }
  if (cfg.eps_list.empty()) return rows;
  const auto syn = synthesize_model(model, cfg.synth, cfg.eps_list, cfg.n_syn);
  for (const auto& s : syn) {
    for (std::size_t j = 0; j < s.candidates.size(); ++j) {
      const auto& c = s.candidates[j];
      ReportRow r = base;
      r.stage = "eps";
      r.epsilon = s.epsilon;
      r.candidate_id = static_cast<int>(j);
      r.n_2qg = c.n_2qg;
      r.depth = c.depth;
      if (c.over_budget) r.status = "over_budget";
      fill(r, Target{&model, &c});
      rows.push_back(r);
    }
  }
  return rows;
}

ExperimentResult run_experiment(LossKind kind, const Model& model, const Dataset& train_set, const Dataset& test_set,
                                const EvalConfig& eval, const TrainConfig& train_cfg, const PoisonPlan& plan) {
  eval.validate();
  ExperimentResult res;
  const bool backdoor = kind == LossKind::Backdoor;
  const std::optional<TriggerSpec> trigger = backdoor ? std::optional<TriggerSpec>(plan.trigger) : std::nullopt;
  const int targeted = kind == LossKind::Targeted ? train_cfg.target_class : -1;
  std::optional<Model> clean;
  auto clean_model = [&]() -> const Model& {
    if (!clean) {
      auto r = train(model, train_set, PoisonSet{}, LossKind::Clean, train_cfg);
      clean = r.model;
    }
    return *clean;
  };
  for (const auto& scheme : eval.schemes) {
    try {
      Model trained;
      std::optional<TriggerSpec> trig = trigger;
      if (scheme == "clean") {
        trained = clean_model();
        trig = std::nullopt;
      } else if (scheme == "back") {
        auto r = train_back_baseline(model, train_set, plan, train_cfg);
        trained = r.model;
        trig = plan.trigger;
      } else if (scheme == "qtrojan") {
        trained = qtrojan_inject(clean_model(), select_qtrojan_target(clean_model(), train_set, plan.target_class));
        trig = plan.trigger;
        if (trained.encoding_mismatch) res.warnings.push_back("qtrojan: encoding cannot be masked");
      } else {
        PoisonSet ps;
        if (backdoor) ps = build_poisoned_dataset(train_set, plan);
        auto r = train(model, train_set, ps, kind, train_cfg);
        res.warnings.insert(res.warnings.end(), r.warnings.begin(), r.warnings.end());
        trained = r.model;
      }
      auto rows = evaluate_scheme(scheme, trained, test_set, eval, trig, plan.target_class, targeted);
      res.report.rows.insert(res.report.rows.end(), rows.begin(), rows.end());
      res.models.emplace_back(scheme, trained);
    } catch (const std::exception& e) {
      ReportRow r;
      r.scheme = scheme;
      r.stage = "uncompiled";
      r.noise = eval.noise.label;
      std::string msg = e.what();
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      r.status = "error: " + msg;
      res.report.rows.push_back(r);
    }
  }
  return res;
}

std::vector<SweepPoint> activation_sweep(const Model& model, const std::vector<double>& eps_grid, const Dataset& test,
                                         const TriggerSpec& trigger, int target_class, const EvalConfig& cfg) {
  cfg.validate();
  const auto syn = synthesize_model(model, cfg.synth, eps_grid, cfg.n_syn);
  std::vector<SweepPoint> out;
  for (const auto& s : syn) {
    SweepPoint p;
    p.epsilon = s.epsilon;
    p.n_candidates = static_cast<int>(s.candidates.size());
    p.min_asr = 1.0;
    for (const auto& c : s.candidates) {
      const Target t{&model, &c};
      const double a = evaluate_asr(t, test, trigger, target_class, cfg);
      p.mean_asr += a;
      p.mean_cda += evaluate_cda(t, test, cfg);
      p.min_asr = std::min(p.min_asr, a);
      p.max_asr = std::max(p.max_asr, a);
      p.n_2qg = c.n_2qg;
    }
    p.mean_asr /= p.n_candidates;
    p.mean_cda /= p.n_candidates;
    out.push_back(p);
  }
  return out;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepPoint>& pts) {
  os << "epsilon,mean_asr,mean_cda,min_asr,max_asr,n_candidates,n_2qg\n";
  for (const auto& p : pts) {
    os << format_double(p.epsilon) << ',' << format_double(p.mean_asr) << ',' << format_double(p.mean_cda) << ','
       << format_double(p.min_asr) << ',' << format_double(p.max_asr) << ',' << p.n_candidates << ',' << p.n_2qg
       << '\n';
  }
}

std::vector<SweepPoint> read_sweep_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("epsilon,mean_asr", 0) != 0) throw FormatError("bench", "not a sweep CSV");
  std::vector<SweepPoint> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 7) throw FormatError("bench", "sweep line: expected 7 fields");
    out.push_back({parse_double(f[0]), parse_double(f[1]), parse_double(f[2]), parse_double(f[3]),
                   parse_double(f[4]), std::stoi(f[5]), std::stoi(f[6])});
  }
  return out;
}

namespace {

std::string write_series(const std::string& dir, const std::string& name,
                         const std::vector<std::pair<double, double>>& xy) {
  std::filesystem::create_directories(dir);
  const std::string path = (std::filesystem::path(dir) / (name + ".dat")).string();
  std::ofstream os(path);
  if (!os) throw FormatError("bench", "cannot write " + path);
  for (const auto& [x, y] : xy) os << format_double(x) << ' ' << format_double(y) << '\n';
  return path;
}

}  // namespace

std::vector<std::string> write_plot_series(const std::string& dir, const Report& report) {
  std::vector<std::string> schemes;
  for (const auto& r : report.rows) {
    if (std::find(schemes.begin(), schemes.end(), r.scheme) == schemes.end()) schemes.push_back(r.scheme);
  }
  std::vector<std::string> paths;
  for (const auto& s : schemes) {
    std::map<double, std::vector<const ReportRow*>> by_eps;
    for (const auto& r : report.rows) {
      if (r.scheme == s && r.status == "ok" && r.epsilon) by_eps[*r.epsilon].push_back(&r);
    }
    std::vector<std::pair<double, double>> n2q, cda, asr;
    for (const auto& [e, rs] : by_eps) {
      double c = 0.0, a = 0.0;
      int na = 0;
      for (const auto* r : rs) {
        c += r->cda;
        if (r->asr) {
          a += *r->asr;
          ++na;
        }
      }
      n2q.emplace_back(e, rs.front()->n_2qg);
      cda.emplace_back(e, c / static_cast<double>(rs.size()));
      if (na) asr.emplace_back(e, a / na);
    }
    paths.push_back(write_series(dir, s + "_n2qg_vs_eps", n2q));
    paths.push_back(write_series(dir, s + "_cda_vs_eps", cda));
    if (!asr.empty()) paths.push_back(write_series(dir, s + "_asr_vs_eps", asr));
  }
  return paths;
}

std::vector<std::string> write_plot_series(const std::string& dir, const std::vector<SweepPoint>& sweep) {
  std::vector<std::pair<double, double>> asr, cda, count;
  for (const auto& p : sweep) {
    asr.emplace_back(p.epsilon, p.mean_asr);
    cda.emplace_back(p.epsilon, p.mean_cda);
    count.emplace_back(p.epsilon, p.n_candidates);
  }
  return {write_series(dir, "sweep_asr_vs_eps", asr), write_series(dir, "sweep_cda_vs_eps", cda),
          write_series(dir, "sweep_candidates_vs_eps", count)};
}

std::vector<std::string> write_plot_series(const std::string& dir, const std::vector<HistoryRow>& history) {
  std::vector<std::pair<double, double>> clean, mal, total;
  for (const auto& h : history) {
    clean.emplace_back(h.epoch, h.clean_loss);
    mal.emplace_back(h.epoch, h.malicious_loss);
    total.emplace_back(h.epoch, h.total);
  }
  return {write_series(dir, "clean_loss_vs_epoch", clean), write_series(dir, "malicious_loss_vs_epoch", mal),
          write_series(dir, "total_loss_vs_epoch", total)};
}

}  // namespace qdoor
