// qdoor: data preparation, training, synthesis, evaluation and sweeps.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "json.hpp"
#include "qdoor/circuit_io.hpp"
#include "qdoor/config.hpp"

namespace fs = std::filesystem;
using namespace qdoor;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::optional<std::string> noise;
  std::optional<int> shots;
};

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cli", "cannot read " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cli", "cannot write " + path.string());
  os << text;
}

Config load_config(const std::string& path, const Globals& g) {
  Config c = path.empty() ? Config::parse("", "<flags>") : Config::load(path);
  c.check_known_keys();
  if (g.seed) {
    const std::string s = std::to_string(*g.seed);
    for (const char* k : {"seed", "train.seed", "eval.seed", "poison.seed"}) c.set(k, s);
  }
  if (g.noise) c.set("eval.noise", *g.noise);
  if (g.shots) c.set("eval.shots", std::to_string(*g.shots));
  return c;
}

void write_manifest(const fs::path& dir, const std::string& command, const Config& c,
                    const std::vector<std::string>& outputs) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config_hash"] = c.hash_hex();
  j["seed"] = c.get_u64("seed", c.get_u64("train.seed", 0));
  j["versions"]["qdoor"] = kVersion;
  j["versions"]["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                           std::to_string(EIGEN_MINOR_VERSION);
  j["versions"]["compiler"] = __VERSION__;
  j["outputs"] = outputs;
  write_text(dir / "manifest.json", j.dump(2) + "\n");
  write_text(dir / "config.cfg", c.canonical());
}

Model model_for(const std::string& id) {
  if (id == "iris2" || id == "iris-2") return build_iris2_model();
  if (id == "mnist-2" || id == "mnist2") return build_mnist_model(2);
  if (id == "mnist-4" || id == "mnist4") return build_mnist_model(4);
  throw ConfigError("cli", "unknown model id '" + id + "'");
}

std::pair<Dataset, Dataset> load_prepared(const Config& c) {
  const std::string dir = c.get_string("data.dir", "");
  if (dir.empty()) throw ConfigError("cli", "config needs data.dir (a directory written by 'qdoor data')");
  const std::string name = c.get_string("dataset", "");
  return {read_dataset_csv((fs::path(dir) / "train.csv").string(), name),
          read_dataset_csv((fs::path(dir) / "test.csv").string(), name)};
}

std::string find_idx(const fs::path& dir, const std::string& kind) {
  if (!fs::is_directory(dir)) throw DataError("cli", "IDX directory not found: " + dir.string());
  std::vector<std::string> hits;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string n = e.path().filename().string();
    if (n.find(kind) != std::string::npos) hits.push_back(e.path().string());
  }
  std::sort(hits.begin(), hits.end());
  for (const auto& h : hits) {
    if (fs::path(h).filename().string().find("train") != std::string::npos) return h;
  }
  if (hits.empty()) throw DataError("cli", "no *" + kind + "* file in " + dir.string());
  return hits.front();
}

int cmd_data(const Globals& g, const std::string& config_path, const std::string& dataset_flag,
             const std::string& idx_dir_flag, int n_per_class_flag, double train_frac_flag) {
  Config c = load_config(config_path, g);
  const std::string dataset = dataset_flag.empty() ? c.get_string("dataset", "") : dataset_flag;
  if (dataset.empty()) throw ConfigError("cli", "--dataset is required");
  const double frac = train_frac_flag > 0 ? train_frac_flag : c.get_double("data.train_frac", 0.7);
  const std::uint64_t seed = c.get_u64("data.seed", c.get_u64("seed", 0));
  const fs::path out(g.out);

  std::string key = "dataset=" + dataset + "\ntrain_frac=" + format_double(frac) + "\nseed=" + std::to_string(seed) + "\n";
  std::string images, labels;
  int n_per_class = 0;
  double sigma = 0.0;
  if (dataset == "iris-2") {
    n_per_class = n_per_class_flag > 0 ? n_per_class_flag : c.get_int("data.n_per_class", 100);
    sigma = c.get_double("data.sigma", 0.25);
    key += "n_per_class=" + std::to_string(n_per_class) + "\nsigma=" + format_double(sigma) + "\n";
  } else if (dataset == "mnist-2" || dataset == "mnist-4") {
    const std::string idx_dir = idx_dir_flag.empty() ? c.get_string("data.idx_dir", "") : idx_dir_flag;
    if (idx_dir.empty()) throw ConfigError("cli", "--idx-dir is required for " + dataset);
    images = find_idx(idx_dir, "images");
    labels = find_idx(idx_dir, "labels");
    key += "images=" + hex(fnv1a(slurp(images))) + "\nlabels=" + hex(fnv1a(slurp(labels))) + "\n";
  } else {
    throw ConfigError("cli", "unknown dataset '" + dataset + "' (iris-2, mnist-2, mnist-4)");
  }
  const std::string hash = hex(fnv1a(key)) + "\n";
  const fs::path hash_file = out / "data.hash";
  if (fs::exists(hash_file) && fs::exists(out / "train.csv") && fs::exists(out / "test.csv") &&
      slurp(hash_file.string()) == hash) {
    std::cout << "cache up-to-date: " << out.string() << "\n";
    return 0;
  }
  fs::create_directories(out);
  Prepared p = dataset == "iris-2" ? prepare_iris2(n_per_class, sigma, frac, seed)
                                   : prepare_mnist(load_idx(images, labels), dataset == "mnist-2" ? 2 : 4, frac, seed);
  write_dataset_csv((out / "train.csv").string(), p.train);
  write_dataset_csv((out / "test.csv").string(), p.test);
  std::vector<std::string> outputs{"train.csv", "test.csv"};
  if (p.pca) {
    save_pca((out / "pca.txt").string(), *p.pca);
    outputs.push_back("pca.txt");
    if (p.pca->degenerate) std::cerr << "warning: degenerate PCA feature(s) set to pi/2\n";
  }
  c.set("dataset", dataset);
  write_manifest(out, "data", c, outputs);
  write_text(hash_file, hash);
  std::cout << "wrote " << p.train.size() << " train / " << p.test.size() << " test samples to " << out.string()
            << "\n";
  return 0;
}

int cmd_train(const Globals& g, const std::string& config_path) {
  Config c = load_config(config_path, g);
  auto [train_set, test_set] = load_prepared(c);
  const std::string dataset = c.get_string("dataset", train_set.name);
  Model model = model_for(c.get_string("model", dataset));
  const std::string loss = c.get_string("loss", "clean");
  TrainConfig tc = train_config_from(c);
  const fs::path out(g.out);
  fs::create_directories(out);
  TrainResult r;
  if (loss == "back") {
    r = train_back_baseline(model, train_set, poison_plan_from(c, train_set.dim()), tc);
  } else {
    const LossKind kind = parse_loss_kind(loss);
    PoisonSet ps;
    if (kind == LossKind::Backdoor) ps = build_poisoned_dataset(train_set, poison_plan_from(c, train_set.dim()));
    r = train(model, train_set, ps, kind, tc);
  }
  save_model((out / "model.ckpt").string(), r.model);
  {
    std::ofstream os(out / "history.csv");
    write_history_csv(os, r.history);
  }
  std::vector<std::string> outputs{"model.ckpt", "history.csv"};
  if (!r.warnings.empty()) {
    std::string w;
    for (const auto& s : r.warnings) w += s + "\n";
    write_text(out / "warnings.txt", w);
    outputs.push_back("warnings.txt");
    std::cerr << r.warnings.size() << " warning(s), see warnings.txt\n";
  }
  write_manifest(out, "train", c, outputs);
  std::cout << "trained " << model.name << " (" << loss << ") for " << tc.epochs << " epochs -> " << out.string()
            << "\n";
  return 0;
}

int cmd_synth(const Globals& g, const std::string& model_path, const std::string& circuit_path, double eps,
              int max_blocks, int n_syn, std::optional<std::uint64_t> synth_seed, int piece_width,
              const std::vector<double>& circuit_params) {
  Config c = load_config("", g);
  SynthesisBudget b;
  b.epsilon = eps;
  b.max_blocks = max_blocks;
  b.piece_width = piece_width;
  if (synth_seed) b.seed = *synth_seed;
  else if (g.seed) b.seed = *g.seed;
  b.validate();
  c.set("synth.eps", format_double(eps));
  c.set("synth.max_blocks", std::to_string(max_blocks));
  c.set("synth.n_syn", std::to_string(n_syn));
  c.set("synth.piece_width", std::to_string(piece_width));
  c.set("synth.seed", std::to_string(b.seed));
  const fs::path out(g.out);
  fs::create_directories(out);
  std::ostringstream manifest;
  manifest << "candidate_id,n_2qg,residual,depth\n";
  std::vector<std::string> outputs{"candidates.csv"};
  bool over = false;
  if (!model_path.empty()) {
    const Model m = load_model(model_path);
    c.set("model", model_path);
    const auto syn = synthesize_model(m, b, {eps}, n_syn).front();
    over = syn.over_budget;
    for (std::size_t j = 0; j < syn.candidates.size(); ++j) {
      const auto& cand = syn.candidates[j];
      manifest << j << ',' << cand.n_2qg << ',' << format_double(cand.residual) << ',' << cand.depth << '\n';
      for (std::size_t s = 0; s < cand.segments.size(); ++s) {
        const std::string name = "candidate_" + std::to_string(j) + "_stage" + std::to_string(s) + ".qc";
        std::ofstream os(out / name);
        write_circuit(os, cand.segments[s]);
        outputs.push_back(name);
      }
    }
  } else if (!circuit_path.empty()) {
    std::ifstream is(circuit_path);
    if (!is) throw FormatError("cli", "cannot read " + circuit_path);
    const Circuit circ = read_circuit(is);
    if (static_cast<int>(circuit_params.size()) != circ.n_params()) {
      throw ConfigError("cli", "circuit has " + std::to_string(circ.n_params()) + " parameter slot(s) but --params gave " +
                                   std::to_string(circuit_params.size()));
    }
    const RealVector params = Eigen::Map<const RealVector>(circuit_params.data(), circ.n_params());
    c.set("circuit", circuit_path);
    const auto res = synthesize_detailed(circ, params, b, n_syn);
    over = res.over_budget;
    for (std::size_t j = 0; j < res.candidates.size(); ++j) {
      const auto& cand = res.candidates[j];
      const Circuit fixed = bind_circuit(cand.circuit, cand.instantiated_params);
      manifest << j << ',' << cand.n_2qg << ',' << format_double(cand.residual) << ',' << circuit_depth(fixed) << '\n';
      const std::string name = "candidate_" + std::to_string(j) + ".qc";
      std::ofstream os(out / name);
      write_circuit(os, fixed);
      outputs.push_back(name);
    }
  } else {
    throw ConfigError("cli", "synth needs --model or --circuit");
  }
  write_text(out / "candidates.csv", manifest.str());
  write_manifest(out, "synth", c, outputs);
  if (over) std::cerr << "warning: some pieces exceeded the block budget; best-effort candidates written\n";
  std::cout << manifest.str();
  return 0;
}

int cmd_eval(const Globals& g, const std::string& config_path, const std::string& model_path,
             const std::string& scheme) {
  Config c = load_config(config_path, g);
  auto [train_set, test_set] = load_prepared(c);
  const EvalConfig ec = eval_config_from(c);
  const fs::path out(g.out);
  fs::create_directories(out);
  Report rep;
  std::vector<std::string> outputs{"report.csv", "summary.json"};
  const std::string loss = c.get_string("loss", "backdoor");
  const LossKind kind = loss == "back" ? LossKind::Backdoor : parse_loss_kind(loss);
  const PoisonPlan plan = poison_plan_from(c, train_set.dim());
  if (!model_path.empty()) {
    const Model m = load_model(model_path);
    c.set("model", model_path);
    const bool with_trigger = kind == LossKind::Backdoor && scheme != "clean";
    rep.rows = evaluate_scheme(scheme, m, test_set, ec, with_trigger ? std::optional(plan.trigger) : std::nullopt,
                               plan.target_class, kind == LossKind::Targeted ? c.get_int("train.target_class", 0) : -1);
  } else {
    Model model = model_for(c.get_string("model", c.get_string("dataset", train_set.name)));
    auto res = run_experiment(kind, model, train_set, test_set, ec, train_config_from(c), plan);
    rep = res.report;
    fs::create_directories(out / "models");
    for (const auto& [name, m] : res.models) {
      save_model((out / "models" / (name + ".ckpt")).string(), m);
      outputs.push_back("models/" + name + ".ckpt");
    }
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  }
  {
    std::ofstream os(out / "report.csv");
    rep.write_csv(os);
  }
  write_text(out / "summary.json", rep.summary_json());
  write_manifest(out, "eval", c, outputs);
  rep.write_csv(std::cout);
  return 0;
}

int cmd_sweep(const Globals& g, const std::string& config_path, const std::string& model_path,
              const std::vector<double>& grid) {
  Config c = load_config(config_path, g);
  if (model_path.empty()) throw ConfigError("cli", "sweep needs --model");
  auto [train_set, test_set] = load_prepared(c);
  const Model m = load_model(model_path);
  c.set("model", model_path);
  std::vector<double> eps = grid.empty() ? c.get_doubles("sweep.eps_grid", {1e-6, 1e-4, 1e-3, 1e-2, 1e-1}) : grid;
  std::string joined;
  for (double e : eps) joined += (joined.empty() ? "" : ",") + format_double(e);
  c.set("sweep.eps_grid", joined);
  EvalConfig ec = eval_config_from(c);
  const PoisonPlan plan = poison_plan_from(c, train_set.dim());
  const auto pts = activation_sweep(m, eps, test_set, plan.trigger, plan.target_class, ec);
  const fs::path out(g.out);
  fs::create_directories(out);
  {
    std::ofstream os(out / "sweep.csv");
    write_sweep_csv(os, pts);
  }
  write_manifest(out, "sweep", c, {"sweep.csv"});
  write_sweep_csv(std::cout, pts);
  return 0;
}

int cmd_plotdata(const Globals& g, const std::string& report, const std::string& sweep, const std::string& history) {
  std::vector<std::string> files;
  if (!report.empty()) {
    std::ifstream is(report);
    if (!is) throw FormatError("cli", "cannot read " + report);
    auto f = write_plot_series(g.out, read_report_csv(is));
    files.insert(files.end(), f.begin(), f.end());
  }
  if (!sweep.empty()) {
    std::ifstream is(sweep);
    if (!is) throw FormatError("cli", "cannot read " + sweep);
    auto f = write_plot_series(g.out, read_sweep_csv(is));
    files.insert(files.end(), f.begin(), f.end());
  }
  if (!history.empty()) {
    std::ifstream is(history);
    if (!is) throw FormatError("cli", "cannot read " + history);
    std::string line;
    std::getline(is, line);
    std::vector<HistoryRow> rows;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string f[5];
      for (auto& s : f) std::getline(ls, s, ',');
      rows.push_back({std::stoi(f[0]), parse_double(f[1]), parse_double(f[2]), parse_double(f[3]), f[4] == "1"});
    }
    auto f = write_plot_series(g.out, rows);
    files.insert(files.end(), f.begin(), f.end());
  }
  if (files.empty()) throw ConfigError("cli", "plotdata needs --report, --sweep or --history");
  for (const auto& f : files) std::cout << f << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QNN backdoor toolkit: data, train, synth, eval, sweep, plotdata"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Globals g;
  std::uint64_t seed = 0;
  std::string noise;
  int shots = 0;
  auto* seed_opt = app.add_option("--seed", seed, "master seed")->group("Global");
  app.add_option("--out", g.out, "output directory")->group("Global");
  auto* noise_opt = app.add_option("--noise", noise, "noise preset (ideal|mel|cam) or noise file")->group("Global");
  auto* shots_opt = app.add_option("--shots", shots, "measurement shots, 0 = exact")->check(CLI::NonNegativeNumber)->group("Global");

  std::string config, dataset, idx_dir, model, circuit, scheme = "qdoor", report, sweep_csv, history;
  int n_per_class = 0, max_blocks = 8, n_syn = 8, piece_width = 3;
  double train_frac = 0.0, eps = 1e-2;
  std::uint64_t synth_seed = 0;
  std::vector<double> grid, circuit_params;

  auto* data = app.add_subcommand("data", "prepare a dataset cache");
  data->fallthrough();
  data->add_option("--config", config, "config file");
  data->add_option("--dataset", dataset, "iris-2 | mnist-2 | mnist-4");
  data->add_option("--idx-dir", idx_dir, "directory holding IDX image/label files");
  data->add_option("--n-per-class", n_per_class, "iris-2 samples per class");
  data->add_option("--train-frac", train_frac, "training fraction");

  auto* trn = app.add_subcommand("train", "train a model");
  trn->fallthrough();
  trn->add_option("--config", config, "config file")->required();

  auto* syn = app.add_subcommand("synth", "approximately synthesize a model or circuit");
  syn->fallthrough();
  syn->add_option("--model", model, "model checkpoint");
  syn->add_option("--circuit", circuit, "circuit text file");
  syn->add_option("--params", circuit_params, "values for the circuit's parameter slots")->delimiter(',');
  syn->add_option("--eps", eps, "epsilon budget");
  syn->add_option("--max-blocks", max_blocks, "CNOT blocks per piece");
  syn->add_option("--n-syn", n_syn, "candidate cap");
  auto* sseed = syn->add_option("--synth-seed", synth_seed, "instantiation seed (defaults to --seed)");
  syn->add_option("--piece-width", piece_width, "qubits per piece (2 or 3)");

  auto* ev = app.add_subcommand("eval", "train and evaluate schemes, or evaluate one checkpoint");
  ev->fallthrough();
  ev->add_option("--config", config, "config file")->required();
  ev->add_option("--model", model, "evaluate this checkpoint instead of training");
  ev->add_option("--scheme", scheme, "scheme label for --model");

  auto* sw = app.add_subcommand("sweep", "activation sweep over epsilon");
  sw->fallthrough();
  sw->add_option("--config", config, "config file")->required();
  sw->add_option("--model", model, "model checkpoint")->required();
  sw->add_option("--eps-grid", grid, "epsilon grid")->delimiter(',');

  auto* pd = app.add_subcommand("plotdata", "emit x/y series files");
  pd->fallthrough();
  pd->add_option("--report", report, "report CSV");
  pd->add_option("--sweep", sweep_csv, "sweep CSV");
  pd->add_option("--history", history, "history CSV");

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count()) g.seed = seed;
  if (noise_opt->count()) g.noise = noise;
  if (shots_opt->count()) g.shots = shots;

  try {
    if (data->parsed()) return cmd_data(g, config, dataset, idx_dir, n_per_class, train_frac);
    if (trn->parsed()) return cmd_train(g, config);
    if (syn->parsed()) {
      return cmd_synth(g, model, circuit, eps, max_blocks, n_syn,
                       sseed->count() ? std::optional(synth_seed) : std::nullopt, piece_width, circuit_params);
    }
    if (ev->parsed()) return cmd_eval(g, config, model, scheme);
    if (sw->parsed()) return cmd_sweep(g, config, model, grid);
    if (pd->parsed()) return cmd_plotdata(g, report, sweep_csv, history);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";  // what() starts with the module name
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
