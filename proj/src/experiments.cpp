#include "vnl/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "vnl/analysis.hpp"
#include "vnl/svg.hpp"

namespace vnl {

namespace fs = std::filesystem;

std::uint64_t run_seed(std::uint64_t master_seed, int run) {
  return Rng(master_seed).fork(static_cast<std::uint64_t>(run)).seed();
}

double resolve_sigma_w_sq(const ExperimentConfig& config, Activation activation) {
  if (config.sigma_w_sq > 0.0) return config.sigma_w_sq;
  return norm_preserving_sigma_w_sq(activation, config.sigma_x_sq);
}

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string d2s(double v) { return format_double(v); }

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double median_of(const std::vector<double>& v) { return v.empty() ? kNaN : quantile(v, 0.5); }

std::vector<double> finite_only(const std::vector<double>& v) {
  std::vector<double> out;
  for (double x : v)
    if (std::isfinite(x)) out.push_back(x);
  return out;
}

fs::path mnist_file(const ExperimentConfig& c, const char* name) { return fs::path(c.mnist_dir) / name; }

bool needs_mnist(const ExperimentConfig& c) {
  if (c.experiment == ExperimentKind::VniSweep || c.experiment == ExperimentKind::Heatmap)
    return c.probe == "mnist";
  if (c.experiment == ExperimentKind::Diagnostics) return false;
  return std::find(c.tasks.begin(), c.tasks.end(), "mnist") != c.tasks.end();
}

void check_inputs_exist(const ExperimentConfig& c) {
  if (!needs_mnist(c)) return;
  for (const char* name : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                           "t10k-labels-idx1-ubyte"})
    if (!fs::exists(mnist_file(c, name)))
      throw std::runtime_error("missing MNIST file " + mnist_file(c, name).string() + " (see `vnl fetch-mnist`)");
}

void write_text(const fs::path& path, const std::string& text, ExperimentOutcome& outcome) {
  svg::write_file(path, text);
  outcome.files.push_back(path);
}

struct Prepared {
  ExperimentConfig config;
  RunCache cache;
  fs::path out;
  std::string provenance;
};

Prepared prepare(const ExperimentConfig& config) {
  config.validate();
  check_inputs_exist(config);
  fs::create_directories(config.output_dir);
  return {config, RunCache(config.output_dir, config.hash()), fs::path(config.output_dir), csv_provenance(config)};
}

void tally(const std::vector<UnitOutcome>& outcomes, const std::vector<std::string>& names, ExperimentOutcome& r) {
  r.units += static_cast<int>(outcomes.size());
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].cached) ++r.cached_units;
    if (!outcomes[i].error.empty()) {
      ++r.failed_units;
      std::cerr << "unit " << names[i] << " failed: " << outcomes[i].error << '\n';
    }
  }
}

std::string lr_tag(double lr) {
  std::string s = d2s(lr);
  std::replace(s.begin(), s.end(), '.', 'p');
  std::replace(s.begin(), s.end(), '-', 'm');
  return s;
}

}  // namespace

TaskData load_task(const ExperimentConfig& config, const std::string& task) {
  TaskData d;
  if (task == "mnist") {
    const Dataset train = load_mnist_idx(mnist_file(config, "train-images-idx3-ubyte"),
                                         mnist_file(config, "train-labels-idx1-ubyte"));
    const Dataset test = load_mnist_idx(mnist_file(config, "t10k-images-idx3-ubyte"),
                                        mnist_file(config, "t10k-labels-idx1-ubyte"));
    d.train = train.take(config.mnist_train_size);
    d.test = test.take(config.mnist_test_size);
    d.probe = train.take(config.probe_size);
    return d;
  }
  d.synthetic = true;
  d.train = synthetic_task(parse_synthetic_task(task));
  d.test = d.train;
  d.probe = d.train;
  return d;
}

TrainConfig make_train_config(const ExperimentConfig& config, const TaskData& data, int depth, int width,
                              Activation activation, InitKind init, double learning_rate, int run) {
  TrainConfig t;
  t.network.depth = depth;
  t.network.width = width;
  t.network.activation = activation;
  t.network.input_dim = static_cast<int>(data.train.input_dim());
  t.network.num_classes = data.train.num_classes;
  t.init.kind = init;
  t.init.sigma_w_sq = resolve_sigma_w_sq(config, activation);
  t.init.bottleneck_rank = config.bottleneck_rank;
  t.init.bottleneck_uniform = config.bottleneck_uniform;
  t.optimizer = {config.optimizer,     learning_rate,     config.momentum,      config.adam_beta1,
                 config.adam_beta2,    config.adam_eps,   config.rmsprop_decay, config.rmsprop_eps};
  t.success.metric = config.success_metric;
  t.success.threshold = data.synthetic ? config.synthetic_success_threshold : config.success_threshold;
  t.success.max_epochs = std::max(1, config.epochs);
  t.epochs = config.epochs;
  t.batch_size = config.batch_size;
  t.repeats = data.synthetic ? config.synthetic_repeats : 1;
  t.early_stop = config.early_stop;
  t.seed = run_seed(config.master_seed, run);
  return t;
}

// ---------------------------------------------------------------------------
// Cache and worker pool
// ---------------------------------------------------------------------------

RunCache::RunCache(const fs::path& output_dir, const std::string& config_hash)
    : dir_(output_dir / "cache" / config_hash) {}

namespace {
fs::path unit_path(const fs::path& dir, const std::string& unit) {
  std::string safe = unit;
  for (char& c : safe)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return dir / (safe + ".txt");
}
}  // namespace

std::optional<std::string> RunCache::get(const std::string& unit) const {
  std::ifstream in(unit_path(dir_, unit), std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void RunCache::put(const std::string& unit, const std::string& text) const {
  fs::create_directories(dir_);
  const fs::path path = unit_path(dir_, unit);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write cache file " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

std::vector<UnitOutcome> run_units(const std::vector<std::string>& unit_names, int threads, const RunCache& cache,
                                   const std::function<std::string(std::size_t)>& fn) {
  std::vector<UnitOutcome> out(unit_names.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < unit_names.size(); i = next++) {
      UnitOutcome& o = out[i];
      if (auto hit = cache.get(unit_names[i])) {
        o.text = std::move(*hit);
        o.cached = true;
      } else {
        try {
          o.text = fn(i);
          cache.put(unit_names[i], o.text);
        } catch (const std::exception& e) {
          o.error = e.what();
        }
      }
      std::lock_guard<std::mutex> lock(log_mutex);
      std::cerr << "[" << ++done << "/" << unit_names.size() << "] " << unit_names[i]
                << (o.cached ? " (cached)" : o.error.empty() ? "" : " (error)") << '\n';
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(unit_names.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return out;
}

// ---------------------------------------------------------------------------
// Run serialization
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kRunColumns =
    "epoch,loss,train_acc,test_acc,vni,gain_min,gain_median,gain_max,input_grad_log_norm,orthogonality_error";
}

std::string serialize_run(const TrainResult& result) {
  std::ostringstream o;
  o << "# status success=" << result.success << " success_epoch=" << result.success_epoch
    << " diverged=" << result.diverged << '\n'
    << kRunColumns << '\n';
  for (const auto& r : result.records) {
    std::vector<double> g(r.per_layer_gain.data(), r.per_layer_gain.data() + r.per_layer_gain.size());
    const double gmin = g.empty() ? kNaN : *std::min_element(g.begin(), g.end());
    const double gmax = g.empty() ? kNaN : *std::max_element(g.begin(), g.end());
    o << r.epoch << ',' << d2s(r.train_loss) << ',' << d2s(r.train_accuracy) << ',' << d2s(r.test_accuracy) << ','
      << d2s(r.vni) << ',' << d2s(gmin) << ',' << d2s(median_of(g)) << ',' << d2s(gmax) << ','
      << d2s(r.input_grad_log_norm) << ',' << d2s(r.orthogonality_error) << '\n';
  }
  return o.str();
}

RunSummary parse_run(const std::string& text) {
  RunSummary s;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# status", 0) != 0) throw FormatError("run record: missing status line");
  int success = 0, diverged = 0;
  if (std::sscanf(line.c_str(), "# status success=%d success_epoch=%d diverged=%d", &success, &s.success_epoch,
                  &diverged) != 3)
    throw FormatError("run record: bad status line");
  s.success = success != 0;
  s.diverged = diverged != 0;
  if (!std::getline(in, line) || line != kRunColumns) throw FormatError("run record: bad header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) v.push_back(std::strtod(cell.c_str(), nullptr));
    if (v.size() != 10) throw FormatError("run record: bad row");
    TrainRecord r;
    r.epoch = static_cast<int>(v[0]);
    r.train_loss = v[1];
    r.train_accuracy = v[2];
    r.test_accuracy = v[3];
    r.vni = v[4];
    r.per_layer_gain = Vector(3);
    r.per_layer_gain << v[5], v[6], v[7];
    r.input_grad_log_norm = v[8];
    r.orthogonality_error = v[9];
    s.records.push_back(std::move(r));
  }
  return s;
}

double RunSummary::final_vni() const { return records.empty() ? kNaN : records.back().vni; }

double RunSummary::final_gain_median() const {
  return records.empty() ? kNaN : records.back().per_layer_gain(1);
}

std::string csv_provenance(const ExperimentConfig& config) {
  return "# config_hash=" + config.hash() + " master_seed=" + std::to_string(config.master_seed) + "\n";
}

// ---------------------------------------------------------------------------
// VNI sweep
// ---------------------------------------------------------------------------

namespace {

struct Cell {
  Activation activation;
  InitKind init;
  int width;
  int depth;
};

std::vector<Cell> cells_of(const ExperimentConfig& c) {
  std::vector<Cell> cells;
  for (Activation a : c.activations)
    for (InitKind k : c.inits)
      for (int w : c.widths)
        for (int l : c.depths) cells.push_back({a, k, w, l});
  return cells;
}

std::string cell_name(const Cell& c) {
  return to_string(c.activation) + "_" + to_string(c.init) + "_N" + std::to_string(c.width) + "_L" +
         std::to_string(c.depth);
}

Network make_network(const ExperimentConfig& config, const Cell& cell, int input_dim, Rng& rng) {
  NetworkSpec spec{cell.depth, cell.width, input_dim, 0, cell.activation};
  InitializerSpec init{cell.init, resolve_sigma_w_sq(config, cell.activation), config.bottleneck_rank,
                       config.bottleneck_uniform};
  return initialize_network(spec, init, rng);
}

struct ProbeSource {
  std::optional<Dataset> mnist;
  double sigma_x_sq = 0.1;
};

ProbeSource probe_source(const ExperimentConfig& config) {
  ProbeSource p;
  p.sigma_x_sq = config.sigma_x_sq;
  if (config.probe == "mnist") {
    p.mnist = load_task(config, "mnist").probe;
    p.sigma_x_sq = p.mnist->inputs.squaredNorm() / static_cast<double>(p.mnist->inputs.size());
  }
  return p;
}

Matrix probe_for(const ExperimentConfig& config, const ProbeSource& src, const Cell& cell, Rng& rng) {
  if (src.mnist) return src.mnist->inputs;
  const int dim = config.input_dim > 0 ? config.input_dim : cell.width;
  return gaussian_probe(config.probe_size, dim, config.sigma_x_sq, rng).inputs;
}

struct Theory {
  TheoreticalVni vni{kNaN, kNaN};
  ActivationMoments moments;
  double s1 = kNaN;
};

Theory theory_for(const ExperimentConfig& config, const Cell& cell, double sigma_x_sq) {
  Theory t;
  try {
    t.s1 = s1_for_ensemble(cell.init);
  } catch (const std::invalid_argument&) {
    return t;
  }
  const double sw = resolve_sigma_w_sq(config, cell.activation);
  const double q = variance_fixed_point(cell.activation, sw, 0.0, sigma_x_sq);
  Rng rng = Rng(config.master_seed).fork(0x7e0);
  t.moments = moments(cell.activation, q, rng);
  t.vni = vni_theoretical(cell.depth, cell.width, t.moments, t.s1);
  return t;
}

}  // namespace

ExperimentOutcome run_vni_sweep(const ExperimentConfig& config) {
  Prepared p = prepare(config);
  const ProbeSource src = probe_source(config);
  const auto cells = cells_of(config);
  std::vector<Theory> theory;
  for (const auto& cell : cells) theory.push_back(theory_for(config, cell, src.sigma_x_sq));

  std::vector<std::string> names;
  for (const auto& cell : cells)
    for (int r = 0; r < config.runs; ++r) names.push_back("sweep_" + cell_name(cell) + "_r" + std::to_string(r));

  const auto outcomes = run_units(names, config.threads, p.cache, [&](std::size_t i) {
    const Cell& cell = cells[i / static_cast<std::size_t>(config.runs)];
    const int run = static_cast<int>(i % static_cast<std::size_t>(config.runs));
    const std::uint64_t seed = run_seed(config.master_seed, run);
    Rng root(seed);
    Rng init_rng = root.fork(0);
    Rng probe_rng = root.fork(2);
    const Matrix probe = probe_for(config, src, cell, probe_rng);
    const Network net = make_network(config, cell, static_cast<int>(probe.cols()), init_rng);
    VniReportOptions opts;
    opts.with_jacobian = config.with_jacobian;
    opts.sigma_x_sq = src.sigma_x_sq;
    opts.epsilons = config.enn_epsilons;
    const VniReport rep = vni_report(net, probe, opts);
    std::ostringstream row;
    row << cell.depth << ',' << cell.width << ',' << to_string(cell.activation) << ',' << to_string(cell.init) << ','
        << seed << ',' << d2s(rep.vni_empirical) << ',' << d2s(rep.vni_covariance) << ','
        << d2s(config.with_jacobian ? rep.vni_jacobian : kNaN) << ','
        << d2s(theory[i / static_cast<std::size_t>(config.runs)].vni.raw);
    for (double e : config.enn_epsilons) row << ',' << rep.enn.at(e);
    row << '\n';
    return row.str();
  });

  ExperimentOutcome result;
  tally(outcomes, names, result);

  std::string runs_csv = p.provenance +
                         "depth,width,activation,init,seed,vni_empirical,vni_covariance,vni_jacobian,vni_theoretical";
  for (double e : config.enn_epsilons) runs_csv += ",enn@" + d2s(e);
  runs_csv += '\n';
  for (const auto& o : outcomes) runs_csv += o.text;
  write_text(p.out / "vni_sweep_runs.csv", runs_csv, result);

  std::string summary = p.provenance +
                        "activation,init,width,depth,runs,vni_mean,vni_std,theory_raw,theory_clamped,mu1,mu2,s1\n";
  std::map<std::string, std::vector<svg::Series>> plots;
  std::map<std::string, std::size_t> series_index;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::vector<double> v;
    for (int r = 0; r < config.runs; ++r) {
      const auto& o = outcomes[c * static_cast<std::size_t>(config.runs) + static_cast<std::size_t>(r)];
      if (!o.error.empty()) continue;
      std::stringstream row(o.text);
      std::string cell_text;
      for (int k = 0; k < 6 && std::getline(row, cell_text, ','); ++k) {
      }
      v.push_back(std::strtod(cell_text.c_str(), nullptr));
    }
    const Cell& cell = cells[c];
    const Theory& t = theory[c];
    const double m = mean_of(v), s = std_of(v);
    summary += to_string(cell.activation) + ',' + to_string(cell.init) + ',' + std::to_string(cell.width) + ',' +
               std::to_string(cell.depth) + ',' + std::to_string(v.size()) + ',' + d2s(m) + ',' + d2s(s) + ',' +
               d2s(t.vni.raw) + ',' + d2s(t.vni.clamped) + ',' + d2s(t.moments.mu1) + ',' + d2s(t.moments.mu2) + ',' +
               d2s(t.s1) + '\n';

    const std::string plot = to_string(cell.activation) + "_" + to_string(cell.init);
    const std::string key = plot + "_" + std::to_string(cell.width);
    auto& series = plots[plot];
    if (!series_index.count(key)) {
      series_index[key] = series.size();
      series.push_back({"sim N=" + std::to_string(cell.width), {}, {}, {}, {}, false});
      series.push_back({"theory N=" + std::to_string(cell.width), {}, {}, {}, {}, true});
    }
    auto& sim = series[series_index[key]];
    auto& th = series[series_index[key] + 1];
    sim.x.push_back(cell.depth);
    sim.y.push_back(m);
    sim.lo.push_back(m - s);
    sim.hi.push_back(m + s);
    if (std::isfinite(t.vni.clamped)) {
      th.x.push_back(cell.depth);
      th.y.push_back(t.vni.clamped);
    }
  }
  write_text(p.out / "vni_sweep_summary.csv", summary, result);
  for (auto& [name, series] : plots)
    write_text(p.out / ("vni_sweep_" + name + ".svg"),
               svg::line_plot(series, {"VNI vs depth (" + name + ")", "depth L", "R_sq", false, 0.0, 1.0}), result);
  return result;
}

// ---------------------------------------------------------------------------
// Correlation heatmaps
// ---------------------------------------------------------------------------

namespace {

double mean_off_diagonal(const Matrix& corr_sq) {
  const Eigen::Index n = corr_sq.rows();
  if (n < 2) return kNaN;
  return (corr_sq.sum() - corr_sq.trace()) / static_cast<double>(n * (n - 1));
}

std::string matrix_csv(const Matrix& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += d2s(m(i, j));
    }
    out += '\n';
  }
  return out;
}

}  // namespace

ExperimentOutcome run_heatmap(const ExperimentConfig& config) {
  Prepared p = prepare(config);
  const ProbeSource src = probe_source(config);
  const auto cells = cells_of(config);
  std::vector<std::string> names;
  for (const auto& cell : cells)
    for (int r = 0; r < config.runs; ++r) names.push_back("heatmap_" + cell_name(cell) + "_r" + std::to_string(r));

  const auto outcomes = run_units(names, config.threads, p.cache, [&](std::size_t i) {
    const Cell& cell = cells[i / static_cast<std::size_t>(config.runs)];
    const int run = static_cast<int>(i % static_cast<std::size_t>(config.runs));
    Rng root(run_seed(config.master_seed, run));
    Rng init_rng = root.fork(0);
    Rng probe_rng = root.fork(2);
    const Matrix probe = probe_for(config, src, cell, probe_rng);
    const Network net = make_network(config, cell, static_cast<int>(probe.cols()), init_rng);
    const auto emp = vni_empirical(propagate(net, probe));
    std::string text = d2s(mean_off_diagonal(emp.corr_sq)) + '\n';
    if (run == 0) text += matrix_csv(correlation_heatmap(emp.corr_sq).ordered);
    return text;
  });

  ExperimentOutcome result;
  tally(outcomes, names, result);
  std::string summary = p.provenance + "activation,init,width,depth,runs,mean_offdiag_rho_sq,std_offdiag_rho_sq\n";
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::vector<double> v;
    for (int r = 0; r < config.runs; ++r) {
      const auto& o = outcomes[c * static_cast<std::size_t>(config.runs) + static_cast<std::size_t>(r)];
      if (!o.error.empty()) continue;
      v.push_back(std::strtod(o.text.c_str(), nullptr));
      if (r == 0) {
        const std::string grid = o.text.substr(o.text.find('\n') + 1);
        const std::string stem = "heatmap_" + cell_name(cells[c]);
        write_text(p.out / (stem + ".csv"), p.provenance + grid, result);
        std::vector<std::vector<double>> rows;
        std::stringstream in(grid);
        std::string line;
        while (std::getline(in, line)) {
          rows.emplace_back();
          std::stringstream ls(line);
          std::string cell_text;
          while (std::getline(ls, cell_text, ',')) rows.back().push_back(std::strtod(cell_text.c_str(), nullptr));
        }
        Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
        for (Eigen::Index i = 0; i < m.rows(); ++i)
          for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        write_text(p.out / (stem + ".svg"),
                   svg::heatmap(m, 0.0, 1.0,
                                "rho^2, L=" + std::to_string(cells[c].depth) + ", N=" + std::to_string(cells[c].width)),
                   result);
      }
    }
    const Cell& cell = cells[c];
    summary += to_string(cell.activation) + ',' + to_string(cell.init) + ',' + std::to_string(cell.width) + ',' +
               std::to_string(cell.depth) + ',' + std::to_string(v.size()) + ',' + d2s(mean_of(v)) + ',' +
               d2s(std_of(v)) + '\n';
  }
  write_text(p.out / "heatmap_summary.csv", summary, result);
  return result;
}

// ---------------------------------------------------------------------------
// Training experiments
// ---------------------------------------------------------------------------

namespace {

struct TrainUnit {
  std::string task;
  Activation activation;
  InitKind init;
  int depth;
  int width;
  double lr;
  int run;
};

std::string unit_name(const std::string& prefix, const TrainUnit& u) {
  return prefix + "_" + u.task + "_" + to_string(u.activation) + "_" + to_string(u.init) + "_L" +
         std::to_string(u.depth) + "_N" + std::to_string(u.width) + "_lr" + lr_tag(u.lr) + "_r" + std::to_string(u.run);
}

struct TrainBatch {
  std::vector<TrainUnit> units;
  std::vector<RunSummary> runs;      // parsed, aligned with units
  std::vector<bool> ok;              // unit completed without error
};

TrainBatch run_training_units(const ExperimentConfig& config, Prepared& p, const std::string& prefix,
                              std::vector<TrainUnit> units, ExperimentOutcome& result) {
  std::map<std::string, TaskData> data;
  for (const auto& u : units)
    if (!data.count(u.task)) data.emplace(u.task, load_task(config, u.task));
  std::vector<std::string> names;
  for (const auto& u : units) names.push_back(unit_name(prefix, u));
  const auto outcomes = run_units(names, config.threads, p.cache, [&](std::size_t i) {
    const TrainUnit& u = units[i];
    const TaskData& d = data.at(u.task);
    const TrainConfig tc = make_train_config(config, d, u.depth, u.width, u.activation, u.init, u.lr, u.run);
    return serialize_run(train(tc, d.train, d.test, d.probe));
  });
  tally(outcomes, names, result);

  TrainBatch batch;
  batch.units = std::move(units);
  const fs::path run_dir = p.out / (prefix + "_runs");
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const bool ok = outcomes[i].error.empty();
    batch.ok.push_back(ok);
    batch.runs.push_back(ok ? parse_run(outcomes[i].text) : RunSummary{});
    if (ok) write_text(run_dir / (names[i] + ".csv"), p.provenance + outcomes[i].text, result);
  }
  return batch;
}

}  // namespace

ExperimentOutcome run_dynamics(const ExperimentConfig& config) {
  Prepared p = prepare(config);
  std::vector<TrainUnit> units;
  for (double lr : config.learning_rates)
    for (int r = 0; r < config.runs; ++r)
      units.push_back({config.tasks.front(), config.activations.front(), config.inits.front(), config.depths.front(),
                       config.widths.front(), lr, r});
  ExperimentOutcome result;
  const TrainBatch b = run_training_units(config, p, "dynamics", units, result);

  std::string q_csv = p.provenance + "learning_rate,epoch,q1,median,q3,runs\n";
  std::string s_csv = p.provenance +
                      "learning_rate,runs,diverged,epoch0_median,max_vni_median,final_vni_median\n";
  std::vector<svg::Series> series;
  for (double lr : config.learning_rates) {
    std::vector<std::vector<TrainRecord>> full;
    std::vector<double> e0, peak, fin;
    int diverged = 0;
    for (std::size_t i = 0; i < b.units.size(); ++i) {
      if (b.units[i].lr != lr || !b.ok[i]) continue;
      const RunSummary& s = b.runs[i];
      if (s.diverged || static_cast<int>(s.records.size()) != config.epochs + 1) {
        ++diverged;
        continue;
      }
      full.push_back(s.records);
      e0.push_back(s.records.front().vni);
      double mx = -1.0;
      for (const auto& r : s.records) mx = std::max(mx, r.vni);
      peak.push_back(mx);
      fin.push_back(s.records.back().vni);
    }
    s_csv += d2s(lr) + ',' + std::to_string(full.size()) + ',' + std::to_string(diverged) + ',' +
             d2s(median_of(e0)) + ',' + d2s(median_of(peak)) + ',' + d2s(median_of(fin)) + '\n';
    if (full.size() < 2) continue;
    svg::Series s{"lr=" + d2s(lr), {}, {}, {}, {}, false};
    for (const auto& q : quartile_dynamics(full)) {
      q_csv += d2s(lr) + ',' + std::to_string(q.epoch) + ',' + d2s(q.q1) + ',' + d2s(q.median) + ',' + d2s(q.q3) + ',' +
               std::to_string(full.size()) + '\n';
      s.x.push_back(q.epoch);
      s.y.push_back(q.median);
      s.lo.push_back(q.q1);
      s.hi.push_back(q.q3);
    }
    series.push_back(std::move(s));
  }
  write_text(p.out / "dynamics_quartiles.csv", q_csv, result);
  write_text(p.out / "dynamics_summary.csv", s_csv, result);
  write_text(p.out / "dynamics.svg",
             svg::line_plot(series, {"VNI quartiles during training", "epoch", "R_sq", false, 0.0, 1.0}), result);
  return result;
}

ExperimentOutcome run_tasks_table(const ExperimentConfig& config) {
  Prepared p = prepare(config);
  std::vector<TrainUnit> units;
  for (const auto& task : config.tasks)
    for (InitKind k : config.inits)
      for (int r = 0; r < config.runs; ++r)
        units.push_back({task, config.activations.front(), k, config.depths.front(), config.widths.front(),
                         config.learning_rates.front(), r});
  ExperimentOutcome result;
  const TrainBatch b = run_training_units(config, p, "tasks", units, result);

  std::string table = p.provenance +
                      "task,classes,init,successes,runs,outcome,final_vni_median,min_vni_median,gain_min,gain_max\n";
  std::string wd = p.provenance + "task,epoch,run,log_norm_a,log_norm_b,ratio\n";
  for (const auto& task : config.tasks) {
    const int classes = task == "mnist" ? 10 : task == "and4" ? 4 : 2;
    for (InitKind k : config.inits) {
      int successes = 0, runs = 0;
      std::vector<double> fin, low;
      double gmin = kNaN, gmax = kNaN;
      for (std::size_t i = 0; i < b.units.size(); ++i) {
        if (b.units[i].task != task || b.units[i].init != k || !b.ok[i]) continue;
        const RunSummary& s = b.runs[i];
        ++runs;
        successes += s.success;
        fin.push_back(s.final_vni());
        double mn = 2.0;
        for (const auto& r : s.records) {
          mn = std::min(mn, r.vni);
          gmin = std::isfinite(gmin) ? std::min(gmin, r.per_layer_gain(0)) : r.per_layer_gain(0);
          gmax = std::isfinite(gmax) ? std::max(gmax, r.per_layer_gain(2)) : r.per_layer_gain(2);
        }
        low.push_back(mn);
      }
      table += task + ',' + std::to_string(classes) + ',' + to_string(k) + ',' + std::to_string(successes) + ',' +
               std::to_string(runs) + ',' + (2 * successes > runs ? "success" : "fail") + ',' +
               d2s(median_of(finite_only(fin))) + ',' + d2s(median_of(finite_only(low))) + ',' + d2s(gmin) + ',' +
               d2s(gmax) + '\n';
    }
    if (config.inits.size() < 2) continue;
    // Walking-dead ratio between the first two inits, paired by run index.
    std::map<int, std::vector<double>> per_epoch;
    for (int r = 0; r < config.runs; ++r) {
      const RunSummary* a = nullptr;
      const RunSummary* c = nullptr;
      for (std::size_t i = 0; i < b.units.size(); ++i) {
        if (b.units[i].task != task || b.units[i].run != r || !b.ok[i]) continue;
        if (b.units[i].init == config.inits[0]) a = &b.runs[i];
        if (b.units[i].init == config.inits[1]) c = &b.runs[i];
      }
      if (!a || !c) continue;
      for (std::size_t e = 0; e < std::min(a->records.size(), c->records.size()); ++e) {
        const double la = a->records[e].input_grad_log_norm, lb = c->records[e].input_grad_log_norm;
        double ratio = kNaN;
        try {
          ratio = walking_dead_ratio_from_log_norms(la, lb);
        } catch (const NumericalError&) {
        }
        wd += task + ',' + std::to_string(a->records[e].epoch) + ',' + std::to_string(r) + ',' + d2s(la) + ',' +
              d2s(lb) + ',' + d2s(ratio) + '\n';
        per_epoch[a->records[e].epoch].push_back(ratio);
      }
    }
    svg::Series s{"median ratio", {}, {}, {}, {}, false};
    for (const auto& [epoch, v] : per_epoch) {
      const auto f = finite_only(v);
      if (f.empty()) continue;
      s.x.push_back(epoch);
      s.y.push_back(median_of(f));
      s.lo.push_back(quantile(f, 0.25));
      s.hi.push_back(quantile(f, 0.75));
    }
    write_text(p.out / ("walking_dead_" + task + ".svg"),
               svg::line_plot({s}, {"log10 gradient ratio " + to_string(config.inits[0]) + " / " +
                                        to_string(config.inits[1]) + " (" + task + ")",
                                    "epoch", "log10 ratio", false, std::nullopt, std::nullopt}),
               result);
  }
  write_text(p.out / "tasks_table.csv", table, result);
  if (config.inits.size() >= 2) write_text(p.out / "walking_dead.csv", wd, result);
  return result;
}

ExperimentOutcome run_grid(const ExperimentConfig& config) {
  Prepared p = prepare(config);
  std::vector<TrainUnit> units;
  for (Activation a : config.activations)
    for (InitKind k : config.inits)
      for (int l : config.depths)
        for (double lr : config.learning_rates)
          for (int r = 0; r < config.runs; ++r) units.push_back({config.tasks.front(), a, k, l, config.widths.front(), lr, r});
  ExperimentOutcome result;
  const TrainBatch b = run_training_units(config, p, "grid", units, result);

  std::string runs_csv = p.provenance + "activation,init,depth,learning_rate,run,success,diverged,final_vni,gain_median\n";
  std::vector<double> gain_ok, gain_fail, vni_ok, vni_fail;
  for (std::size_t i = 0; i < b.units.size(); ++i) {
    if (!b.ok[i]) continue;
    const TrainUnit& u = b.units[i];
    const RunSummary& s = b.runs[i];
    runs_csv += to_string(u.activation) + ',' + to_string(u.init) + ',' + std::to_string(u.depth) + ',' + d2s(u.lr) +
                ',' + std::to_string(u.run) + ',' + std::to_string(s.success) + ',' + std::to_string(s.diverged) + ',' +
                d2s(s.final_vni()) + ',' + d2s(s.final_gain_median()) + '\n';
    if (s.diverged) continue;
    (s.success ? gain_ok : gain_fail).push_back(s.final_gain_median());
    (s.success ? vni_ok : vni_fail).push_back(s.final_vni());
  }
  write_text(p.out / "grid_runs.csv", runs_csv, result);

  for (Activation a : config.activations) {
    for (InitKind k : config.inits) {
      Matrix prob(static_cast<Eigen::Index>(config.depths.size()), static_cast<Eigen::Index>(config.learning_rates.size()));
      std::string csv = p.provenance + "depth";
      for (double lr : config.learning_rates) csv += ",lr=" + d2s(lr);
      csv += '\n';
      for (std::size_t di = 0; di < config.depths.size(); ++di) {
        csv += std::to_string(config.depths[di]);
        for (std::size_t li = 0; li < config.learning_rates.size(); ++li) {
          int ok = 0, n = 0;
          for (std::size_t i = 0; i < b.units.size(); ++i) {
            const TrainUnit& u = b.units[i];
            if (!b.ok[i] || u.activation != a || u.init != k || u.depth != config.depths[di] ||
                u.lr != config.learning_rates[li])
              continue;
            ++n;
            ok += b.runs[i].success;
          }
          prob(static_cast<Eigen::Index>(di), static_cast<Eigen::Index>(li)) = n ? static_cast<double>(ok) / n : kNaN;
          csv += ',' + d2s(prob(static_cast<Eigen::Index>(di), static_cast<Eigen::Index>(li)));
        }
        csv += '\n';
      }
      const std::string stem = "grid_" + to_string(a) + "_" + to_string(k);
      write_text(p.out / (stem + ".csv"), csv, result);
      std::vector<std::string> rows, cols;
      for (int l : config.depths) rows.push_back("L=" + std::to_string(l));
      for (double lr : config.learning_rates) cols.push_back(d2s(lr));
      write_text(p.out / (stem + ".svg"),
                 svg::heatmap(prob, 0.0, 1.0, "P(success) " + to_string(a) + "/" + to_string(k), false, rows, cols),
                 result);
    }
  }

  std::string box_csv = p.provenance + "group,count,min,q1,median,q3,max\n";
  std::vector<svg::Box> boxes{svg::box_stats("success", gain_ok), svg::box_stats("failure", gain_fail)};
  const std::size_t counts[] = {gain_ok.size(), gain_fail.size()};
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& bx = boxes[i];
    box_csv += bx.label + ',' + std::to_string(counts[i]) + ',' + d2s(bx.min) + ',' + d2s(bx.q1) + ',' + d2s(bx.median) +
               ',' + d2s(bx.q3) + ',' + d2s(bx.max) + '\n';
  }
  write_text(p.out / "grid_gain_boxes.csv", box_csv, result);
  write_text(p.out / "grid_gain_boxes.svg",
             svg::box_plot(boxes, {"per-layer sigma_w^2 mu_1 (median per run)", "", "gain", false, std::nullopt,
                                   std::nullopt}),
             result);
  write_text(p.out / "grid_vni_histogram.svg",
             svg::histogram({{"success", finite_only(vni_ok)}, {"failure", finite_only(vni_fail)}}, 0.0, 1.0, 20,
                            {"final VNI by outcome", "R_sq", "runs", false, std::nullopt, std::nullopt}),
             result);
  return result;
}

ExperimentOutcome run_orthogonal_table(const ExperimentConfig& config) {
  Prepared p = prepare(config);
  std::vector<TrainUnit> units;
  for (int l : config.depths)
    for (InitKind k : config.inits)
      for (int r = 0; r < config.runs; ++r)
        units.push_back({config.tasks.front(), config.activations.front(), k, l, config.widths.front(),
                         config.learning_rates.front(), r});
  ExperimentOutcome result;
  const TrainBatch b = run_training_units(config, p, "orth", units, result);
  std::string table = p.provenance + "depth,init,successes,runs,outcome,final_vni_median,max_orthogonality_error\n";
  for (int l : config.depths) {
    for (InitKind k : config.inits) {
      int ok = 0, n = 0;
      std::vector<double> fin;
      double orth = 0.0;
      for (std::size_t i = 0; i < b.units.size(); ++i) {
        if (!b.ok[i] || b.units[i].depth != l || b.units[i].init != k) continue;
        ++n;
        ok += b.runs[i].success;
        fin.push_back(b.runs[i].final_vni());
        for (const auto& r : b.runs[i].records) orth = std::max(orth, r.orthogonality_error);
      }
      table += std::to_string(l) + ',' + to_string(k) + ',' + std::to_string(ok) + ',' + std::to_string(n) + ',' +
               (2 * ok > n ? "success" : "fail") + ',' + d2s(median_of(finite_only(fin))) + ',' + d2s(orth) + '\n';
    }
  }
  write_text(p.out / "orthogonal_table.csv", table, result);
  return result;
}

ExperimentOutcome run_diagnostics(const ExperimentConfig& config) {
  Prepared p = prepare(config);
  const auto cells = cells_of(config);
  std::vector<std::string> names;
  for (const auto& cell : cells)
    for (int r = 0; r < config.runs; ++r) names.push_back("diag_" + cell_name(cell) + "_r" + std::to_string(r));
  const auto outcomes = run_units(names, config.threads, p.cache, [&](std::size_t i) {
    const Cell& cell = cells[i / static_cast<std::size_t>(config.runs)];
    const int run = static_cast<int>(i % static_cast<std::size_t>(config.runs));
    Rng root(run_seed(config.master_seed, run));
    Rng init_rng = root.fork(0);
    Rng probe_rng = root.fork(2);
    Rng grad_rng = root.fork(3);
    const int dim = config.input_dim > 0 ? config.input_dim : cell.width;
    const Matrix probe = gaussian_probe(config.probe_size, dim, config.sigma_x_sq, probe_rng).inputs;
    const Network net = make_network(config, cell, dim, init_rng);
    const Matrix loss_grads = sample_gaussian<double>(config.probe_size, cell.width, 0.0, 1.0, grad_rng);
    const GradientDiagnostics d = gradient_diagnostics(net, probe, loss_grads);
    std::ostringstream row;
    row << to_string(cell.activation) << ',' << to_string(cell.init) << ',' << cell.width << ',' << cell.depth << ','
        << run << ',' << d2s(d.per_layer_gain.mean()) << ',' << d2s(d.sigma_x_sq) << ',' << d2s(d.sigma_y_sq) << ','
        << d2s(d.var_x_L) << ',' << d2s(d.predicted_var_x_L) << ',' << d2s(d.var_input_grad) << ','
        << d2s(d.predicted_var_input_grad) << ',' << d2s(d.var_weight_grad(0)) << ','
        << d2s(d.predicted_var_weight_grad(0)) << '\n';
    return row.str();
  });
  ExperimentOutcome result;
  tally(outcomes, names, result);
  std::string csv = p.provenance +
                    "activation,init,width,depth,run,gain_mean,sigma_x_sq,sigma_y_sq,var_x_L,predicted_var_x_L,"
                    "var_input_grad,predicted_var_input_grad,var_weight_grad_1,predicted_var_weight_grad_1\n";
  for (const auto& o : outcomes) csv += o.text;
  write_text(p.out / "diagnostics.csv", csv, result);
  return result;
}

ExperimentOutcome run_experiment(const ExperimentConfig& config) {
  switch (config.experiment) {
    case ExperimentKind::VniSweep:
      return run_vni_sweep(config);
    case ExperimentKind::Heatmap:
      return run_heatmap(config);
    case ExperimentKind::Dynamics:
      return run_dynamics(config);
    case ExperimentKind::TasksTable:
      return run_tasks_table(config);
    case ExperimentKind::Grid:
      return run_grid(config);
    case ExperimentKind::OrthogonalTable:
      return run_orthogonal_table(config);
    case ExperimentKind::Diagnostics:
      return run_diagnostics(config);
  }
  throw std::invalid_argument("unknown experiment");
}

}  // namespace vnl
