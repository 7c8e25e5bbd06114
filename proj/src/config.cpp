#include "vnl/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace vnl {

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::VniSweep:
      return "vni_sweep";
    case ExperimentKind::Heatmap:
      return "heatmap";
    case ExperimentKind::Dynamics:
      return "dynamics";
    case ExperimentKind::TasksTable:
      return "tasks_table";
    case ExperimentKind::Grid:
      return "grid";
    case ExperimentKind::OrthogonalTable:
      return "orthogonal_table";
    case ExperimentKind::Diagnostics:
      return "diagnostics";
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
  for (auto k : {ExperimentKind::VniSweep, ExperimentKind::Heatmap, ExperimentKind::Dynamics, ExperimentKind::TasksTable,
                 ExperimentKind::Grid, ExperimentKind::OrthogonalTable, ExperimentKind::Diagnostics})
    if (name == to_string(k)) return k;
  throw std::invalid_argument("unknown experiment '" + std::string(name) + "'");
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto piece = trim(s.substr(start, comma == std::string_view::npos ? s.size() - start : comma - start));
    if (!piece.empty()) out.push_back(piece);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  T value{};
  const auto res = std::from_chars(t.data(), t.data() + t.size(), value);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw std::invalid_argument("config: bad value '" + t + "' for " + std::string(key));
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw std::invalid_argument("config: bad boolean '" + t + "' for " + std::string(key));
}

template <typename T, typename F>
std::string join(const std::vector<T>& values, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += fmt(values[i]);
  }
  return out;
}

template <typename T, typename F>
std::vector<T> parse_list(std::string_view text, F&& parse_one) {
  std::vector<T> out;
  for (const auto& piece : split_list(text)) out.push_back(parse_one(piece));
  return out;
}

struct Field {
  std::string name;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
};

#define VNL_NUM(field, T)                                                                      \
  Field {                                                                                      \
    #field, [](const ExperimentConfig& c) { return num_text(c.field); },                       \
        [](ExperimentConfig& c, std::string_view v) { c.field = parse_number<T>(#field, v); } \
  }
#define VNL_BOOL(field)                                                                 \
  Field {                                                                               \
    #field, [](const ExperimentConfig& c) { return std::string(c.field ? "true" : "false"); }, \
        [](ExperimentConfig& c, std::string_view v) { c.field = parse_bool(#field, v); }     \
  }
#define VNL_STR(field)                                                                            \
  Field {                                                                                         \
    #field, [](const ExperimentConfig& c) { return c.field; }, [](ExperimentConfig& c, std::string_view v) { \
      c.field = trim(v);                                                                          \
    }                                                                                             \
  }

std::string num_text(double v) { return format_double(v); }
std::string num_text(int v) { return std::to_string(v); }
std::string num_text(std::uint64_t v) { return std::to_string(v); }

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      {"experiment", [](const ExperimentConfig& c) { return to_string(c.experiment); },
       [](ExperimentConfig& c, std::string_view v) { c.experiment = parse_experiment_kind(trim(v)); }},
      {"depths", [](const ExperimentConfig& c) { return join(c.depths, [](int x) { return std::to_string(x); }); },
       [](ExperimentConfig& c, std::string_view v) {
         c.depths = parse_list<int>(v, [](const std::string& s) { return parse_number<int>("depths", s); });
       }},
      {"widths", [](const ExperimentConfig& c) { return join(c.widths, [](int x) { return std::to_string(x); }); },
       [](ExperimentConfig& c, std::string_view v) {
         c.widths = parse_list<int>(v, [](const std::string& s) { return parse_number<int>("widths", s); });
       }},
      {"activations",
       [](const ExperimentConfig& c) { return join(c.activations, [](Activation a) { return to_string(a); }); },
       [](ExperimentConfig& c, std::string_view v) {
         c.activations = parse_list<Activation>(v, [](const std::string& s) { return parse_activation(s); });
       }},
      VNL_NUM(input_dim, int),
      {"inits", [](const ExperimentConfig& c) { return join(c.inits, [](InitKind k) { return to_string(k); }); },
       [](ExperimentConfig& c, std::string_view v) {
         c.inits = parse_list<InitKind>(v, [](const std::string& s) { return parse_init_kind(s); });
       }},
      VNL_NUM(sigma_w_sq, double),
      VNL_NUM(bottleneck_rank, int),
      VNL_BOOL(bottleneck_uniform),
      {"optimizer", [](const ExperimentConfig& c) { return to_string(c.optimizer); },
       [](ExperimentConfig& c, std::string_view v) { c.optimizer = parse_optimizer_kind(trim(v)); }},
      {"learning_rates", [](const ExperimentConfig& c) { return join(c.learning_rates, format_double); },
       [](ExperimentConfig& c, std::string_view v) {
         c.learning_rates =
             parse_list<double>(v, [](const std::string& s) { return parse_number<double>("learning_rates", s); });
       }},
      VNL_NUM(momentum, double),
      VNL_NUM(adam_beta1, double),
      VNL_NUM(adam_beta2, double),
      VNL_NUM(adam_eps, double),
      VNL_NUM(rmsprop_decay, double),
      VNL_NUM(rmsprop_eps, double),
      VNL_NUM(epochs, int),
      VNL_NUM(batch_size, int),
      VNL_BOOL(early_stop),
      {"success_metric", [](const ExperimentConfig& c) { return to_string(c.success_metric); },
       [](ExperimentConfig& c, std::string_view v) { c.success_metric = parse_success_metric(trim(v)); }},
      VNL_NUM(success_threshold, double),
      VNL_NUM(synthetic_success_threshold, double),
      {"tasks", [](const ExperimentConfig& c) { return join(c.tasks, [](const std::string& s) { return s; }); },
       [](ExperimentConfig& c, std::string_view v) { c.tasks = split_list(v); }},
      VNL_STR(probe),
      VNL_STR(mnist_dir),
      VNL_NUM(mnist_train_size, int),
      VNL_NUM(mnist_test_size, int),
      VNL_NUM(probe_size, int),
      VNL_NUM(sigma_x_sq, double),
      VNL_NUM(synthetic_repeats, int),
      VNL_BOOL(with_jacobian),
      {"enn_epsilons", [](const ExperimentConfig& c) { return join(c.enn_epsilons, format_double); },
       [](ExperimentConfig& c, std::string_view v) {
         c.enn_epsilons =
             parse_list<double>(v, [](const std::string& s) { return parse_number<double>("enn_epsilons", s); });
       }},
      VNL_NUM(runs, int),
      VNL_NUM(master_seed, std::uint64_t),
      VNL_NUM(threads, int),
      VNL_STR(output_dir),
  };
  return table;
}

#undef VNL_NUM
#undef VNL_BOOL
#undef VNL_STR

const Field& field(std::string_view key) {
  for (const auto& f : fields())
    if (f.name == key) return f;
  throw std::invalid_argument("config: unknown key '" + std::string(key) + "'");
}

}  // namespace

void ExperimentConfig::set(std::string_view key, std::string_view value) { field(trim(key)).set(*this, value); }

std::string ExperimentConfig::get(std::string_view key) const { return field(key).get(*this); }

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.name);
    return out;
  }();
  return names;
}

std::string ExperimentConfig::serialize() const {
  std::string out;
  for (const auto& f : fields()) out += f.name + " = " + f.get(*this) + "\n";
  return out;
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  ExperimentConfig c;
  c.merge(text);
  return c;
}

void ExperimentConfig::merge(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(number) + ": expected key = value");
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string ExperimentConfig::hash() const {
  std::string canonical;
  for (const auto& f : fields())
    if (f.name != "threads" && f.name != "output_dir") canonical += f.name + "=" + f.get(*this) + "\n";
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical)));
  return buf;
}

void ExperimentConfig::validate() const {
  auto need = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + msg);
  };
  need(!depths.empty() && !widths.empty() && !activations.empty() && !inits.empty(), "list keys must be nonempty");
  for (int d : depths) need(d >= 1, "depths must be >= 1");
  for (int w : widths) need(w >= 1, "widths must be >= 1");
  need(input_dim >= 0, "input_dim must be >= 0");
  need(sigma_w_sq >= 0.0, "sigma_w_sq must be >= 0");
  need(bottleneck_rank >= 1, "bottleneck_rank must be >= 1");
  need(!learning_rates.empty(), "learning_rates must be nonempty");
  for (double lr : learning_rates) {
    OptimizerSpec s{optimizer, lr, momentum, adam_beta1, adam_beta2, adam_eps, rmsprop_decay, rmsprop_eps};
    s.validate();
  }
  need(epochs >= 0 && batch_size >= 1, "epochs >= 0 and batch_size >= 1 required");
  need(success_threshold > 0.0 && success_threshold <= 1.0, "success_threshold must lie in (0, 1]");
  need(synthetic_success_threshold > 0.0 && synthetic_success_threshold <= 1.0,
       "synthetic_success_threshold must lie in (0, 1]");
  for (const auto& t : tasks) need(t == "mnist" || t == "and2" || t == "and4" || t == "xor2", "unknown task");
  need(probe == "gaussian" || probe == "mnist", "probe must be gaussian or mnist");
  need(mnist_train_size >= 1 && mnist_test_size >= 1 && probe_size >= 2, "dataset sizes must be positive");
  need(sigma_x_sq > 0.0, "sigma_x_sq must be > 0");
  need(synthetic_repeats >= 1, "synthetic_repeats must be >= 1");
  for (double e : enn_epsilons) need(e > 0.0 && e <= 1.0, "enn_epsilons must lie in (0, 1]");
  need(runs >= 1 && threads >= 1, "runs and threads must be >= 1");
}

}  // namespace vnl
