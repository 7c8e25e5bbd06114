// vnl: desk-scale vanishing-node experiments.
//
//   vnl sweep    --depths 10,20,30 --widths 200 --runs 20
//   vnl tasks    --config tasks.cfg --threads 4
//   vnl fetch-mnist --mnist_dir data/mnist
//
// Every ExperimentConfig key is a flag (--key or --key-with-dashes);
// --config loads a key=value file first, flags override it.

// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "vnl/config.hpp"
#include "vnl/experiments.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <openssl/evp.h>
#include <zlib.h>

#include <CLI11.hpp>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using vnl::ExperimentConfig;
using vnl::ExperimentKind;

namespace {

ExperimentConfig preset(ExperimentKind kind) {
  ExperimentConfig c;
  c.experiment = kind;
  switch (kind) {
    case ExperimentKind::VniSweep:
      c.depths = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
      c.widths = {200};
      c.activations = {vnl::Activation::HardTanh};
      c.output_dir = "out/sweep";
      break;
    case ExperimentKind::Heatmap:
      c.depths = {5, 50, 300};
      c.widths = {50};
      c.activations = {vnl::Activation::HardTanh};
      c.runs = 5;
      c.with_jacobian = false;
      c.output_dir = "out/heatmap";
      break;
    case ExperimentKind::Dynamics:
      c.depths = {50};
      c.widths = {100};
      c.activations = {vnl::Activation::Tanh};
      c.learning_rates = {1e-4, 1e-3, 1e-2};
      c.tasks = {"mnist"};
      c.epochs = 10;
      c.mnist_train_size = 2000;
      c.mnist_test_size = 2000;
      c.output_dir = "out/dynamics";
      break;
    case ExperimentKind::TasksTable:
      c.depths = {20};
      c.widths = {64};
      c.activations = {vnl::Activation::Tanh};
      c.inits = {vnl::InitKind::ScaledGaussian, vnl::InitKind::Bottleneck};
      c.tasks = {"and2", "and4", "xor2", "mnist"};
      c.runs = 3;
      c.output_dir = "out/tasks";
      break;
    case ExperimentKind::Grid:
      c.depths = {10, 25, 50};
      c.widths = {64};
      c.activations = {vnl::Activation::Tanh};
      c.inits = {vnl::InitKind::ScaledGaussian};
      c.learning_rates = {0.01, 0.03, 0.1};
      c.tasks = {"mnist"};
      c.success_metric = vnl::SuccessMetric::TrainAccuracy;
      c.mnist_train_size = 1000;
      c.mnist_test_size = 1000;
      c.epochs = 10;
      c.runs = 5;
      c.output_dir = "out/grid";
      break;
    case ExperimentKind::OrthogonalTable:
      c.depths = {50, 100, 200};
      c.widths = {64};
      c.activations = {vnl::Activation::Tanh};
      c.inits = {vnl::InitKind::ScaledGaussian, vnl::InitKind::Orthogonal, vnl::InitKind::Householder};
      c.tasks = {"mnist"};
      c.runs = 1;
      c.early_stop = true;
      c.output_dir = "out/orth";
      break;
    case ExperimentKind::Diagnostics:
      c.depths = {10, 20, 50};
      c.widths = {100};
      c.activations = {vnl::Activation::Tanh};
      c.runs = 5;
      c.output_dir = "out/diag";
      break;
  }
  return c;
}

struct Overrides {
  std::string config_path;
  bool dump = false;
  std::map<std::string, std::string> values;
};

void add_experiment_command(CLI::App& app, const std::string& name, const std::string& help, ExperimentKind kind,
                            Overrides& ov, std::optional<ExperimentKind>& chosen) {
  CLI::App* sub = app.add_subcommand(name, help);
  sub->add_option("--config", ov.config_path, "key=value config file")->check(CLI::ExistingFile);
  sub->add_flag("--dump-config", ov.dump, "print the resolved config and exit");
  for (const auto& key : ExperimentConfig::keys()) {
    if (key == "experiment") continue;
    std::string dashed = key;
    std::replace(dashed.begin(), dashed.end(), '_', '-');
    std::string flags = "--" + key;
    if (dashed != key) flags += ",--" + dashed;
    sub->add_option_function<std::string>(
        flags, [&ov, key](const std::string& v) { ov.values[key] = v; },
        "default: " + preset(kind).get(key));
  }
  sub->callback([&chosen, kind] { chosen = kind; });
}

// ---------------------------------------------------------------------------
// fetch-mnist
// ---------------------------------------------------------------------------

struct MnistFile {
  const char* name;
  const char* sha256;  // of the decompressed file
};

constexpr std::array<MnistFile, 4> kMnistFiles{{
    {"train-images-idx3-ubyte", "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db"},
    {"train-labels-idx1-ubyte", "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5"},
    {"t10k-images-idx3-ubyte", "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7"},
    {"t10k-labels-idx1-ubyte", "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2"},
}};

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

void gunzip(const fs::path& gz, const fs::path& out_path) {
  gzFile in = gzopen(gz.string().c_str(), "rb");
  if (!in) throw std::runtime_error("cannot open " + gz.string());
  std::ofstream out(out_path, std::ios::binary);
  std::vector<char> buf(1 << 16);
  int n = 0;
  while ((n = gzread(in, buf.data(), static_cast<unsigned>(buf.size()))) > 0) out.write(buf.data(), n);
  const bool failed = n < 0;
  gzclose(in);
  if (failed) throw std::runtime_error("corrupt gzip stream in " + gz.string());
}

void download(const std::string& url, const fs::path& dest) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::runtime_error("bad URL " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string origin = url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
  httplib::Client client(origin);
  client.set_follow_location(true);
  client.set_connection_timeout(20);
  client.set_read_timeout(120);
  auto res = client.Get(path);
  if (!res) throw std::runtime_error("download failed: " + url + " (" + httplib::to_string(res.error()) + ")");
  if (res->status != 200) throw std::runtime_error("download failed: " + url + " (HTTP " + std::to_string(res->status) + ")");
  std::ofstream out(dest, std::ios::binary);
  out << res->body;
}

int fetch_mnist(const fs::path& dir, const std::string& url_base, bool verify_only) {
  fs::create_directories(dir);
  int bad = 0;
  for (const auto& f : kMnistFiles) {
    const fs::path raw = dir / f.name;
    const fs::path gz = dir / (std::string(f.name) + ".gz");
    try {
      if (!fs::exists(raw) && !verify_only) {
        if (!fs::exists(gz)) {
          std::cerr << "downloading " << url_base << f.name << ".gz\n";
          download(url_base + f.name + ".gz", gz);
        }
        gunzip(gz, raw);
      }
      if (!fs::exists(raw)) throw std::runtime_error("missing " + raw.string());
      const std::string digest = sha256_file(raw);
      if (digest != f.sha256) throw std::runtime_error("checksum mismatch for " + raw.string() + ": " + digest);
      std::cout << "ok  " << raw.string() << '\n';
    } catch (const std::exception& e) {
      std::cerr << "FAIL " << e.what() << '\n';
      ++bad;
    }
  }
  return bad == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vanishing-node experiments"};
  app.require_subcommand(1);
  Overrides ov;
  std::optional<ExperimentKind> chosen;
  add_experiment_command(app, "sweep", "VNI vs depth/width: simulation against theory", ExperimentKind::VniSweep, ov,
                         chosen);
  add_experiment_command(app, "heatmap", "ordered squared-correlation heatmaps of output nodes",
                         ExperimentKind::Heatmap, ov, chosen);
  add_experiment_command(app, "dynamics", "per-epoch VNI quartiles across runs and learning rates",
                         ExperimentKind::Dynamics, ov, chosen);
  add_experiment_command(app, "tasks", "success table for Gaussian vs bottleneck init, walking-dead ratios",
                         ExperimentKind::TasksTable, ov, chosen);
  add_experiment_command(app, "grid", "success probability over depth x learning rate", ExperimentKind::Grid, ov,
                         chosen);
  add_experiment_command(app, "orth", "Gaussian / orthogonal / Householder training table",
                         ExperimentKind::OrthogonalTable, ov, chosen);
  add_experiment_command(app, "diag", "forward/backward variance diagnostics", ExperimentKind::Diagnostics, ov,
                         chosen);

  std::string mnist_dir = "data/mnist";
  std::string url_base = "https://storage.googleapis.com/cvdf-datasets/mnist/";
  bool verify_only = false;
  CLI::App* fetch = app.add_subcommand("fetch-mnist", "download MNIST IDX files and verify SHA-256 checksums");
  fetch->add_option("--mnist_dir,--mnist-dir", mnist_dir, "target directory");
  fetch->add_option("--url-base", url_base, "prefix for <file>.gz downloads");
  fetch->add_flag("--verify-only", verify_only, "only check existing files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fetch->parsed()) return fetch_mnist(mnist_dir, url_base, verify_only);
    if (!chosen) return 2;
    ExperimentConfig config = preset(*chosen);
    if (!ov.config_path.empty()) {
      std::ifstream in(ov.config_path);
      std::stringstream text;
      text << in.rdbuf();
      config.merge(text.str());
      config.experiment = *chosen;
    }
    for (const auto& [key, value] : ov.values) config.set(key, value);
    config.validate();
    if (ov.dump) {
      std::cout << config.serialize();
      return 0;
    }
    fs::create_directories(config.output_dir);
    std::ofstream(fs::path(config.output_dir) / "config.txt") << config.serialize();
    const auto outcome = vnl::run_experiment(config);
    std::cerr << outcome.units << " runs (" << outcome.cached_units << " cached, " << outcome.failed_units
              << " failed); outputs in " << config.output_dir << '\n';
    return outcome.all_completed() ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
