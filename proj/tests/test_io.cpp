#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "vnl/checkpoint.hpp"
#include "vnl/experiments.hpp"
#include "vnl/svg.hpp"

using namespace vnl;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("vnl_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Every opened element is closed in order; returns false on a mismatch.
bool balanced_xml(const std::string& text) {
  std::vector<std::string> stack;
  std::size_t pos = 0;
  while ((pos = text.find('<', pos)) != std::string::npos) {
    const std::size_t end = text.find('>', pos);
    if (end == std::string::npos) return false;
    std::string tag = text.substr(pos + 1, end - pos - 1);
    pos = end + 1;
    if (tag.empty() || tag[0] == '?' || tag[0] == '!') continue;
    if (tag.back() == '/') continue;
    const std::string name = tag.substr(tag[0] == '/' ? 1 : 0, tag.find_first_of(" \n/", 1) - (tag[0] == '/' ? 1 : 0));
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else {
      stack.push_back(name);
    }
  }
  return stack.empty();
}

void check_same(const Network& a, const Network& b) {
  CHECK(a.spec.depth == b.spec.depth);
  CHECK(a.spec.width == b.spec.width);
  CHECK(a.spec.input_dim == b.spec.input_dim);
  CHECK(a.spec.num_classes == b.spec.num_classes);
  CHECK(a.spec.activation == b.spec.activation);
  CHECK(a.parametrization == b.parametrization);
  REQUIRE(a.layers.size() == b.layers.size());
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    CHECK(a.layers[l].weight == b.layers[l].weight);
    CHECK(a.layers[l].bias == b.layers[l].bias);
    CHECK(a.layers[l].reflectors.has_value() == b.layers[l].reflectors.has_value());
    if (a.layers[l].reflectors) CHECK(a.layers[l].reflectors->vectors == b.layers[l].reflectors->vectors);
  }
  CHECK(a.readout.has_value() == b.readout.has_value());
  if (a.readout) CHECK(a.readout->weight == b.readout->weight);
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("checkpoint round trip") {
    for (auto kind : {InitKind::ScaledGaussian, InitKind::Householder}) {
      for (int classes : {0, 4}) {
        Rng rng(1);
        InitializerSpec init;
        init.kind = kind;
        const Network net = initialize_network({3, 6, 5, classes, Activation::ReLU}, init, rng);
        std::stringstream buf;
        save_network(buf, net);
        CHECK(buf.str().substr(0, 4) == "VNLB");
        const Network back = load_network(buf);
        check_same(net, back);
      }
    }
    Rng rng(2);
    const Network net = initialize_network({2, 4, 4, 2, Activation::Tanh}, {}, rng);
    const fs::path path = temp_dir("ckpt") / "net.vnlb";
    save_network(path, net);
    check_same(net, load_network(path));

    std::stringstream buf;
    save_network(buf, net);
    std::string bytes = buf.str();
    std::stringstream truncated(bytes.substr(0, bytes.size() - 9));
    CHECK_THROWS_AS(load_network(truncated), FormatError);
    bytes[1] = 'X';
    std::stringstream bad(bytes);
    CHECK_THROWS_AS(load_network(bad), FormatError);
  }

  TEST_CASE("svg output is well formed") {
    svg::Series s{"a<b", {1, 2, 3}, {0.1, 0.5, 0.2}, {0.0, 0.4, 0.1}, {0.2, 0.6, 0.3}, false};
    svg::Axes axes{"t & t", "x", "y", true, {}, {}};
    const std::string line = svg::line_plot({s, {"b", {1, 2, 3}, {0.3, 0.3, 0.3}, {}, {}, true}}, axes);
    CHECK(line.rfind("<svg", 0) == 0);
    CHECK(balanced_xml(line));
    CHECK(line.find("a&lt;b") != std::string::npos);

    Matrix m(2, 2);
    m << 0, 1, 0.5, 1;
    const std::string heat = svg::heatmap(m, 0.0, 1.0, "h", true, {"r0", "r1"}, {"c0", "c1"});
    CHECK(balanced_xml(heat));
    CHECK(heat.find("fill=\"rgb(0,0,0)\"") != std::string::npos);       // value 1 is black
    CHECK(heat.find("fill=\"rgb(255,255,255)\"") != std::string::npos);  // value 0 is white

    const auto box = svg::box_stats("g", {1, 2, 3, 4, 5});
    CHECK(box.median == 3.0);
    CHECK(box.q1 == 2.0);
    CHECK(box.max == 5.0);
    CHECK(balanced_xml(svg::box_plot({box}, axes)));
    CHECK(balanced_xml(svg::histogram({{"x", {0.1, 0.5, 0.95}}, {"y", {}}}, 0.0, 1.0, 10, axes)));

    const fs::path out = temp_dir("svg") / "nested" / "plot.svg";
    svg::write_file(out, heat);
    CHECK(slurp(out) == heat);
  }

  TEST_CASE("run records round trip") {
    TrainResult r;
    r.success = true;
    r.success_epoch = 2;
    for (int e = 0; e < 3; ++e) {
      TrainRecord rec;
      rec.epoch = e;
      rec.train_loss = 1.0 / (e + 1);
      rec.vni = 0.1 * e + 0.05;
      rec.per_layer_gain = Vector::LinSpaced(5, 0.5, 1.5);
      rec.test_accuracy = 0.3 * e;
      r.records.push_back(rec);
    }
    const RunSummary s = parse_run(serialize_run(r));
    CHECK(s.success);
    CHECK(s.success_epoch == 2);
    REQUIRE(s.records.size() == 3);
    CHECK(s.final_vni() == doctest::Approx(0.25));
    CHECK(s.final_gain_median() == doctest::Approx(1.0));
    CHECK(s.records[2].per_layer_gain(0) == 0.5);
    CHECK(s.records[2].per_layer_gain(2) == 1.5);
    CHECK_THROWS_AS(parse_run("epoch\n"), FormatError);
  }

  TEST_CASE("run cache makes units resumable") {
    const RunCache cache(temp_dir("cache"), "abc");
    std::atomic<int> calls{0};
    const std::vector<std::string> names{"u0", "u1", "u2"};
    auto fn = [&](std::size_t i) {
      ++calls;
      if (i == 1 && calls < 10) throw std::runtime_error("boom");
      return "result " + std::to_string(i);
    };
    const auto first = run_units(names, 2, cache, fn);
    CHECK(calls == 3);
    CHECK(first[0].text == "result 0");
    CHECK(first[1].error == "boom");
    CHECK_FALSE(cache.get("u1").has_value());
    calls = 10;
    const auto second = run_units(names, 1, cache, fn);
    CHECK(calls == 11);  // only the failed unit reran
    CHECK(second[0].cached);
    CHECK(second[2].cached);
    CHECK_FALSE(second[1].cached);
    CHECK(second[1].text == "result 1");
  }

  TEST_CASE("sweep experiment is reproducible and cached") {
    ExperimentConfig c;
    c.experiment = ExperimentKind::VniSweep;
    c.depths = {2, 4};
    c.widths = {12};
    c.runs = 3;
    c.probe_size = 60;
    c.output_dir = temp_dir("sweep").string();
    const auto first = run_experiment(c);
    CHECK(first.all_completed());
    CHECK(first.units == 6);
    CHECK(first.cached_units == 0);
    const std::string csv = slurp(fs::path(c.output_dir) / "vni_sweep_runs.csv");
    CHECK(csv.find("# config_hash=" + c.hash()) == 0);
    const auto second = run_experiment(c);
    CHECK(second.cached_units == 6);
    CHECK(slurp(fs::path(c.output_dir) / "vni_sweep_runs.csv") == csv);

    ExperimentConfig fresh = c;
    fresh.output_dir = temp_dir("sweep_fresh").string();
    fresh.threads = 3;
    run_experiment(fresh);
    CHECK(slurp(fs::path(fresh.output_dir) / "vni_sweep_runs.csv") == csv);
  }

  TEST_CASE("missing MNIST files fail before any run") {
    ExperimentConfig c;
    c.experiment = ExperimentKind::TasksTable;
    c.tasks = {"mnist"};
    c.mnist_dir = (temp_dir("nomnist") / "absent").string();
    c.output_dir = temp_dir("nomnist_out").string();
    CHECK_THROWS(run_experiment(c));
  }
}
