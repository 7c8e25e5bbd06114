#include <doctest.h>

#include "vnl/config.hpp"

using namespace vnl;

TEST_SUITE("config") {
  TEST_CASE("serialize and parse round trip") {
    ExperimentConfig c;
    c.experiment = ExperimentKind::Grid;
    c.depths = {10, 25, 50};
    c.learning_rates = {1e-4, 0.03};
    c.inits = {InitKind::ScaledGaussian, InitKind::Householder};
    c.activations = {Activation::Tanh, Activation::ReLU};
    c.tasks = {"and2", "mnist"};
    c.sigma_w_sq = 1.0 / 3.0;
    c.master_seed = 18446744073709551615ULL;
    c.early_stop = true;
    const ExperimentConfig back = ExperimentConfig::parse(c.serialize());
    CHECK(back.serialize() == c.serialize());
    CHECK(back.sigma_w_sq == c.sigma_w_sq);
    CHECK(back.master_seed == c.master_seed);
    CHECK(back.hash() == c.hash());
  }

  TEST_CASE("hash ignores threads and output_dir only") {
    ExperimentConfig a, b;
    b.threads = 8;
    b.output_dir = "elsewhere";
    CHECK(a.hash() == b.hash());
    b.runs = 3;
    CHECK(a.hash() != b.hash());
    CHECK(a.hash().size() == 16);
    CHECK(a.hash() == ExperimentConfig{}.hash());
  }

  TEST_CASE("fnv1a reference values") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  }

  TEST_CASE("format_double round trips") {
    for (double v : {0.1, 1e-4, 1.0 / 3.0, 123456.789, 0.0}) CHECK(std::stod(format_double(v)) == v);
  }

  TEST_CASE("merge, set and get") {
    ExperimentConfig c;
    c.merge("# comment\nruns = 3\n\nwidths = 50, 100\n");
    CHECK(c.runs == 3);
    CHECK(c.widths == std::vector<int>{50, 100});
    CHECK(c.depths == ExperimentConfig{}.depths);
    c.set("optimizer", "adam");
    CHECK(c.optimizer == OptimizerKind::Adam);
    CHECK(c.get("optimizer") == "adam");
    CHECK_THROWS(c.set("no_such_key", "1"));
    CHECK_THROWS(c.set("runs", "many"));
    CHECK_THROWS(c.merge("runs 3"));
    for (const auto& k : ExperimentConfig::keys()) CHECK_NOTHROW(c.get(k));
  }

  TEST_CASE("validation") {
    ExperimentConfig c;
    CHECK_NOTHROW(c.validate());
    c.runs = 0;
    CHECK_THROWS(c.validate());
    c = ExperimentConfig{};
    c.depths = {};
    CHECK_THROWS(c.validate());
    c = ExperimentConfig{};
    c.tasks = {"cifar"};
    CHECK_THROWS(c.validate());
  }
}
