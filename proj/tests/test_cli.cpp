#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dynmmsbm/io.hpp"

namespace fs = std::filesystem;
using namespace dynmmsbm;

namespace {

struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("dynmmsbm_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& p) const { return (dir / p).string(); }
};

int run(const std::string& args) {
  const std::string cmd = std::string(DYNMMSBM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("simulate then fit writes a loadable model") {
    Scratch s("pipeline");
    REQUIRE(run("simulate --preset medium --seed 7 --out " + (s / "m7")) == 0);
    for (const char* f : {"edges.csv", "monadic.csv", "dyadic.csv", "config.json", "log.txt", "metrics.json"}) {
      CHECK(fs::exists(s / ("m7/" + std::string(f))));
    }
    REQUIRE(run("fit --engine vem -k 2 -m 2 --max-iter 3 --seed 7 --data " + (s / "m7") + " --out " + (s / "fit")) ==
            0);
    const ModelFile mf = load_model(s / "fit/model.json");
    CHECK(mf.model.spec.K == 2);
    CHECK(mf.model.spec.M == 2);
    CHECK(mf.network.node_ids.size() == 100);
    CHECK(mf.network.period_labels.size() == 9);

    const std::string model = " --model " + (s / "fit/model.json") + " --seed 1";
    CHECK(run("predict" + model + " --out " + (s / "pred")) == 0);
    CHECK(fs::exists(s / "pred/predictions.csv"));
    CHECK(run("eval-auroc --seed 1 --input " + (s / "pred/predictions.csv") + " --out " + (s / "auc")) == 0);
    CHECK(slurp(s / "auc/metrics.json").find("\"auroc\"") != std::string::npos);
    CHECK(run("effects" + model + " --covariate x --by node-period --out " + (s / "eff")) == 0);
    CHECK(run("forecast" + model + " --horizon 2 --out " + (s / "fc")) == 0);
    CHECK(fs::exists(s / "fc/forecast.csv"));
    CHECK(run("online-fit -k 2 -m 2 --max-iter 2 --ends 8,9 --seed 7 --data " + (s / "m7") + " --out " +
              (s / "online")) == 0);
    CHECK(fs::exists(s / "online/model.json"));
  }

  TEST_CASE("usage and runtime errors") {
    Scratch s("errors");
    REQUIRE(run("simulate --preset easy --seed 1 --nodes 10 --periods 2 --out " + (s / "d")) == 0);
    CHECK(run("fit --bogus") == 2);
    CHECK(run("fit --seed 1 --out " + (s / "x")) == 2);
    CHECK(run("fit --edges " + (s / "missing.csv") + " --seed 1 --out " + (s / "x")) == 2);
    CHECK(run("fit --data " + (s / "d") + " --out " + (s / "x")) == 2);
    CHECK(run("simulate --preset other --seed 1 --out " + (s / "x")) == 2);
    CHECK(run("") == 2);
    std::ofstream(s / "bad.csv") << "time,a,b,y\n1,a,b,2\n";
    CHECK(run("fit --edges " + (s / "bad.csv") + " --seed 1 --out " + (s / "x")) == 1);
    std::ofstream(s / "cfg.json") << R"({"command": "fit", "no-such-key": 1})";
    CHECK(run("fit --config " + (s / "cfg.json") + " --data " + (s / "d") + " --seed 1 --out " + (s / "x")) == 2);
    CHECK(run("--help") == 0);
  }

  TEST_CASE("full-batch unit-step svi reproduces the first vem counts") {
    Scratch s("svi");
    REQUIRE(run("simulate --preset medium --seed 3 --nodes 8 --periods 3 --out " + (s / "d")) == 0);
    const std::string common = " -k 2 -m 2 --seed 2 --data " + (s / "d");
    REQUIRE(run("fit --engine vem --max-iter 1" + common + " --out " + (s / "vem")) == 0);
    REQUIRE(run("fit --engine svi --batch-nodes 8 --rho-tau 0 --rho-p 0.51 --holdout 0 --max-steps 1" + common +
                " --out " + (s / "svi")) == 0);
    const auto vem = load_model(s / "vem/model.json").model;
    const auto svi = load_model(s / "svi/model.json").model;
    CHECK((vem.stats.C - svi.stats.C).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((vem.stats.U - svi.stats.U).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("identical commands give identical metrics") {
    Scratch s("determinism");
    REQUIRE(run("simulate --preset medium --seed 5 --nodes 30 --periods 5 --out " + (s / "d")) == 0);
    for (const std::string engine : {"vem", "svi"}) {
      const std::string cmd = "fit --engine " + engine + " -k 2 -m 2 --max-iter 10 --max-steps 10 --batch-nodes 10 " +
                              "--holdout 0.05 --threads 2 --seed 9 --data " + (s / "d");
      REQUIRE(run(cmd + " --out " + (s / (engine + "1"))) == 0);
      REQUIRE(run(cmd + " --out " + (s / (engine + "2"))) == 0);
      CHECK(slurp(s / (engine + "1/metrics.json")) == slurp(s / (engine + "2/metrics.json")));
      // The config snapshot alone reproduces the run.
      REQUIRE(run("fit --config " + (s / (engine + "1/config.json")) + " --out " + (s / (engine + "3"))) == 0);
      CHECK(slurp(s / (engine + "1/metrics.json")) == slurp(s / (engine + "3/metrics.json")));
    }
  }
}
