#include <doctest.h>

#include "approx.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "qic/harness.hpp"

using namespace qic;
namespace fs = std::filesystem;

namespace {

RunRecord rec(std::string mobile, int t, double energy, bool ok, std::string status = "ok",
              Solver s = Solver::qic, double x = 0.5) {
  RunRecord r;
  r.sweep = "accuracy";
  r.x = x;
  r.solver = s;
  r.t = t;
  r.app = "app_" + mobile;
  r.mobile = mobile;
  r.context = "sunny";
  r.energy = status == "ok" ? energy : std::nan("");
  r.latency_quantile = status == "ok" ? 0.04 : std::nan("");
  r.accuracy_quantile = status == "ok" ? 0.55 : std::nan("");
  r.app_ok = ok;
  r.joint_feasible = ok;
  r.status = std::move(status);
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qic_harness_" + name);
  fs::remove_all(p);
  return p;
}

ScenarioConfig small_scale() {
  return load_scenario(fs::path(QIC_SOURCE_DIR) / "configs" / "small_scale.json");
}

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); }

}  // namespace

TEST_CASE("solver parsing") {
  CHECK(parse_solvers("qic,mctp,opt") == std::vector<Solver>{Solver::qic, Solver::mctp, Solver::opt});
  CHECK(parse_solvers("opt") == std::vector<Solver>{Solver::opt});
  CHECK(parse_solvers("mctp,mctp,qic") == std::vector<Solver>{Solver::mctp, Solver::qic});
  CHECK_THROWS_AS(parse_solvers(""), std::invalid_argument);
  CHECK_THROWS_AS(parse_solvers("qic,greedy"), std::invalid_argument);
  for (Solver s : {Solver::qic, Solver::mctp, Solver::opt}) CHECK(solver_from_string(to_string(s)) == s);
}

TEST_CASE("experiment block parsing") {
  const auto o = parse_experiment(nlohmann::json::parse(R"({"experiment": {
      "solvers": ["opt"], "mctp_iterations": 50, "max_slots": 3,
      "sweeps": [{"name": "latency", "values": [0.1]}], "n_mobile": [2]}})"));
  CHECK(o.solvers == std::vector<Solver>{Solver::opt});
  CHECK(o.mctp_iterations == 50);
  CHECK(o.max_slots == 3);
  REQUIRE(o.sweeps.size() == 1);
  CHECK(o.sweeps[0].name == "latency");
  CHECK(o.n_mobile == std::vector<int>{2});

  const auto d = parse_experiment(nlohmann::json::object());
  CHECK(d.solvers.size() == 3);
  CHECK(d.sweeps.size() == 2);
  CHECK_THROWS(parse_experiment(nlohmann::json::parse(R"({"sweeps": [{"name": "power", "values": [1]}]})")));
  CHECK_THROWS(parse_experiment(nlohmann::json::parse(R"({"n_mobile": [0]})")));
  CHECK_THROWS(parse_experiment(nlohmann::json::parse(R"({"solvers": ["nope"]})")));
  CHECK_THROWS(parse_experiment(nlohmann::json::parse(R"({"qcpo": {"gamma": 1.5}})")));
}

TEST_CASE("with_target rewrites every application") {
  const auto cfg = small_scale();
  const auto a = with_target(cfg, "accuracy", 0.4);
  const auto l = with_target(cfg, "latency", 0.2);
  for (std::size_t h = 0; h < cfg.applications.size(); ++h) {
    CHECK(a.applications[h].accuracy_target == 0.4);
    CHECK(a.applications[h].latency_target == cfg.applications[h].latency_target);
    CHECK(l.applications[h].latency_target == 0.2);
    CHECK(l.applications[h].accuracy_target == cfg.applications[h].accuracy_target);
  }
  CHECK_THROWS_AS(with_target(cfg, "energy", 1.0), std::invalid_argument);
}

TEST_CASE("churn counts mobiles with any failing slot") {
  // Two mobiles over three slots; m1 misses its targets once.
  std::vector<RunRecord> rs = {rec("m0", 0, 1.0, true), rec("m1", 0, 2.0, true),
                               rec("m0", 1, 1.0, true), rec("m1", 1, 2.0, false),
                               rec("m0", 2, 1.0, true), rec("m1", 2, 2.0, true)};
  const auto s = summarize(rs);
  REQUIRE(s.size() == 1);
  CHECK(s[0].mobiles == 2);
  CHECK(s[0].slots == 3);
  CHECK(s[0].churn == 0.5);
  CHECK(s[0].avg_energy == rel(9.0 / 3 / 2));

  // A slot without a solution fails every mobile.
  rs = {rec("m0", 0, 1.0, true), rec("m1", 0, 2.0, true), rec("m0", 1, 0, false, "no_solution"),
        rec("m1", 1, 0, false, "no_solution")};
  const auto n = summarize(rs);
  CHECK(n[0].churn == 1.0);
  CHECK(n[0].slots == 1);
  CHECK(n[0].feasible_fraction == 0.5);

  // Skipped rows carry no metrics.
  const auto k = summarize({rec("m0", 0, 0, false, "skipped")});
  CHECK(k[0].mobiles == 1);
  CHECK(std::isnan(k[0].churn));
  CHECK(std::isnan(k[0].avg_energy));
}

TEST_CASE("summary agrees with a recomputation from raw records") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<RunRecord> rs;
  const std::vector<double> xs = {0.4, 0.5};
  const std::vector<Solver> solvers = {Solver::qic, Solver::mctp, Solver::opt};
  for (double x : xs)
    for (Solver s : solvers)
      for (int t = 0; t < 20; ++t) {
        const bool none = u(rng) < 0.1;
        for (int m = 0; m < 4; ++m)
          rs.push_back(rec("m" + std::to_string(m), t, u(rng), u(rng) < 0.9, none ? "no_solution" : "ok", s, x));
      }
  const auto sums = summarize(rs);
  REQUIRE(sums.size() == xs.size() * solvers.size());
  for (const auto& s : sums) {
    double energy = 0;
    int rows = 0;
    std::set<int> slots;
    std::set<std::string> mobiles, failing;
    for (const auto& r : rs) {
      if (r.x != s.x || r.solver != s.solver) continue;
      mobiles.insert(r.mobile);
      if (r.status != "ok" || !r.app_ok) failing.insert(r.mobile);
      if (r.status != "ok") continue;
      energy += r.energy;
      ++rows;
      slots.insert(r.t);
    }
    CHECK(s.slots == int(slots.size()));
    CHECK(s.mobiles == 4);
    CHECK(s.avg_energy == rel(energy / double(slots.size()) / 4.0).epsilon(1e-12));
    CHECK(s.churn == double(failing.size()) / 4.0);
    CHECK(s.avg_latency == rel(0.04));
  }
}

TEST_CASE("runs csv round trip") {
  std::vector<RunRecord> rs = {rec("m0", 0, 0.123456789012345678, true),
                               rec("m1", 3, 0, false, "no_solution", Solver::opt, 0.03),
                               rec("m2", 9, 1e-300, false, "ok", Solver::mctp, 0.2)};
  rs[2].sweep = "latency";
  std::stringstream ss;
  write_runs_csv(ss, rs);
  const auto back = read_runs_csv(ss);
  REQUIRE(back.size() == rs.size());
  for (std::size_t i = 0; i < rs.size(); ++i) {
    CHECK(back[i].sweep == rs[i].sweep);
    CHECK(back[i].x == rs[i].x);
    CHECK(back[i].solver == rs[i].solver);
    CHECK(back[i].t == rs[i].t);
    CHECK(same(back[i].energy, rs[i].energy));
    CHECK(back[i].app_ok == rs[i].app_ok);
    CHECK(back[i].status == rs[i].status);
  }
  CHECK(back[0] == rs[0]);

  std::stringstream empty;
  write_runs_csv(empty, {});
  CHECK(empty.str() == "sweep,x,solver,t,app,mobile,context,energy_j,latency_q_s,accuracy_q,app_ok,joint_feasible,status\n");
  CHECK(read_runs_csv(empty).empty());

  std::stringstream bad_header("a,b\n");
  CHECK_THROWS(read_runs_csv(bad_header));
  std::stringstream short_row(empty.str() + "accuracy,0.5,qic\n");
  CHECK_THROWS(read_runs_csv(short_row));
  std::stringstream nothing;
  CHECK_THROWS(read_runs_csv(nothing));
}

TEST_CASE("large-scale generator") {
  nlohmann::json large = {{"edge_servers", 10}, {"duration_s", 5}};
  for (int n : {2, 4, 8, 12}) {
    const auto cfg = make_large_scenario(large, n, 7);
    int mobiles = 0, edges = 0;
    for (const auto& node : cfg.nodes) {
      mobiles += node.kind == NodeKind::mobile;
      edges += node.kind == NodeKind::edge;
    }
    CHECK(mobiles == n);
    CHECK(edges == 10);
    CHECK(cfg.applications.size() == std::size_t(n));
    CHECK(cfg.horizon() == 5);
    const auto again = make_large_scenario(large, n, 7);
    CHECK(scenario_to_json(again) == scenario_to_json(cfg));
  }
  CHECK(scenario_to_json(make_large_scenario(large, 4, 7)) != scenario_to_json(make_large_scenario(large, 4, 8)));
  CHECK_THROWS_AS(make_large_scenario(large, 0, 7), std::invalid_argument);
}

TEST_CASE("run_instance is deterministic and reports consistent rows") {
  const auto cfg = small_scale();
  ExperimentOptions opt;
  opt.max_slots = 3;
  opt.mctp_iterations = 300;
  opt.qcpo.hidden = 32;
  int training_rows = 0;
  const auto a = run_instance(cfg, "accuracy", 0.5, opt, 5,
                              [&](const std::string&, double, const std::vector<TrainingRow>& r) {
                                training_rows += int(r.size());
                              });
  const auto b = run_instance(cfg, "accuracy", 0.5, opt, 5);
  CHECK(training_rows > 0);
  REQUIRE(a.size() == 3 * 3 * cfg.applications.size());
  CHECK(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].status == b[i].status);
    CHECK(same(a[i].energy, b[i].energy));
    CHECK(a[i].t == b[i].t);
  }
  for (const auto& r : a)
    if (r.status == "ok") {
      CHECK(r.app_ok == (r.latency_quantile <= 0.05 && r.accuracy_quantile >= 0.5));
      if (r.joint_feasible) CHECK(r.app_ok);
    }
  // Opt never enacts more energy than any feasible alternative in the same slot.
  for (int t = 0; t < 3; ++t) {
    std::map<Solver, double> total;
    std::map<Solver, bool> feas;
    for (const auto& r : a)
      if (r.t == t && r.status == "ok") {
        total[r.solver] += r.energy;
        feas[r.solver] = r.joint_feasible;
      }
    if (!total.count(Solver::opt)) continue;
    for (Solver s : {Solver::qic, Solver::mctp})
      if (feas[s]) CHECK(total[Solver::opt] <= total[s] * (1 + 1e-12));
  }
}

TEST_CASE("emit writes runs, summary and plot files") {
  const fs::path out = scratch("emit");
  std::vector<RunRecord> rs = {rec("m0", 0, 1.0, true), rec("m0", 0, 2.0, true, "ok", Solver::opt)};
  emit(rs, summarize(rs), out, "small");
  CHECK(fs::exists(out / "runs.csv"));
  CHECK(fs::exists(out / "summary.csv"));
  const std::string plot = slurp(out / "plot_small_accuracy_energy.csv");
  CHECK(plot == "x,qic,opt\n0.5,1,2\n");
  CHECK(fs::exists(out / "plot_small_accuracy_churn.csv"));
  CHECK(fs::exists(out / "plot_small_accuracy_sunny_energy.csv"));
  std::ifstream in(out / "runs.csv");
  CHECK(read_runs_csv(in).size() == 2);
  fs::remove_all(out);
}

TEST_CASE("cli reports errors as one json line") {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  const std::string cli = QIC_CLI_PATH;
  auto run = [&](const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " 2>\"" + (dir / "err.txt").string() + "\" >/dev/null";
    const int rc = std::system(cmd.c_str());
    std::ifstream in(dir / "err.txt");
    std::string line;
    std::getline(in, line);
    return std::pair{rc, line};
  };
  {
    std::ofstream bad(dir / "bad.json");
    bad << R"({"nodes": [{"id": "s", "kind": "source", "modality": "lidar", "colocated_with": "ghost"}], "applications": []})";
  }
  const auto [rc1, err1] = run("run-small --config \"" + (dir / "bad.json").string() + "\"");
  CHECK(rc1 != 0);
  const auto j1 = nlohmann::json::parse(err1);
  CHECK(j1.at("kind") == "scenario");
  CHECK(j1.contains("error"));

  const auto [rc2, err2] = run("run-small --config \"" + (dir / "missing.json").string() + "\"");
  CHECK(rc2 != 0);
  CHECK(nlohmann::json::parse(err2).at("kind") == "usage");

  const auto [rc3, err3] = run("run-small --config \"" + (fs::path(QIC_SOURCE_DIR) / "configs" / "small_scale.json").string() +
                               "\" --solvers qic,bogus --out \"" + (dir / "o").string() + "\"");
  CHECK(rc3 != 0);
  CHECK(nlohmann::json::parse(err3).contains("error"));

  const auto [rc4, err4] = run("dump-catalog --out \"" + (dir / "catalog.json").string() + "\"");
  CHECK(rc4 == 0);
  CHECK(err4.empty());
  std::ifstream cat(dir / "catalog.json");
  CHECK(nlohmann::json::parse(cat) == nlohmann::json(builtin_catalog()));
  fs::remove_all(dir);
}
