#include <doctest.h>

#include "approx.hpp"

#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "qic/action_space.hpp"
#include "qic/dyngraph.hpp"
#include "qic/perf.hpp"
#include "qic/quantile.hpp"

using namespace qic;

namespace {

// Random joint configuration with allocations jittered off the discrete levels.
Configuration random_configuration(const ScenarioConfig& cfg, const SystemState& state,
                                   std::mt19937_64& rng) {
  const auto spaces = build_action_spaces(cfg, state);
  Configuration conf = compose(cfg, state, spaces, test::random_joint(spaces, rng));
  std::uniform_real_distribution<double> jitter(0.1, 1.0);
  for (Eigen::Index h = 0; h < conf.compute.rows(); ++h)
    for (Eigen::Index n = 0; n < conf.compute.cols(); ++n) {
      if (conf.compute(h, n) > 0) conf.compute(h, n) *= jitter(rng);
      if (conf.radio(h, n) > 0) conf.radio(h, n) = 1 + int(rng() % std::uint64_t(conf.radio(h, n)));
    }
  return conf;
}

AppPlan lidar_plan(const ScenarioConfig& cfg, std::size_t stem_host, std::size_t branch_host,
                   const std::string& branch = "LidarBranch18") {
  AppPlan p;
  p.option.sources = mask_of(Modality::lidar);
  p.option.stems = {"lidar_stem"};
  p.option.branch = branch;
  p.sources = {cfg.node_index("li0")};
  p.stem_host = stem_host;
  p.branch_host = branch_host;
  return p;
}

}  // namespace

TEST_CASE("energy hand example") {
  auto cfg = test::tiny_scenario();
  cfg.nodes[0].energy_per_compute = 2e-11;
  cfg.nodes[0].energy_per_block = 1e-3;
  auto conf = Configuration::empty(1, cfg.nodes.size());
  conf.compute(0, 0) = 1e11;
  conf.radio(0, 0) = 50;
  CHECK(energy(conf, cfg) == rel(2.05).epsilon(1e-12));
  CHECK(node_app_energy(conf, cfg, 0, 0) == rel(2.05).epsilon(1e-12));
}

TEST_CASE("compute latency hand examples") {
  const auto cfg = test::tiny_scenario();
  const std::size_t m0 = cfg.node_index("m0"), e0 = cfg.node_index("e0");
  auto conf = Configuration::empty(1, cfg.nodes.size());
  AppPlan p;
  p.option.sources = mask_of(Modality::camera_left);
  p.option.stems = {"camera_left_stem"};
  p.option.branch = "CameraBranch18";
  p.sources = {cfg.node_index("li0")};
  p.stem_host = m0;
  p.branch_host = e0;
  conf.plans[0] = p;
  conf.compute(0, Eigen::Index(m0)) = 100e9;
  conf.compute(0, Eigen::Index(e0)) = 200e9;
  CHECK(compute_latency(conf, cfg, 0) == rel(0.03552 + 0.1088).epsilon(1e-12));

  // Stem and branch on one host share its single allocation.
  p.stem_host = e0;
  conf.plans[0] = p;
  conf.compute(0, Eigen::Index(m0)) = 0;
  conf.compute(0, Eigen::Index(e0)) = 100e9;
  CHECK(compute_latency(conf, cfg, 0) == rel((3.552 + 21.76) / 100).epsilon(1e-12));
  // Branch term alone: 21.76 G at 100 G/s.
  CHECK(compute_latency(conf, cfg, 0) - 3.552e9 / 100e9 == rel(0.2176).epsilon(1e-9));
}

TEST_CASE("network latency hand examples") {
  auto cfg = test::tiny_scenario();
  cfg.nodes[1].colocated_with.reset();  // li0 now needs the radio
  cfg.applications[0].source_bits["li0"] = 1e6;
  cfg.finalize();
  const std::size_t m0 = cfg.node_index("m0"), li0 = cfg.node_index("li0"),
                    e0 = cfg.node_index("e0");
  auto conf = Configuration::empty(1, cfg.nodes.size());
  conf.plans[0] = lidar_plan(cfg, e0, e0);
  conf.compute(0, Eigen::Index(e0)) = 1e12;
  conf.radio(0, Eigen::Index(li0)) = 10;
  Eigen::VectorXd rho = Eigen::VectorXd::Zero(Eigen::Index(cfg.nodes.size()));
  rho(Eigen::Index(li0)) = 1e6;
  CHECK(network_latency(conf, cfg, 0, rho) == rel(0.1).epsilon(1e-12));

  // Dual-camera stems uplinked from the mobile at 200 Mb/s.
  ScenarioConfig dual;
  dual.nodes = {test::mobile("m0", ContextName::sunny),
                test::source("cl", Modality::camera_left, "m0"),
                test::source("cr", Modality::camera_right, "m0"), test::edge("e0")};
  dual.applications = {test::app("a", "m0", {"cl", "cr"})};
  dual.finalize();
  auto c2 = Configuration::empty(1, dual.nodes.size());
  AppPlan p;
  p.option.sources = ModalityMask(mask_of(Modality::camera_left) | mask_of(Modality::camera_right));
  p.option.stems = {"camera_left_stem", "camera_right_stem"};
  p.option.branch = "DualCameraFusion18";
  p.sources = {1, 2};
  p.stem_host = 0;
  p.branch_host = 3;
  c2.plans[0] = p;
  c2.compute(0, 0) = 1e12;
  c2.compute(0, 3) = 1e12;
  c2.radio(0, 0) = 100;
  Eigen::VectorXd r2 = Eigen::VectorXd::Zero(4);
  r2(0) = 2e6;
  CHECK(option_cost_profile(dual.catalog, p.option).stem_to_branch_bits == 16171008.0);
  CHECK(network_latency(c2, dual, 0, r2) == rel(16171008.0 / 200e6).epsilon(1e-12));
  CHECK(network_latency(c2, dual, 0, r2) == rel(0.0809).epsilon(1e-3));
  CHECK(validate(c2, dual).empty());
  (void)m0;
}

TEST_CASE("co-located sources do not use the radio when the stem stays home") {
  const auto cfg = test::tiny_scenario();
  const std::size_t m0 = cfg.node_index("m0"), e0 = cfg.node_index("e0");
  auto hops = plan_hops(cfg, 0, lidar_plan(cfg, m0, m0));
  REQUIRE(hops.size() == 1);
  CHECK_FALSE(hops[0].transmits);
  hops = plan_hops(cfg, 0, lidar_plan(cfg, m0, e0));
  REQUIRE(hops.size() == 2);
  CHECK(hops[1].transmits);
  CHECK(hops[1].from == m0);
  hops = plan_hops(cfg, 0, lidar_plan(cfg, e0, e0));
  REQUIRE(hops.size() == 1);
  CHECK(hops[0].transmits);
}

TEST_CASE("perf matches the brute-force oracle on random configurations") {
  std::mt19937_64 rng(11);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const auto cfg = test::random_scenario(rng, 1 + int(rng() % 4), 1 + int(rng() % 3), trial % 2);
    const int t = int(rng() % std::uint64_t(std::min(cfg.horizon(), 5)));
    const auto state = snapshot_at(cfg, t);
    const auto links = slot_links(cfg, t);
    for (int k = 0; k < 5; ++k) {
      const auto conf = random_configuration(cfg, state, rng);
      CHECK(validate(conf, cfg).empty());
      CHECK(oracle::close(energy(conf, cfg), oracle::energy(conf, cfg)));
      for (std::size_t h = 0; h < cfg.applications.size(); ++h) {
        CHECK(oracle::close(compute_latency(conf, cfg, h), oracle::compute_latency(conf, cfg, h)));
        CHECK(oracle::close(network_latency(conf, cfg, h, state),
                            oracle::network_latency(conf, cfg, h, state.rho)));
        CHECK(oracle::close(latency_quantile(conf, cfg, h, links, 0.9),
                            oracle::latency_quantile(conf, cfg, h, links, 0.9)));
        ++checked;
      }
    }
  }
  CHECK(checked > 300);
}

TEST_CASE("energy is linear, non-negative and zero only without allocations") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto cfg = test::random_scenario(rng, 3, 2);
    const auto state = snapshot_at(cfg, 0);
    const auto a = random_configuration(cfg, state, rng);
    const auto b = random_configuration(cfg, state, rng);
    CHECK(energy(a, cfg) > 0);
    Configuration sum = a;
    sum.compute = a.compute + b.compute;
    sum.radio = a.radio + b.radio;
    CHECK(oracle::close(energy(sum, cfg), energy(a, cfg) + energy(b, cfg), 1e-12));
    Configuration scaled = a;
    scaled.compute *= 3.0;
    scaled.radio *= 3;
    CHECK(oracle::close(energy(scaled, cfg), 3 * energy(a, cfg), 1e-12));
  }
  const auto cfg = test::tiny_scenario();
  CHECK(energy(Configuration::empty(1, cfg.nodes.size()), cfg) == 0.0);
}

TEST_CASE("latency is strictly monotone in allocations") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const auto cfg = test::random_scenario(rng, 2, 2);
    const auto state = snapshot_at(cfg, 0);
    const auto conf = random_configuration(cfg, state, rng);
    for (std::size_t h = 0; h < cfg.applications.size(); ++h) {
      for (Eigen::Index n = 0; n < conf.compute.cols(); ++n) {
        if (conf.compute(Eigen::Index(h), n) > 0) {
          auto more = conf;
          more.compute(Eigen::Index(h), n) *= 1.5;
          CHECK(compute_latency(more, cfg, h) < compute_latency(conf, cfg, h));
        }
        if (conf.radio(Eigen::Index(h), n) > 0) {
          auto more = conf;
          more.radio(Eigen::Index(h), n) += 1;
          CHECK(network_latency(more, cfg, h, state) < network_latency(conf, cfg, h, state));
        }
      }
    }
  }
}

TEST_CASE("latency quantile is non-decreasing in omega") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto cfg = test::random_scenario(rng, 2, 2, true);
    const auto state = snapshot_at(cfg, 1);
    const auto links = slot_links(cfg, 1);
    const auto conf = random_configuration(cfg, state, rng);
    for (std::size_t h = 0; h < cfg.applications.size(); ++h) {
      double prev = 0.0;
      for (double w = 0.05; w <= 1.0; w += 0.05) {
        const double q = latency_quantile(conf, cfg, h, links, w);
        CHECK(q >= prev);
        prev = q;
      }
      const auto samples = latency_samples(conf, cfg, h, links);
      CHECK(latency_quantile(conf, cfg, h, links, 1.0) ==
            *std::max_element(samples.begin(), samples.end()));
    }
  }
}

TEST_CASE("accuracy quantile examples") {
  const auto empirical = AccuracyDistribution::empirical({0.4, 0.5, 0.6, 0.7});
  CHECK(accuracy_distribution_quantile(empirical, 0.8, 0.5) == 0.5);
  CHECK(accuracy_distribution_quantile(empirical, 0.55, 0.9) == 0.55);
  const auto beta = AccuracyDistribution::beta(2, 2);
  CHECK(accuracy_distribution_quantile(beta, 0.8, 0.5) == rel(0.4));
  CHECK(accuracy_cdf(beta, 0.8, 0.4) == rel(0.5));
}

TEST_CASE("night context never exceeds its cap") {
  const auto catalog = builtin_catalog();
  const auto cal = builtin_calibration(catalog);
  for (ContextName ctx : {ContextName::night, ContextName::motorway, ContextName::sunny}) {
    const ContextLabel label{ctx, default_accuracy_cap(ctx)};
    for (const auto& o : enumerate_options(catalog, ModalityMask(0xF)))
      for (double w : {0.1, 0.5, 0.9, 0.99}) {
        const double q = accuracy_quantile(o, label, w, cal, catalog);
        CHECK(q >= 0.0);
        CHECK(q <= label.accuracy_cap);
      }
  }
}

TEST_CASE("late fusion is at least as accurate as either branch") {
  const auto catalog = builtin_catalog();
  const auto cal = builtin_calibration(catalog);
  for (ContextName ctx : {ContextName::sunny, ContextName::night, ContextName::motorway}) {
    const ContextLabel label{ctx, default_accuracy_cap(ctx)};
    for (const auto& o : enumerate_options(catalog, ModalityMask(0xF))) {
      if (!o.late_fusion) continue;
      ConfigurationOption a = o, b = o;
      a.late_fusion.reset();
      b.branch = *o.late_fusion;
      b.late_fusion.reset();
      for (double w : {0.5, 0.9}) {
        const double q = accuracy_quantile(o, label, w, cal, catalog);
        CHECK(q >= accuracy_quantile(a, label, w, cal, catalog));
        CHECK(q >= accuracy_quantile(b, label, w, cal, catalog));
      }
    }
  }
}

TEST_CASE("late fusion quantile solves F_A F_B = omega") {
  DnnCatalog catalog = builtin_catalog();
  Calibration cal;
  cal[{"CameraBranch18", ContextName::sunny}] = AccuracyDistribution::beta(3, 4);
  cal[{"LidarBranch18", ContextName::sunny}] = AccuracyDistribution::beta(5, 2);
  ConfigurationOption o;
  o.sources = ModalityMask(mask_of(Modality::camera_left) | mask_of(Modality::lidar));
  o.stems = {"camera_left_stem", "lidar_stem"};
  o.branch = "CameraBranch18";
  o.late_fusion = "LidarBranch18";
  const ContextLabel label{ContextName::sunny, 0.8};
  const double q = accuracy_quantile(o, label, 0.5, cal, catalog) - kLateFusionBonus;
  // Monte Carlo estimate of the median of max(A, B).
  std::mt19937_64 rng(1);
  std::gamma_distribution<double> g3(3), g4(4), g5(5), g2(2);
  std::vector<double> m;
  for (int i = 0; i < 200000; ++i) {
    const double x = g3(rng), y = g4(rng), u = g5(rng), v = g2(rng);
    m.push_back(0.8 * std::max(x / (x + y), u / (u + v)));
  }
  CHECK(q == rel(empirical_quantile(m, 0.5)).epsilon(5e-3));
}

TEST_CASE("latency ratio over target gives f3 = 1.2") {
  const auto cfg = test::tiny_scenario();
  const std::size_t m0 = cfg.node_index("m0");
  auto conf = Configuration::empty(1, cfg.nodes.size());
  conf.plans[0] = lidar_plan(cfg, m0, m0);
  conf.compute(0, Eigen::Index(m0)) = (5.9e9 + 23.0e9) / 0.06;
  const auto state = snapshot_at(cfg, 0);
  const auto links = slot_links(cfg, 0);
  const auto edges = admissible_edges(cfg);
  const auto attrs = attributes(conf, cfg, state, links, edges);
  double f3 = 0.0;
  for (const auto& a : attrs) f3 = std::max(f3, a(2));
  CHECK(f3 == rel(1.2).epsilon(1e-12));
  CHECK_FALSE(feasible(attrs));
}

TEST_CASE("normalized feasibility agrees with direct constraint evaluation") {
  std::mt19937_64 rng(21);
  int feasible_count = 0, infeasible_count = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const auto cfg = test::random_scenario(rng, 1 + int(rng() % 4), 1 + int(rng() % 2), trial % 2);
    const auto state = snapshot_at(cfg, 0);
    const auto links = slot_links(cfg, 0);
    const auto edges = admissible_edges(cfg);
    const auto spaces = build_action_spaces(cfg, state);
    for (int k = 0; k < 25; ++k) {
      const auto conf = compose(cfg, state, spaces, test::random_joint(spaces, rng));
      const bool direct = oracle::feasible(conf, cfg, state, links);
      CHECK(feasible(attributes(conf, cfg, state, links, edges)) == direct);
      (direct ? feasible_count : infeasible_count)++;
    }
  }
  CHECK(feasible_count > 0);
  CHECK(infeasible_count > 0);
}

TEST_CASE("validate rejects broken configurations") {
  const auto cfg = test::tiny_scenario();
  const std::size_t m0 = cfg.node_index("m0"), e0 = cfg.node_index("e0");
  auto conf = Configuration::empty(1, cfg.nodes.size());
  conf.plans[0] = lidar_plan(cfg, m0, e0);
  conf.compute(0, Eigen::Index(m0)) = 1e11;
  conf.compute(0, Eigen::Index(e0)) = 1e11;
  CHECK(!validate(conf, cfg).empty());  // m0 transmits without blocks
  conf.radio(0, Eigen::Index(m0)) = 10;
  CHECK(validate(conf, cfg).empty());
  conf.compute(0, Eigen::Index(e0)) = 0;
  CHECK(!validate(conf, cfg).empty());
  CHECK(!validate(Configuration::empty(2, cfg.nodes.size()), cfg).empty());
  const auto sigma = conf.sigma(0, m0);
  CHECK(sigma == std::vector<std::string>{"lidar_stem"});
  CHECK(conf.sigma(0, cfg.node_index("li0")) == std::vector<std::string>{"data"});
  CHECK(conf.sigma(0, e0) == std::vector<std::string>{"LidarBranch18"});
}
