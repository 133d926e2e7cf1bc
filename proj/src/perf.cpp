#include "qic/perf.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include <boost/math/special_functions/beta.hpp>

#include "qic/quantile.hpp"

namespace qic {

Configuration Configuration::empty(std::size_t apps, std::size_t nodes) {
  Configuration c;
  c.plans.assign(apps, std::nullopt);
  c.compute = Eigen::MatrixXd::Zero(Eigen::Index(apps), Eigen::Index(nodes));
  c.radio = Eigen::MatrixXi::Zero(Eigen::Index(apps), Eigen::Index(nodes));
  return c;
}

std::vector<std::string> Configuration::sigma(std::size_t h, std::size_t n) const {
  std::vector<std::string> out;
  if (h >= plans.size() || !plans[h]) return out;
  const AppPlan& p = *plans[h];
  if (std::find(p.sources.begin(), p.sources.end(), n) != p.sources.end()) out.push_back("data");
  if (p.stem_host == n)
    for (const auto& s : p.option.stems) out.push_back(s);
  if (p.branch_host == n) {
    out.push_back(p.option.branch);
    if (p.option.late_fusion) out.push_back(*p.option.late_fusion);
  }
  return out;
}

std::vector<Hop> plan_hops(const ScenarioConfig& cfg, std::size_t h, const AppPlan& plan) {
  const auto& app = cfg.applications.at(h);
  std::vector<Hop> hops;
  for (std::size_t s : plan.sources) {
    const auto& src = cfg.nodes.at(s);
    Hop hop;
    hop.from = s;
    hop.to = plan.stem_host;
    hop.bits = app.source_bits.at(src.id);
    hop.transmits = s != plan.stem_host &&
                    !(src.colocated_with && *src.colocated_with == cfg.nodes[plan.stem_host].id);
    hops.push_back(hop);
  }
  if (plan.stem_host != plan.branch_host) {
    Hop hop;
    hop.from = plan.stem_host;
    hop.to = plan.branch_host;
    hop.bits = option_cost_profile(cfg.catalog, plan.option).stem_to_branch_bits;
    hop.transmits = true;
    hops.push_back(hop);
  }
  return hops;
}

std::vector<std::string> validate(const Configuration& conf, const ScenarioConfig& cfg) {
  std::vector<std::string> errs;
  const std::size_t H = cfg.applications.size(), N = cfg.nodes.size();
  if (conf.plans.size() != H || conf.compute.rows() != Eigen::Index(H) ||
      conf.compute.cols() != Eigen::Index(N) || conf.radio.rows() != Eigen::Index(H) ||
      conf.radio.cols() != Eigen::Index(N)) {
    errs.push_back("configuration dimensions do not match the scenario");
    return errs;
  }
  for (std::size_t h = 0; h < H; ++h) {
    const auto& app = cfg.applications[h];
    const std::string where = "app '" + app.id + "'";
    std::vector<bool> may_compute(N, false), may_send(N, false);
    if (conf.plans[h]) {
      const AppPlan& p = *conf.plans[h];
      if (!option_is_valid(cfg.catalog, p.option)) errs.push_back(where + ": invalid option");
      ModalityMask seen = 0;
      for (std::size_t s : p.sources) {
        if (s >= N || cfg.nodes[s].kind != NodeKind::source || !cfg.nodes[s].modality) {
          errs.push_back(where + ": data assigned to a non-source node");
          continue;
        }
        if (std::find(app.candidate_sources.begin(), app.candidate_sources.end(),
                      cfg.nodes[s].id) == app.candidate_sources.end())
          errs.push_back(where + ": source '" + cfg.nodes[s].id + "' not a candidate");
        const ModalityMask bit = mask_of(*cfg.nodes[s].modality);
        if (seen & bit) errs.push_back(where + ": two sources of one modality");
        seen |= bit;
      }
      if (seen != p.option.sources) errs.push_back(where + ": sources do not match the stems");
      if (p.stem_host >= N || p.branch_host >= N) {
        errs.push_back(where + ": unknown host node");
        continue;
      }
      const auto& stem = cfg.nodes[p.stem_host];
      const auto& branch = cfg.nodes[p.branch_host];
      const bool stem_ok = (stem.kind == NodeKind::mobile && stem.id == app.home_mobile_node) ||
                           stem.kind == NodeKind::edge;
      if (!stem_ok) errs.push_back(where + ": stems must run on the home mobile or an edge server");
      const bool branch_ok = p.branch_host == p.stem_host ||
                             (stem.kind == NodeKind::mobile && branch.kind == NodeKind::edge);
      if (!branch_ok) errs.push_back(where + ": branch must run on the stem host or downstream");
      may_compute[p.stem_host] = may_compute[p.branch_host] = true;
      for (const auto& hop : plan_hops(cfg, h, p))
        if (hop.transmits) may_send[hop.from] = true;
    }
    for (std::size_t n = 0; n < N; ++n) {
      const double c = conf.compute(Eigen::Index(h), Eigen::Index(n));
      const int b = conf.radio(Eigen::Index(h), Eigen::Index(n));
      if (may_compute[n] && !(c > 0))
        errs.push_back(where + ": no compute allocated on host '" + cfg.nodes[n].id + "'");
      if (!may_compute[n] && c != 0)
        errs.push_back(where + ": compute allocated on non-host '" + cfg.nodes[n].id + "'");
      if (may_send[n] && b <= 0)
        errs.push_back(where + ": no blocks allocated on transmitter '" + cfg.nodes[n].id + "'");
      if (!may_send[n] && b != 0)
        errs.push_back(where + ": blocks allocated on idle node '" + cfg.nodes[n].id + "'");
    }
  }
  return errs;
}

double node_app_energy(const Configuration& conf, const ScenarioConfig& cfg, std::size_t h,
                       std::size_t n) {
  const auto& node = cfg.nodes[n];
  return node.energy_per_compute * conf.compute(Eigen::Index(h), Eigen::Index(n)) +
         node.energy_per_block * double(conf.radio(Eigen::Index(h), Eigen::Index(n)));
}

double app_energy(const Configuration& conf, const ScenarioConfig& cfg, std::size_t h) {
  double e = 0.0;
  for (std::size_t n = 0; n < cfg.nodes.size(); ++n) e += node_app_energy(conf, cfg, h, n);
  return e;
}

double energy(const Configuration& conf, const ScenarioConfig& cfg) {
  double e = 0.0;
  for (std::size_t h = 0; h < conf.plans.size(); ++h) e += app_energy(conf, cfg, h);
  return e;
}

double compute_latency(const Configuration& conf, const ScenarioConfig& cfg, std::size_t h) {
  if (!conf.plans.at(h)) return 0.0;
  const AppPlan& p = *conf.plans[h];
  const CostProfile prof = option_cost_profile(cfg.catalog, p.option);
  auto term = [&](std::size_t n, double ops) {
    const double c = conf.compute(Eigen::Index(h), Eigen::Index(n));
    if (!(c > 0)) throw std::domain_error("zero compute allocation on a hosting node");
    return ops / c;
  };
  if (p.stem_host == p.branch_host) return term(p.stem_host, prof.stem_flops + prof.branch_flops);
  return term(p.stem_host, prof.stem_flops) + term(p.branch_host, prof.branch_flops);
}

double network_latency(const Configuration& conf, const ScenarioConfig& cfg, std::size_t h,
                       const Eigen::VectorXd& rho) {
  if (!conf.plans.at(h)) return 0.0;
  double total = 0.0;
  for (const auto& hop : plan_hops(cfg, h, *conf.plans[h])) {
    if (!hop.transmits) continue;
    const int b = conf.radio(Eigen::Index(h), Eigen::Index(hop.from));
    const double r = rho(Eigen::Index(hop.from));
    if (b <= 0 || !(r > 0)) throw std::domain_error("transmitting node without a usable link");
    total += hop.bits / (double(b) * r);
  }
  return total;
}

double network_latency(const Configuration& conf, const ScenarioConfig& cfg, std::size_t h,
                       const SystemState& state) {
  return network_latency(conf, cfg, h, state.rho);
}

std::vector<double> latency_samples(const Configuration& conf, const ScenarioConfig& cfg,
                                    std::size_t h,
                                    const std::vector<radio::LinkDistribution>& links) {
  const double lc = compute_latency(conf, cfg, h);
  if (!conf.plans.at(h)) return {lc};
  std::size_t count = 0;
  for (const auto& hop : plan_hops(cfg, h, *conf.plans[h])) {
    if (!hop.transmits) continue;
    const std::size_t k = links.at(hop.from).samples.size();
    if (k == 0) throw std::invalid_argument("empty link distribution");
    if (count != 0 && k != count) throw std::invalid_argument("link windows differ in length");
    count = k;
  }
  if (count == 0) return {lc};
  std::vector<double> out(count);
  Eigen::VectorXd rho = Eigen::VectorXd::Zero(Eigen::Index(cfg.nodes.size()));
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t n = 0; n < links.size(); ++n)
      if (k < links[n].samples.size()) rho(Eigen::Index(n)) = links[n].samples[k].rho;
    out[k] = lc + network_latency(conf, cfg, h, rho);
  }
  return out;
}

double latency_quantile(const Configuration& conf, const ScenarioConfig& cfg, std::size_t h,
                        const std::vector<radio::LinkDistribution>& links, double omega) {
  return empirical_quantile(latency_samples(conf, cfg, h, links), omega);
}

double accuracy_cdf(const AccuracyDistribution& d, double cap, double x) {
  if (x >= cap) return 1.0;
  if (x < 0.0) return 0.0;
  if (d.kind == AccuracyDistribution::Kind::beta) return boost::math::ibeta(d.a, d.b, x / cap);
  const auto it = std::upper_bound(d.samples.begin(), d.samples.end(), x);
  return double(it - d.samples.begin()) / double(d.samples.size());
}

double accuracy_distribution_quantile(const AccuracyDistribution& d, double cap, double omega) {
  if (!(omega > 0.0 && omega <= 1.0)) throw std::invalid_argument("omega must be in (0, 1]");
  if (d.kind == AccuracyDistribution::Kind::beta) {
    if (omega >= 1.0) return cap;
    return cap * boost::math::ibeta_inv(d.a, d.b, omega);
  }
  return std::min(cap, empirical_quantile_sorted(d.samples, omega));
}

double accuracy_quantile(const ConfigurationOption& option, const ContextLabel& context,
                         double omega, const Calibration& calibration, const DnnCatalog& catalog) {
  auto lookup = [&](const std::string& branch_id) -> const AccuracyDistribution& {
    const auto& key = catalog.branch(branch_id).accuracy_key;
    auto it = calibration.find({key, context.name});
    if (it == calibration.end())
      throw std::out_of_range("no calibration for " + key + " in context " +
                              std::string(to_string(context.name)));
    return it->second;
  };
  const double cap = context.accuracy_cap;
  const auto& a = lookup(option.branch);
  if (!option.late_fusion) return accuracy_distribution_quantile(a, cap, omega);

  const auto& b = lookup(*option.late_fusion);
  // inf{x : F_A(x) F_B(x) >= omega} by bisection on [0, cap].
  double lo = 0.0, hi = cap;
  if (accuracy_cdf(a, cap, lo) * accuracy_cdf(b, cap, lo) >= omega) return std::min(cap, kLateFusionBonus);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (accuracy_cdf(a, cap, mid) * accuracy_cdf(b, cap, mid) >= omega) hi = mid;
    else lo = mid;
  }
  return std::min(cap, hi + kLateFusionBonus);
}

AppMetrics app_metrics(const Configuration& conf, const ScenarioConfig& cfg, std::size_t h,
                       const std::vector<radio::LinkDistribution>& links) {
  const auto& app = cfg.applications.at(h);
  AppMetrics m;
  m.energy = app_energy(conf, cfg, h);
  if (!conf.plans.at(h)) return m;
  m.compute_latency = compute_latency(conf, cfg, h);
  m.latency_quantile = latency_quantile(conf, cfg, h, links, app.quantile);
  m.accuracy_quantile = accuracy_quantile(conf.plans[h]->option, cfg.context_of(app),
                                          app.quantile, cfg.calibration, cfg.catalog);
  m.latency_ok = m.latency_quantile <= app.latency_target;
  m.accuracy_ok = m.accuracy_quantile >= app.accuracy_target;
  return m;
}

std::vector<EdgeKey> plan_path(const ScenarioConfig& cfg, std::size_t h, const AppPlan& plan) {
  (void)h;
  const std::size_t sv = cfg.nodes.size(), dv = sv + 1;
  std::vector<EdgeKey> path;
  for (std::size_t s : plan.sources) path.push_back({sv, s});
  for (std::size_t s : plan.sources) path.push_back({s, plan.stem_host});
  if (plan.stem_host != plan.branch_host) path.push_back({plan.stem_host, plan.branch_host});
  path.push_back({plan.branch_host, dv});
  return path;
}

namespace {

double ratio(double num, double den) {
  if (num == 0.0) return 0.0;
  if (!(den > 0.0)) return std::numeric_limits<double>::infinity();
  return num / den;
}

}  // namespace

std::vector<AttributeVector> attributes(const Configuration& conf, const ScenarioConfig& cfg,
                                        const SystemState& state,
                                        const std::vector<radio::LinkDistribution>& links,
                                        const std::vector<EdgeKey>& edges) {
  const std::size_t N = cfg.nodes.size(), V = N + 2;
  std::vector<AttributeVector> attrs(edges.size(), AttributeVector::Zero());
  std::unordered_map<std::size_t, std::size_t> index;
  for (std::size_t i = 0; i < edges.size(); ++i) index[edges[i].u * V + edges[i].v] = i;
  auto at = [&](std::size_t u, std::size_t v) -> AttributeVector& {
    auto it = index.find(u * V + v);
    if (it == index.end())
      throw std::logic_error("application path uses an edge missing from the graph");
    return attrs[it->second];
  };

  for (std::size_t h = 0; h < conf.plans.size(); ++h) {
    if (!conf.plans[h]) continue;
    const AppPlan& p = *conf.plans[h];
    const auto& app = cfg.applications[h];
    const AppMetrics m = app_metrics(conf, cfg, h, links);
    const double f2 = ratio(app.accuracy_target, m.accuracy_quantile);
    const double f3 = ratio(m.latency_quantile, app.latency_target);
    for (const auto& e : plan_path(cfg, h, p)) {
      auto& a = at(e.u, e.v);
      a(1) = std::max(a(1), f2);
      a(2) = std::max(a(2), f3);
    }
    // Energy of node u goes on the app's path edge leaving u.
    for (std::size_t s : p.sources) at(s, p.stem_host)(0) += node_app_energy(conf, cfg, h, s);
    if (p.stem_host != p.branch_host)
      at(p.stem_host, p.branch_host)(0) += node_app_energy(conf, cfg, h, p.stem_host);
    at(p.branch_host, N + 1)(0) += node_app_energy(conf, cfg, h, p.branch_host);
  }

  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::size_t u = edges[i].u;
    if (u >= N) continue;
    const double c = conf.compute.col(Eigen::Index(u)).sum();
    const double b = double(conf.radio.col(Eigen::Index(u)).sum());
    attrs[i](3) = ratio(c, state.compute(Eigen::Index(u)));
    attrs[i](4) = ratio(b, double(state.blocks(Eigen::Index(u))));
  }
  return attrs;
}

bool feasible(const std::vector<AttributeVector>& attrs) {
  for (const auto& a : attrs)
    for (int j = 1; j < 5; ++j)
      if (!(a(j) <= 1.0)) return false;
  return true;
}

}  // namespace qic
