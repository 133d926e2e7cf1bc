#include "qic/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace qic {

namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 3> kContextNames = {"sunny", "night", "motorway"};

NodeKind node_kind_from_string(std::string_view s) {
  if (s == "source") return NodeKind::source;
  if (s == "mobile") return NodeKind::mobile;
  if (s == "edge") return NodeKind::edge;
  throw std::invalid_argument("unknown node kind '" + std::string(s) + "'");
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += "\n  - " + s;
  return out;
}

struct FamilyQuality {
  std::string_view prefix;
  double sunny;
  double night_shift;
  double motorway_shift;
};

// Mean accuracy before the context cap. Longer prefixes first so that
// "CameraLidarFusion" does not match "CameraBranch".
constexpr std::array<FamilyQuality, 6> kFamilies = {{
    {"CameraLidarFusion", 0.68, 0.12, 0.13},
    {"DualCameraFusion", 0.66, 0.10, 0.12},
    {"RadarLidarFusion", 0.66, 0.14, 0.13},
    {"CameraBranch", 0.62, 0.12, 0.12},
    {"RadarBranch", 0.58, 0.16, 0.15},
    {"LidarBranch", 0.62, 0.14, 0.14},
}};

constexpr double kBetaConcentration = 80.0;

}  // namespace

std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::source: return "source";
    case NodeKind::mobile: return "mobile";
    case NodeKind::edge: return "edge";
  }
  return "?";
}

std::string_view to_string(ContextName c) { return kContextNames[std::size_t(c)]; }

ContextName context_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kContextNames.size(); ++i)
    if (kContextNames[i] == s) return ContextName(i);
  throw std::invalid_argument("unknown context '" + std::string(s) + "'");
}

double default_accuracy_cap(ContextName c) { return c == ContextName::sunny ? 0.8 : 0.6; }

AccuracyDistribution AccuracyDistribution::beta(double a, double b) {
  AccuracyDistribution d;
  d.kind = Kind::beta;
  d.a = a;
  d.b = b;
  return d;
}

AccuracyDistribution AccuracyDistribution::empirical(std::vector<double> samples) {
  AccuracyDistribution d;
  d.kind = Kind::empirical;
  std::sort(samples.begin(), samples.end());
  d.samples = std::move(samples);
  return d;
}

AccuracyDistribution AccuracyDistribution::point(double value) { return empirical({value}); }

Calibration builtin_calibration(const DnnCatalog& catalog) {
  Calibration cal;
  for (const auto& b : catalog.branches) {
    const FamilyQuality* fam = nullptr;
    for (const auto& f : kFamilies)
      if (b.accuracy_key.rfind(f.prefix, 0) == 0) {
        fam = &f;
        break;
      }
    const double depth_bonus = b.depth >= 101 ? 0.16 : b.depth >= 50 ? 0.08 : 0.0;
    for (std::size_t c = 0; c < kContextNames.size(); ++c) {
      double m = 0.5;
      if (fam != nullptr) {
        m = fam->sunny + depth_bonus;
        if (ContextName(c) == ContextName::night) m += fam->night_shift;
        if (ContextName(c) == ContextName::motorway) m += fam->motorway_shift;
      }
      m = std::clamp(m, 0.05, 0.95);
      cal[{b.accuracy_key, ContextName(c)}] =
          AccuracyDistribution::beta(m * kBetaConcentration, (1.0 - m) * kBetaConcentration);
    }
  }
  return cal;
}

ScenarioError::ScenarioError(std::vector<std::string> violations)
    : std::runtime_error("scenario validation failed:" + join(violations)),
      violations_(std::move(violations)) {}

std::size_t ScenarioConfig::node_index(std::string_view id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return i;
  throw std::out_of_range("unknown node '" + std::string(id) + "'");
}

int ScenarioConfig::samples_per_slot() const {
  return int(std::lround(slot_duration / radio::kSampleInterval));
}

int ScenarioConfig::horizon() const {
  int h = std::numeric_limits<int>::max();
  const int sps = samples_per_slot();
  for (const auto& n : nodes) {
    if (!n.trace_id) continue;
    auto it = traces.find(*n.trace_id);
    if (it == traces.end()) return 0;
    h = std::min(h, int(it->second.size()) / sps);
  }
  return h;
}

const ContextLabel& ScenarioConfig::context_of(const ApplicationSpec& app) const {
  const auto& home = node(app.home_mobile_node);
  if (!home.context) throw std::logic_error("mobile node " + home.id + " has no context");
  return *home.context;
}

bool ScenarioConfig::operator==(const ScenarioConfig& o) const {
  auto catalog_eq = [](const DnnCatalog& a, const DnnCatalog& b) {
    json ja, jb;
    to_json(ja, a);
    to_json(jb, b);
    return ja == jb;
  };
  return nodes == o.nodes && applications == o.applications &&
         catalog_is_builtin == o.catalog_is_builtin && catalog_eq(catalog, o.catalog) &&
         trace_sources == o.trace_sources && calibration_is_builtin == o.calibration_is_builtin &&
         calibration_overrides == o.calibration_overrides && slot_duration == o.slot_duration &&
         seed == o.seed && numerology.scs_hz == o.numerology.scs_hz &&
         numerology.overhead == o.numerology.overhead &&
         numerology.max_blocks == o.numerology.max_blocks && traces == o.traces &&
         calibration == o.calibration;
}

void ScenarioConfig::finalize(const std::filesystem::path& base_dir) {
  std::vector<std::string> errors;
  auto fail = [&](std::string msg) { errors.push_back(std::move(msg)); };

  if (!(slot_duration > 0)) fail("slot_duration_s must be > 0");
  else if (std::abs(slot_duration / radio::kSampleInterval - samples_per_slot()) > 1e-9 ||
           samples_per_slot() < 1)
    fail("slot_duration_s must be a positive multiple of 0.1 s");

  // Traces.
  traces.clear();
  std::set<std::string> trace_ids;
  for (const auto& ts : trace_sources) {
    if (!trace_ids.insert(ts.id).second) fail("duplicate trace id '" + ts.id + "'");
    try {
      if (ts.csv_path) {
        std::filesystem::path p = *ts.csv_path;
        if (p.is_relative()) p = base_dir / p;
        std::ifstream in(p);
        if (!in) throw std::runtime_error("cannot open " + p.string());
        traces[ts.id] = radio::read_trace_csv(in);
      } else {
        traces[ts.id] = radio::synth_trace(ts.kind, ts.duration_s, ts.seed);
      }
    } catch (const std::exception& e) {
      fail("trace '" + ts.id + "': " + e.what());
    }
  }

  // Nodes.
  std::set<std::string> ids;
  int edges = 0;
  for (const auto& n : nodes) {
    const std::string where = "node '" + n.id + "'";
    if (n.id.empty()) fail("node with empty id");
    if (!ids.insert(n.id).second) fail("duplicate node id '" + n.id + "'");
    if (n.kind == NodeKind::edge) ++edges;
    if (n.kind != NodeKind::source && !(n.compute_capacity > 0))
      fail(where + ": compute_capacity must be > 0");
    if (n.radio_blocks < 0) fail(where + ": radio_blocks must be >= 0");
    if (n.energy_per_compute < 0 || n.energy_per_block < 0)
      fail(where + ": energy coefficients must be >= 0");
    if (n.kind == NodeKind::source && !n.modality) fail(where + ": sources need a modality");
    if (n.kind != NodeKind::source && n.modality) fail(where + ": only sources carry a modality");
    if (n.kind == NodeKind::mobile) {
      if (!n.context) fail(where + ": mobile nodes need a context");
      else if (!(n.context->accuracy_cap > 0 && n.context->accuracy_cap <= 1))
        fail(where + ": accuracy_cap must be in (0, 1]");
    } else if (n.context) {
      fail(where + ": only mobile nodes carry a context");
    }
    if (n.trace_id) {
      if (n.kind == NodeKind::edge) fail(where + ": edge servers have no uplink trace");
      if (!trace_ids.count(*n.trace_id))
        fail(where + ": unknown trace_id '" + *n.trace_id + "'");
    } else if (n.radio_blocks > 0 && !(n.rho > 0)) {
      fail(where + ": rho_bps must be > 0 when radio_blocks > 0");
    }
    if (n.colocated_with && n.kind != NodeKind::source)
      fail(where + ": only sources can be co-located");
  }
  for (const auto& n : nodes) {
    if (!n.colocated_with) continue;
    auto it = std::find_if(nodes.begin(), nodes.end(),
                           [&](const NodeSpec& m) { return m.id == *n.colocated_with; });
    if (it == nodes.end() || it->kind != NodeKind::mobile)
      fail("node '" + n.id + "': colocated_with must name a mobile node");
  }
  if (edges == 0) fail("at least one edge server is required");

  // Applications.
  std::set<std::string> app_ids;
  auto find_node = [&](const std::string& id) -> const NodeSpec* {
    for (const auto& n : nodes)
      if (n.id == id) return &n;
    return nullptr;
  };
  for (const auto& a : applications) {
    const std::string where = "application '" + a.id + "'";
    if (!app_ids.insert(a.id).second) fail("duplicate application id '" + a.id + "'");
    if (!(a.latency_target > 0)) fail(where + ": latency_target must be > 0");
    if (!(a.accuracy_target > 0 && a.accuracy_target < 1))
      fail(where + ": accuracy_target must be in (0, 1)");
    if (!(a.quantile > 0 && a.quantile < 1)) fail(where + ": quantile must be in (0, 1)");
    if (a.candidate_sources.empty()) fail(where + ": candidate_sources is empty");
    for (const auto& s : a.candidate_sources) {
      const NodeSpec* n = find_node(s);
      if (n == nullptr) fail(where + ": unknown source '" + s + "'");
      else if (n->kind != NodeKind::source) fail(where + ": '" + s + "' is not a source");
      auto it = a.source_bits.find(s);
      if (it == a.source_bits.end() || !(it->second > 0))
        fail(where + ": source_bits for '" + s + "' must be > 0");
    }
    const NodeSpec* home = find_node(a.home_mobile_node);
    if (home == nullptr || home->kind != NodeKind::mobile)
      fail(where + ": home_mobile_node must name a mobile node");
  }

  calibration = calibration_is_builtin ? builtin_calibration(catalog) : Calibration{};
  for (const auto& [k, v] : calibration_overrides) {
    if (v.kind == AccuracyDistribution::Kind::beta && !(v.a > 0 && v.b > 0))
      fail("calibration " + k.first + "/" + std::string(to_string(k.second)) +
           ": beta shapes must be > 0");
    if (v.kind == AccuracyDistribution::Kind::empirical) {
      if (v.samples.empty())
        fail("calibration " + k.first + ": empirical distribution needs samples");
      for (double s : v.samples)
        if (!(s >= 0 && s <= 1)) fail("calibration " + k.first + ": samples must lie in [0, 1]");
    }
    calibration[k] = v;
  }

  if (!errors.empty()) throw ScenarioError(std::move(errors));
  if (horizon() < 1 && !trace_sources.empty())
    throw ScenarioError({"traces shorter than one slot"});
}

// --- JSON ---------------------------------------------------------------

namespace {

json node_to_json(const NodeSpec& n) {
  json j = {{"id", n.id}, {"kind", to_string(n.kind)}};
  if (n.modality) j["modality"] = to_string(*n.modality);
  if (n.kind != NodeKind::source) j["compute_capacity"] = n.compute_capacity;
  j["radio_blocks"] = n.radio_blocks;
  if (n.rho > 0) j["rho_bps"] = n.rho;
  j["energy_per_compute"] = n.energy_per_compute;
  j["energy_per_block"] = n.energy_per_block;
  if (n.trace_id) j["trace_id"] = *n.trace_id;
  if (n.context)
    j["context"] = {{"name", to_string(n.context->name)},
                    {"accuracy_cap", n.context->accuracy_cap}};
  if (n.colocated_with) j["colocated_with"] = *n.colocated_with;
  return j;
}

NodeSpec node_from_json(const json& j) {
  NodeSpec n;
  n.id = j.at("id").get<std::string>();
  n.kind = node_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("modality")) n.modality = modality_from_string(j["modality"].get<std::string>());
  n.compute_capacity = j.value("compute_capacity", 0.0);
  n.radio_blocks = j.value("radio_blocks", 0);
  n.rho = j.value("rho_bps", 0.0);
  n.energy_per_compute = j.value("energy_per_compute", 0.0);
  n.energy_per_block = j.value("energy_per_block", 0.0);
  if (j.contains("trace_id")) n.trace_id = j["trace_id"].get<std::string>();
  if (j.contains("context")) {
    const auto& c = j["context"];
    ContextLabel label;
    label.name = context_from_string(c.at("name").get<std::string>());
    label.accuracy_cap = c.value("accuracy_cap", default_accuracy_cap(label.name));
    n.context = label;
  }
  if (j.contains("colocated_with")) n.colocated_with = j["colocated_with"].get<std::string>();
  return n;
}

json app_to_json(const ApplicationSpec& a) {
  return {{"id", a.id},
          {"latency_target", a.latency_target},
          {"accuracy_target", a.accuracy_target},
          {"quantile", a.quantile},
          {"candidate_sources", a.candidate_sources},
          {"home_mobile_node", a.home_mobile_node},
          {"source_bits", a.source_bits}};
}

ApplicationSpec app_from_json(const json& j) {
  ApplicationSpec a;
  a.id = j.at("id").get<std::string>();
  a.latency_target = j.at("latency_target").get<double>();
  a.accuracy_target = j.at("accuracy_target").get<double>();
  a.quantile = j.at("quantile").get<double>();
  a.candidate_sources = j.at("candidate_sources").get<std::vector<std::string>>();
  a.home_mobile_node = j.at("home_mobile_node").get<std::string>();
  a.source_bits = j.at("source_bits").get<std::map<std::string, double>>();
  return a;
}

json distribution_to_json(const AccuracyDistribution& d) {
  if (d.kind == AccuracyDistribution::Kind::beta) return {{"beta", {d.a, d.b}}};
  return {{"samples", d.samples}};
}

AccuracyDistribution distribution_from_json(const json& j) {
  if (j.contains("beta")) {
    const auto v = j["beta"].get<std::vector<double>>();
    if (v.size() != 2) throw std::invalid_argument("beta needs two shape parameters");
    return AccuracyDistribution::beta(v[0], v[1]);
  }
  if (j.contains("samples"))
    return AccuracyDistribution::empirical(j["samples"].get<std::vector<double>>());
  if (j.contains("point")) return AccuracyDistribution::point(j["point"].get<double>());
  throw std::invalid_argument("calibration entry needs 'beta', 'samples' or 'point'");
}

}  // namespace

ScenarioConfig parse_scenario(const json& j, const std::filesystem::path& base_dir) {
  ScenarioConfig cfg;
  std::vector<std::string> errors;
  try {
    for (const auto& n : j.at("nodes")) cfg.nodes.push_back(node_from_json(n));
    for (const auto& a : j.at("applications")) cfg.applications.push_back(app_from_json(a));

    const json& cat = j.value("catalog", json("builtin"));
    if (cat.is_string()) {
      if (cat.get<std::string>() != "builtin")
        throw std::invalid_argument("catalog must be \"builtin\" or an object");
      cfg.catalog = builtin_catalog();
      cfg.catalog_is_builtin = true;
    } else {
      cfg.catalog = cat.get<DnnCatalog>();
      cfg.catalog_is_builtin = false;
    }

    const json traces = j.value("traces", json::object());
    for (const auto& [id, t] : traces.items()) {
      TraceSource ts;
      ts.id = id;
      if (t.contains("csv")) {
        ts.csv_path = t["csv"].get<std::string>();
      } else {
        ts.kind = radio::trace_kind_from_string(t.at("kind").get<std::string>());
        ts.duration_s = t.value("duration_s", 150.0);
        ts.seed = t.value("seed", std::uint64_t{0});
      }
      cfg.trace_sources.push_back(std::move(ts));
    }

    const json& cal = j.value("calibration", json("builtin"));
    if (cal.is_string()) {
      if (cal.get<std::string>() != "builtin")
        throw std::invalid_argument("calibration must be \"builtin\" or an object");
      cfg.calibration_is_builtin = true;
    } else {
      cfg.calibration_is_builtin = cal.value("builtin", true);
      const json entries = cal.value("entries", json::array());
      for (const auto& e : entries) {
        CalibrationKey key{e.at("branch").get<std::string>(),
                           context_from_string(e.at("context").get<std::string>())};
        cfg.calibration_overrides[key] = distribution_from_json(e);
      }
    }

    cfg.slot_duration = j.value("slot_duration_s", 1.0);
    cfg.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("numerology")) {
      const auto& nm = j["numerology"];
      cfg.numerology.scs_hz = nm.value("scs_hz", 15e3);
      cfg.numerology.overhead = nm.value("overhead", 0.0);
      cfg.numerology.max_blocks = nm.value("max_blocks", 100);
    }
  } catch (const json::exception& e) {
    throw ScenarioError({std::string("malformed scenario: ") + e.what()});
  } catch (const std::invalid_argument& e) {
    throw ScenarioError({std::string("malformed scenario: ") + e.what()});
  }
  cfg.finalize(base_dir);
  return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError({"cannot open scenario file " + path.string()});
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ScenarioError({"parse error in " + path.string() + ": " + e.what()});
  }
  return parse_scenario(j, path.parent_path());
}

json scenario_to_json(const ScenarioConfig& cfg) {
  json j;
  j["nodes"] = json::array();
  for (const auto& n : cfg.nodes) j["nodes"].push_back(node_to_json(n));
  j["applications"] = json::array();
  for (const auto& a : cfg.applications) j["applications"].push_back(app_to_json(a));
  if (cfg.catalog_is_builtin) j["catalog"] = "builtin";
  else j["catalog"] = cfg.catalog;
  j["traces"] = json::object();
  for (const auto& ts : cfg.trace_sources) {
    if (ts.csv_path) j["traces"][ts.id] = {{"csv", *ts.csv_path}};
    else
      j["traces"][ts.id] = {
          {"kind", radio::to_string(ts.kind)}, {"duration_s", ts.duration_s}, {"seed", ts.seed}};
  }
  if (cfg.calibration_is_builtin && cfg.calibration_overrides.empty()) {
    j["calibration"] = "builtin";
  } else {
    json entries = json::array();
    for (const auto& [k, v] : cfg.calibration_overrides) {
      json e = distribution_to_json(v);
      e["branch"] = k.first;
      e["context"] = to_string(k.second);
      entries.push_back(std::move(e));
    }
    j["calibration"] = {{"builtin", cfg.calibration_is_builtin}, {"entries", std::move(entries)}};
  }
  j["slot_duration_s"] = cfg.slot_duration;
  j["seed"] = cfg.seed;
  j["numerology"] = {{"scs_hz", cfg.numerology.scs_hz},
                     {"overhead", cfg.numerology.overhead},
                     {"max_blocks", cfg.numerology.max_blocks}};
  return j;
}

void save_scenario(const ScenarioConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << scenario_to_json(cfg).dump(2) << '\n';
}

SystemState snapshot_at(const ScenarioConfig& cfg, int t) {
  if (t < 0 || t >= cfg.horizon())
    throw std::out_of_range("slot " + std::to_string(t) + " outside horizon " +
                            std::to_string(cfg.horizon()));
  const auto n = Eigen::Index(cfg.nodes.size());
  SystemState s;
  s.t = t;
  s.blocks = Eigen::VectorXi::Zero(n);
  s.compute = Eigen::VectorXd::Zero(n);
  s.rho = Eigen::VectorXd::Zero(n);
  const int sps = cfg.samples_per_slot();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& node = cfg.nodes[std::size_t(i)];
    s.compute(i) = node.kind == NodeKind::source ? 0.0 : node.compute_capacity;
    if (node.kind == NodeKind::edge) continue;
    if (node.trace_id) {
      const auto window = radio::link_window(cfg.traces.at(*node.trace_id), t, 1, sps,
                                             cfg.numerology);
      s.rho(i) = window.samples.front().rho;
      s.blocks(i) = window.samples.front().blocks;
    } else {
      s.rho(i) = node.rho;
      s.blocks(i) = node.radio_blocks;
    }
  }
  return s;
}

std::vector<radio::LinkDistribution> slot_links(const ScenarioConfig& cfg, int t) {
  if (t < 0 || t >= cfg.horizon())
    throw std::out_of_range("slot " + std::to_string(t) + " outside horizon");
  const int sps = cfg.samples_per_slot();
  std::vector<radio::LinkDistribution> links(cfg.nodes.size());
  for (std::size_t i = 0; i < cfg.nodes.size(); ++i) {
    const auto& node = cfg.nodes[i];
    if (node.kind == NodeKind::edge) continue;
    if (node.trace_id) {
      links[i] = radio::link_window(cfg.traces.at(*node.trace_id), t, 1, sps, cfg.numerology);
    } else {
      links[i].samples.assign(std::size_t(sps), radio::LinkSample{node.rho, node.radio_blocks});
    }
  }
  return links;
}

}  // namespace qic
