#include "qic/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "qic/perf.hpp"

namespace qic {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::runtime_error("bad number '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool close(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

constexpr const char* kRunsHeader =
    "sweep,x,solver,t,app,mobile,context,energy_j,latency_q_s,accuracy_q,app_ok,joint_feasible,status";

}  // namespace

std::string_view to_string(Solver s) {
  switch (s) {
    case Solver::qic: return "qic";
    case Solver::mctp: return "mctp";
    case Solver::opt: return "opt";
  }
  return "?";
}

Solver solver_from_string(std::string_view s) {
  if (s == "qic") return Solver::qic;
  if (s == "mctp") return Solver::mctp;
  if (s == "opt") return Solver::opt;
  throw std::invalid_argument("unknown solver '" + std::string(s) + "'");
}

std::vector<Solver> parse_solvers(std::string_view list) {
  std::vector<Solver> out;
  for (const auto& tok : split(std::string(list))) {
    if (tok.empty()) continue;
    const Solver s = solver_from_string(tok);
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  if (out.empty()) throw std::invalid_argument("no solvers selected");
  return out;
}

ExperimentOptions parse_experiment(const nlohmann::json& root) {
  ExperimentOptions o;
  const nlohmann::json& j = root.contains("experiment") ? root["experiment"] : root;
  if (!j.is_object()) return o;
  if (j.contains("solvers")) {
    o.solvers.clear();
    for (const auto& s : j["solvers"]) o.solvers.push_back(solver_from_string(s.get<std::string>()));
  }
  o.mctp_iterations = j.value("mctp_iterations", o.mctp_iterations);
  o.exhaustive_cap = j.value("exhaustive_cap", o.exhaustive_cap);
  o.max_slots = j.value("max_slots", o.max_slots);
  if (j.contains("qcpo")) o.qcpo = j["qcpo"].get<QcpoParams>();
  if (j.contains("sweeps")) {
    o.sweeps.clear();
    for (const auto& s : j["sweeps"])
      o.sweeps.push_back({s.at("name").get<std::string>(), s.at("values").get<std::vector<double>>()});
  }
  if (j.contains("n_mobile")) o.n_mobile = j["n_mobile"].get<std::vector<int>>();
  if (j.contains("large")) o.large = j["large"];
  o.qcpo.validate();
  for (const auto& s : o.sweeps)
    if (s.name != "accuracy" && s.name != "latency")
      throw std::invalid_argument("unknown sweep '" + s.name + "'");
  for (int n : o.n_mobile)
    if (n < 1) throw std::invalid_argument("n_mobile values must be >= 1");
  return o;
}

ScenarioConfig with_target(const ScenarioConfig& cfg, const std::string& sweep, double value) {
  ScenarioConfig out = cfg;
  for (auto& app : out.applications) {
    if (sweep == "accuracy") app.accuracy_target = value;
    else if (sweep == "latency") app.latency_target = value;
    else throw std::invalid_argument("unknown sweep '" + sweep + "'");
  }
  return out;
}

std::vector<RunRecord> run_instance(const ScenarioConfig& cfg, const std::string& sweep, double x,
                                    const ExperimentOptions& opt, std::uint64_t seed,
                                    const TrainingSink& sink) {
  int T = cfg.horizon();
  if (opt.max_slots > 0) T = std::min(T, opt.max_slots);
  const std::size_t H = cfg.applications.size();
  std::optional<QcpoLearner> learner;
  if (std::find(opt.solvers.begin(), opt.solvers.end(), Solver::qic) != opt.solvers.end())
    learner.emplace(cfg, opt.qcpo, seed);

  std::vector<RunRecord> records;
  for (int t = 0; t < T; ++t) {
    const SlotModel model(cfg, t);
    for (Solver solver : opt.solvers) {
      std::optional<std::vector<int>> joint;
      std::string status = "ok";
      switch (solver) {
        case Solver::qic: {
          std::vector<TrainingRow> rows;
          joint = learner->orchestrate(model, &rows);
          if (sink) sink(sweep, x, rows);
          break;
        }
        case Solver::mctp: {
          SearchBudget budget;
          budget.max_iterations = opt.mctp_iterations;
          joint = mctp_solve(model, budget, mix_seed(seed, std::uint64_t(t)), opt.qcpo.mu).joint;
          break;
        }
        case Solver::opt: {
          try {
            auto r = exhaustive_optimum(model, opt.exhaustive_cap);
            if (r) joint = r->joint;
            else status = "no_solution";
          } catch (const CapExceeded& e) {
            status = "skipped";
          }
          break;
        }
      }

      JointScore score;
      Configuration conf;
      if (joint) {
        score = model.score(*joint, opt.qcpo.mu);
        conf = model.configuration(*joint);
        // Independent evaluation of the same configuration through the graph attributes.
        const auto attrs = attributes(conf, cfg, model.state(), model.links(), model.edges());
        if (feasible(attrs) != score.feasible)
          throw std::logic_error("feasibility mismatch between evaluators at t=" + std::to_string(t));
      }
      for (std::size_t h = 0; h < H; ++h) {
        const auto& app = cfg.applications[h];
        RunRecord r;
        r.sweep = sweep;
        r.x = x;
        r.solver = solver;
        r.t = t;
        r.app = app.id;
        r.mobile = app.home_mobile_node;
        r.context = std::string(to_string(cfg.context_of(app).name));
        r.status = status;
        if (joint) {
          const AppMetrics m = app_metrics(conf, cfg, h, model.links());
          const auto& eff = model.effects(h)[std::size_t((*joint)[h])];
          if (!close(m.energy, eff.energy) || !close(m.latency_quantile, eff.latency_quantile) ||
              !close(m.accuracy_quantile, eff.accuracy_quantile))
            throw std::logic_error("metric mismatch between evaluators for app " + app.id +
                                   " at t=" + std::to_string(t) + ": energy " + fmt(m.energy) + "/" +
                                   fmt(eff.energy) + ", latency " + fmt(m.latency_quantile) + "/" +
                                   fmt(eff.latency_quantile) + ", accuracy " +
                                   fmt(m.accuracy_quantile) + "/" + fmt(eff.accuracy_quantile));
          r.energy = m.energy;
          r.latency_quantile = m.latency_quantile;
          r.accuracy_quantile = m.accuracy_quantile;
          r.app_ok = m.ok();
          r.joint_feasible = score.feasible;
        } else {
          r.energy = r.latency_quantile = r.accuracy_quantile = std::nan("");
        }
        records.push_back(std::move(r));
      }
    }
  }
  if (learner && !opt.checkpoint_dir.empty()) {
    std::filesystem::create_directories(opt.checkpoint_dir);
    learner->save(opt.checkpoint_dir / ("learner_" + sweep + "_" + fmt(x) + ".json"));
  }
  return records;
}

std::vector<RunRecord> run_small_scale(const ScenarioConfig& cfg, const ExperimentOptions& opt,
                                       std::uint64_t seed, const TrainingSink& sink) {
  std::vector<RunRecord> out;
  for (const auto& sw : opt.sweeps) {
    for (double v : sw.values) {
      const ScenarioConfig point = with_target(cfg, sw.name, v);
      auto recs = run_instance(point, sw.name, v, opt, seed, sink);
      out.insert(out.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
    }
  }
  return out;
}

ScenarioConfig make_large_scenario(const nlohmann::json& large, int n_mobile, std::uint64_t seed) {
  if (n_mobile < 1) throw std::invalid_argument("n_mobile must be >= 1");
  const nlohmann::json& L = large.is_object() ? large : nlohmann::json::object();
  const int edges = L.value("edge_servers", 10);
  const double edge_c = L.value("edge_compute", 4e13);
  const double mobile_c = L.value("mobile_compute", 1e12);
  const double edge_ec = L.value("edge_energy_per_compute", 1e-14);
  const double mobile_ec = L.value("mobile_energy_per_compute", 5e-14);
  const double eb = L.value("energy_per_block", 1e-6);
  const double duration = L.value("duration_s", 30.0);
  const double latency = L.value("latency_target", 0.05);
  const double accuracy = L.value("accuracy_target", 0.5);
  const double quantile = L.value("quantile", 0.9);
  const std::map<std::string, double> bits = L.value(
      "source_bits", std::map<std::string, double>{{"camera_left", 5e5},
                                                   {"camera_right", 5e5},
                                                   {"radar", 8e5},
                                                   {"lidar", 3e5}});
  const std::vector<std::vector<Modality>> app_types = {
      {Modality::camera_left, Modality::camera_right},
      {Modality::lidar},
      {Modality::radar},
      {Modality::camera_left, Modality::lidar}};

  std::mt19937_64 rng(mix_seed(seed, std::uint64_t(n_mobile)));
  ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.slot_duration = 1.0;
  for (int i = 0; i < n_mobile; ++i) {
    const std::string mid = "m" + std::to_string(i);
    const auto ctx = ContextName(std::uniform_int_distribution<int>(0, 2)(rng));
    const auto& type = app_types[std::size_t(std::uniform_int_distribution<int>(0, 3)(rng))];
    TraceSource tr;
    tr.id = "trace_" + mid;
    tr.kind = std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? radio::TraceKind::outdoor
                                                                 : radio::TraceKind::indoor;
    tr.duration_s = duration;
    tr.seed = rng();
    cfg.trace_sources.push_back(tr);

    NodeSpec m;
    m.id = mid;
    m.kind = NodeKind::mobile;
    m.compute_capacity = mobile_c;
    m.energy_per_compute = mobile_ec;
    m.energy_per_block = eb;
    m.trace_id = tr.id;
    m.context = ContextLabel{ctx, default_accuracy_cap(ctx)};
    cfg.nodes.push_back(m);

    ApplicationSpec app;
    app.id = "app" + std::to_string(i);
    app.latency_target = latency;
    app.accuracy_target = accuracy;
    app.quantile = quantile;
    app.home_mobile_node = mid;
    for (Modality mod : type) {
      NodeSpec s;
      s.id = mid + "_" + std::string(to_string(mod));
      s.kind = NodeKind::source;
      s.modality = mod;
      s.energy_per_block = eb;
      s.trace_id = tr.id;
      s.colocated_with = mid;
      cfg.nodes.push_back(s);
      app.candidate_sources.push_back(s.id);
      app.source_bits[s.id] = bits.at(std::string(to_string(mod)));
    }
    cfg.applications.push_back(app);
  }
  for (int e = 0; e < edges; ++e) {
    NodeSpec n;
    n.id = "e" + std::to_string(e);
    n.kind = NodeKind::edge;
    n.compute_capacity = edge_c;
    n.energy_per_compute = edge_ec;
    cfg.nodes.push_back(n);
  }
  cfg.finalize();
  return cfg;
}

std::vector<RunRecord> run_large_scale(const ExperimentOptions& opt, std::uint64_t seed,
                                       const TrainingSink& sink) {
  ExperimentOptions o = opt;
  o.solvers.erase(std::remove(o.solvers.begin(), o.solvers.end(), Solver::opt), o.solvers.end());
  std::vector<RunRecord> out;
  for (int n : o.n_mobile) {
    const ScenarioConfig cfg = make_large_scenario(o.large, n, seed);
    auto recs = run_instance(cfg, "n_mobile", double(n), o, seed, sink);
    out.insert(out.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }
  return out;
}

std::vector<MetricsSummary> summarize(const std::vector<RunRecord>& records) {
  struct Key {
    std::string sweep;
    double x;
    Solver solver;
    bool operator==(const Key& o) const { return sweep == o.sweep && x == o.x && solver == o.solver; }
  };
  std::vector<Key> keys;
  std::vector<std::vector<const RunRecord*>> groups;
  for (const auto& r : records) {
    const Key k{r.sweep, r.x, r.solver};
    auto it = std::find(keys.begin(), keys.end(), k);
    if (it == keys.end()) {
      keys.push_back(k);
      groups.emplace_back();
      it = keys.end() - 1;
    }
    groups[std::size_t(it - keys.begin())].push_back(&r);
  }
  std::vector<MetricsSummary> out;
  for (std::size_t g = 0; g < keys.size(); ++g) {
    MetricsSummary s;
    s.sweep = keys[g].sweep;
    s.x = keys[g].x;
    s.solver = keys[g].solver;
    std::set<std::string> mobiles, failing;
    std::set<int> ok_slots, all_slots, feasible_slots;
    double energy = 0.0, latency = 0.0, accuracy = 0.0;
    int ok_rows = 0;
    for (const RunRecord* r : groups[g]) {
      mobiles.insert(r->mobile);
      if (r->status == "skipped") continue;
      all_slots.insert(r->t);
      if (r->status != "ok") {
        failing.insert(r->mobile);
        continue;
      }
      ok_slots.insert(r->t);
      if (r->joint_feasible) feasible_slots.insert(r->t);
      if (!r->app_ok) failing.insert(r->mobile);
      energy += r->energy;
      latency += r->latency_quantile;
      accuracy += r->accuracy_quantile;
      ++ok_rows;
    }
    s.slots = int(ok_slots.size());
    s.mobiles = int(mobiles.size());
    const double nan = std::nan("");
    if (all_slots.empty()) {
      s.avg_energy = s.churn = s.avg_latency = s.avg_accuracy = s.feasible_fraction = nan;
    } else {
      s.churn = double(failing.size()) / double(mobiles.size());
      s.feasible_fraction = double(feasible_slots.size()) / double(all_slots.size());
      s.avg_energy = ok_rows ? energy / double(s.slots) / double(s.mobiles) : nan;
      s.avg_latency = ok_rows ? latency / double(ok_rows) : nan;
      s.avg_accuracy = ok_rows ? accuracy / double(ok_rows) : nan;
    }
    out.push_back(s);
  }
  return out;
}

void write_runs_csv(std::ostream& os, const std::vector<RunRecord>& records) {
  os << kRunsHeader << '\n';
  for (const auto& r : records) {
    os << r.sweep << ',' << fmt(r.x) << ',' << to_string(r.solver) << ',' << r.t << ',' << r.app
       << ',' << r.mobile << ',' << r.context << ',' << fmt(r.energy) << ','
       << fmt(r.latency_quantile) << ',' << fmt(r.accuracy_quantile) << ',' << (r.app_ok ? 1 : 0)
       << ',' << (r.joint_feasible ? 1 : 0) << ',' << r.status << '\n';
  }
}

std::vector<RunRecord> read_runs_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("runs csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRunsHeader) throw std::runtime_error("runs csv: unexpected header");
  std::vector<RunRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split(line);
    if (f.size() != 13) throw std::runtime_error("runs csv: wrong field count on line " + std::to_string(lineno));
    RunRecord r;
    r.sweep = f[0];
    r.x = parse_double(f[1]);
    r.solver = solver_from_string(f[2]);
    r.t = std::stoi(f[3]);
    r.app = f[4];
    r.mobile = f[5];
    r.context = f[6];
    r.energy = parse_double(f[7]);
    r.latency_quantile = parse_double(f[8]);
    r.accuracy_quantile = parse_double(f[9]);
    r.app_ok = f[10] == "1";
    r.joint_feasible = f[11] == "1";
    r.status = f[12];
    out.push_back(std::move(r));
  }
  return out;
}

void write_summary_csv(std::ostream& os, const std::vector<MetricsSummary>& summaries) {
  os << "sweep,x,solver,slots,mobiles,avg_energy_j,churn,avg_latency_s,avg_accuracy,feasible_fraction\n";
  for (const auto& s : summaries) {
    os << s.sweep << ',' << fmt(s.x) << ',' << to_string(s.solver) << ',' << s.slots << ','
       << s.mobiles << ',' << fmt(s.avg_energy) << ',' << fmt(s.churn) << ','
       << fmt(s.avg_latency) << ',' << fmt(s.avg_accuracy) << ',' << fmt(s.feasible_fraction)
       << '\n';
  }
}

namespace {

void write_atomically(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void emit(const std::vector<RunRecord>& records, const std::vector<MetricsSummary>& summaries,
          const std::filesystem::path& out_dir, const std::string& prefix) {
  std::filesystem::create_directories(out_dir);
  {
    std::ostringstream os;
    write_runs_csv(os, records);
    write_atomically(out_dir / "runs.csv", os.str());
  }
  {
    std::ostringstream os;
    write_summary_csv(os, summaries);
    write_atomically(out_dir / "summary.csv", os.str());
  }

  std::vector<std::string> sweeps;
  std::vector<Solver> solvers;
  for (const auto& s : summaries) {
    if (std::find(sweeps.begin(), sweeps.end(), s.sweep) == sweeps.end()) sweeps.push_back(s.sweep);
    if (std::find(solvers.begin(), solvers.end(), s.solver) == solvers.end()) solvers.push_back(s.solver);
  }
  auto header = [&](std::ostringstream& os) {
    os << "x";
    for (Solver v : solvers) os << ',' << to_string(v);
    os << '\n';
  };
  for (const auto& sweep : sweeps) {
    std::vector<double> xs;
    for (const auto& s : summaries)
      if (s.sweep == sweep && std::find(xs.begin(), xs.end(), s.x) == xs.end()) xs.push_back(s.x);
    auto summary_plot = [&](const std::string& metric, auto getter) {
      std::ostringstream os;
      header(os);
      for (double x : xs) {
        os << fmt(x);
        for (Solver v : solvers) {
          double val = std::nan("");
          for (const auto& s : summaries)
            if (s.sweep == sweep && s.x == x && s.solver == v) val = getter(s);
          os << ',' << fmt(val);
        }
        os << '\n';
      }
      const std::string stem = prefix == "large" ? "plot_large_" + metric
                                                 : "plot_" + prefix + "_" + sweep + "_" + metric;
      write_atomically(out_dir / (stem + ".csv"), os.str());
    };
    summary_plot("energy", [](const MetricsSummary& s) { return s.avg_energy; });
    summary_plot("churn", [](const MetricsSummary& s) { return s.churn; });

    if (prefix == "large") continue;
    // Per-context energy: J per slot per mobile node of that context.
    std::vector<std::string> contexts;
    for (const auto& r : records)
      if (r.sweep == sweep && std::find(contexts.begin(), contexts.end(), r.context) == contexts.end())
        contexts.push_back(r.context);
    for (const auto& ctx : contexts) {
      std::ostringstream os;
      header(os);
      for (double x : xs) {
        os << fmt(x);
        for (Solver v : solvers) {
          double energy = 0.0;
          std::set<int> slots;
          std::set<std::string> mobiles;
          for (const auto& r : records) {
            if (r.sweep != sweep || r.x != x || r.solver != v || r.context != ctx) continue;
            mobiles.insert(r.mobile);
            if (r.status != "ok") continue;
            slots.insert(r.t);
            energy += r.energy;
          }
          const double val = slots.empty() ? std::nan("")
                                           : energy / double(slots.size()) / double(mobiles.size());
          os << ',' << fmt(val);
        }
        os << '\n';
      }
      write_atomically(out_dir / ("plot_" + prefix + "_" + sweep + "_" + ctx + "_energy.csv"), os.str());
    }
  }
}

}  // namespace qic
