#include "qic/catalog.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace qic {

namespace {

constexpr std::array<std::string_view, kModalityCount> kModalityNames = {
    "camera_left", "camera_right", "radar", "lidar"};

double element_count(const std::vector<int>& dims) {
  return std::accumulate(dims.begin(), dims.end(), 1.0,
                         [](double acc, int d) { return acc * double(d); });
}

StemSpec make_stem(std::string id, Modality m, std::vector<int> in, std::vector<int> out,
                   double flops, int bits_per_element) {
  StemSpec s{std::move(id), m, std::move(in), std::move(out), flops, 0.0};
  s.output_bits = element_count(s.output_dims) * bits_per_element;
  return s;
}

std::vector<Modality> modalities_in(ModalityMask mask) {
  std::vector<Modality> out;
  for (std::size_t i = 0; i < kModalityCount; ++i)
    if (mask & (1u << i)) out.push_back(Modality(i));
  return out;
}

bool is_subset(ModalityMask a, ModalityMask b) { return (a & ~b) == 0; }

}  // namespace

std::string_view to_string(Modality m) { return kModalityNames[std::size_t(m)]; }

Modality modality_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kModalityCount; ++i)
    if (kModalityNames[i] == s) return Modality(i);
  throw std::invalid_argument("unknown modality '" + std::string(s) + "'");
}

const StemSpec& DnnCatalog::stem(std::string_view id) const {
  for (const auto& s : stems)
    if (s.id == id) return s;
  throw std::out_of_range("unknown stem '" + std::string(id) + "'");
}

const BranchSpec& DnnCatalog::branch(std::string_view id) const {
  return branches[branch_index(id)];
}

std::size_t DnnCatalog::branch_index(std::string_view id) const {
  for (std::size_t i = 0; i < branches.size(); ++i)
    if (branches[i].id == id) return i;
  throw std::out_of_range("unknown branch '" + std::string(id) + "'");
}

const StemSpec& DnnCatalog::stem_for(Modality m) const {
  for (const auto& s : stems)
    if (s.modality == m) return s;
  throw std::out_of_range("no stem for modality " + std::string(to_string(m)));
}

DnnCatalog builtin_catalog() {
  DnnCatalog c;
  const int bpe = c.bits_per_element;
  // Both cameras use the shared "L/R cam." row.
  c.stems.push_back(make_stem("camera_left_stem", Modality::camera_left, {672, 376},
                              {64, 168, 94}, 3.552e9, bpe));
  c.stems.push_back(make_stem("camera_right_stem", Modality::camera_right, {672, 376},
                              {64, 168, 94}, 3.552e9, bpe));
  c.stems.push_back(make_stem("radar_stem", Modality::radar, {1152, 1152}, {64, 288, 288},
                              31.00e9, bpe));
  c.stems.push_back(make_stem("lidar_stem", Modality::lidar, {672, 376}, {64, 168, 94},
                              5.900e9, bpe));

  const ModalityMask L = mask_of(Modality::camera_left);
  const ModalityMask R = mask_of(Modality::camera_right);
  const ModalityMask RA = mask_of(Modality::radar);
  const ModalityMask LI = mask_of(Modality::lidar);

  struct Family {
    const char* name;
    std::vector<ModalityMask> inputs;
    Fusion fusion;
  };
  const std::array<Family, 6> families = {{
      {"CameraBranch", {L, R}, Fusion::single},
      {"RadarBranch", {RA}, Fusion::single},
      {"LidarBranch", {LI}, Fusion::single},
      {"DualCameraFusion", {ModalityMask(L | R)}, Fusion::early},
      {"RadarLidarFusion", {ModalityMask(RA | LI)}, Fusion::early},
      {"CameraLidarFusion", {ModalityMask(L | LI)}, Fusion::early},
  }};
  struct Row {
    double params;
    double flops;
  };
  // Rows follow the family order above, one block per depth.
  const std::array<std::array<Row, 6>, 3> rows = {{
      {{{40.20, 21.76e9},
        {40.20, 115.86e9},
        {40.20, 23.00e9},
        {40.28, 270.8e9},
        {40.28, 586.6e9},
        {40.31, 286.6e9}}},
      {{{165.06, 85.14e9},
        {165.06, 352.5e9},
        {165.06, 89.10e9},
        {165.06, 982.6e9},
        {165.06, 2202e9},
        {165.06, 1084e9}}},
      {{{184.05, 184.1e9},
        {184.05, 573.4e9},
        {184.05, 132.4e9},
        {184.05, 1496e9},
        {184.05, 3434e9},
        {184.05, 1562e9}}},
  }};
  const std::array<int, 3> depths = {18, 50, 101};
  for (std::size_t d = 0; d < depths.size(); ++d) {
    for (std::size_t f = 0; f < families.size(); ++f) {
      BranchSpec b;
      b.id = std::string(families[f].name) + std::to_string(depths[d]);
      b.input_alternatives = families[f].inputs;
      b.depth = depths[d];
      b.fusion = families[f].fusion;
      b.params_millions = rows[d][f].params;
      b.flops = rows[d][f].flops;
      b.output_bits = c.detection_output_bits;
      b.accuracy_key = b.id;
      c.branches.push_back(std::move(b));
    }
  }
  return c;
}

std::vector<ConfigurationOption> enumerate_options(const DnnCatalog& catalog,
                                                   ModalityMask available) {
  std::vector<ConfigurationOption> out;
  auto make = [&](const BranchSpec& b, ModalityMask alt) {
    ConfigurationOption o;
    o.sources = alt;
    for (Modality m : modalities_in(alt)) o.stems.push_back(catalog.stem_for(m).id);
    o.branch = b.id;
    return o;
  };
  // Single-sensor depth-18 options feed the late-fusion pairs.
  std::vector<std::pair<const BranchSpec*, ModalityMask>> late_candidates;
  for (const auto& b : catalog.branches) {
    for (ModalityMask alt : b.input_alternatives) {
      if (!is_subset(alt, available)) continue;
      out.push_back(make(b, alt));
      if (b.depth == 18 && b.fusion == Fusion::single) late_candidates.emplace_back(&b, alt);
    }
  }
  for (std::size_t i = 0; i < late_candidates.size(); ++i) {
    for (std::size_t j = i + 1; j < late_candidates.size(); ++j) {
      const auto& [bi, mi] = late_candidates[i];
      const auto& [bj, mj] = late_candidates[j];
      if (mi & mj) continue;
      ConfigurationOption o = make(*bi, ModalityMask(mi | mj));
      o.late_fusion = bj->id;
      out.push_back(std::move(o));
    }
  }
  return out;
}

CostProfile option_cost_profile(const DnnCatalog& catalog, const ConfigurationOption& option) {
  CostProfile p;
  for (const auto& id : option.stems) {
    const auto& s = catalog.stem(id);
    p.stem_flops += s.flops;
    p.stem_to_branch_bits += s.output_bits;
  }
  p.branch_flops = catalog.branch(option.branch).flops;
  if (option.late_fusion) p.branch_flops += catalog.branch(*option.late_fusion).flops;
  p.output_bits = catalog.detection_output_bits;
  return p;
}

bool option_is_valid(const DnnCatalog& catalog, const ConfigurationOption& option) {
  ModalityMask stem_mask = 0;
  for (const auto& id : option.stems) {
    const StemSpec* s = nullptr;
    for (const auto& cand : catalog.stems)
      if (cand.id == id) s = &cand;
    if (s == nullptr) return false;
    const ModalityMask bit = mask_of(s->modality);
    if (stem_mask & bit) return false;
    stem_mask |= bit;
  }
  if (stem_mask != option.sources) return false;

  auto find_branch = [&](const std::string& id) -> const BranchSpec* {
    for (const auto& b : catalog.branches)
      if (b.id == id) return &b;
    return nullptr;
  };
  const BranchSpec* main = find_branch(option.branch);
  if (main == nullptr) return false;
  if (!option.late_fusion) {
    return std::find(main->input_alternatives.begin(), main->input_alternatives.end(),
                     option.sources) != main->input_alternatives.end();
  }
  const BranchSpec* second = find_branch(*option.late_fusion);
  if (second == nullptr) return false;
  if (main->depth != 18 || second->depth != 18) return false;
  if (main->fusion != Fusion::single || second->fusion != Fusion::single) return false;
  for (ModalityMask a : main->input_alternatives)
    for (ModalityMask b : second->input_alternatives)
      if (!(a & b) && ModalityMask(a | b) == option.sources) return true;
  return false;
}

std::string option_label(const ConfigurationOption& option) {
  std::string s = option.branch;
  if (option.late_fusion) s += "+" + *option.late_fusion;
  s += "[";
  bool first = true;
  for (Modality m : modalities_in(option.sources)) {
    if (!first) s += ",";
    s += to_string(m);
    first = false;
  }
  return s + "]";
}

void to_json(nlohmann::json& j, const DnnCatalog& c) {
  j = nlohmann::json::object();
  j["bits_per_element"] = c.bits_per_element;
  j["detection_output_bits"] = c.detection_output_bits;
  auto& stems = j["stems"] = nlohmann::json::array();
  for (const auto& s : c.stems) {
    stems.push_back({{"id", s.id},
                     {"modality", to_string(s.modality)},
                     {"input_dims", s.input_dims},
                     {"output_dims", s.output_dims},
                     {"flops", s.flops},
                     {"output_bits", s.output_bits}});
  }
  auto& branches = j["branches"] = nlohmann::json::array();
  for (const auto& b : c.branches) {
    nlohmann::json inputs = nlohmann::json::array();
    for (ModalityMask alt : b.input_alternatives) {
      nlohmann::json names = nlohmann::json::array();
      for (Modality m : modalities_in(alt)) names.push_back(to_string(m));
      inputs.push_back(std::move(names));
    }
    branches.push_back({{"id", b.id},
                        {"inputs", std::move(inputs)},
                        {"depth", b.depth},
                        {"fusion", b.fusion == Fusion::single ? "single" : "early"},
                        {"params_millions", b.params_millions},
                        {"flops", b.flops},
                        {"output_bits", b.output_bits},
                        {"accuracy_key", b.accuracy_key}});
  }
}

void from_json(const nlohmann::json& j, DnnCatalog& c) {
  c = DnnCatalog{};
  c.bits_per_element = j.value("bits_per_element", 8);
  c.detection_output_bits = j.value("detection_output_bits", 1e5);
  for (const auto& s : j.at("stems")) {
    StemSpec st = make_stem(s.at("id").get<std::string>(),
                            modality_from_string(s.at("modality").get<std::string>()),
                            s.at("input_dims").get<std::vector<int>>(),
                            s.at("output_dims").get<std::vector<int>>(),
                            s.at("flops").get<double>(), c.bits_per_element);
    if (!(st.flops > 0)) throw std::invalid_argument("stem " + st.id + ": flops must be > 0");
    c.stems.push_back(std::move(st));
  }
  for (const auto& b : j.at("branches")) {
    BranchSpec br;
    br.id = b.at("id").get<std::string>();
    for (const auto& alt : b.at("inputs")) {
      ModalityMask mask = 0;
      for (const auto& name : alt) mask |= mask_of(modality_from_string(name.get<std::string>()));
      br.input_alternatives.push_back(mask);
    }
    br.depth = b.at("depth").get<int>();
    const auto fusion = b.at("fusion").get<std::string>();
    if (fusion != "single" && fusion != "early")
      throw std::invalid_argument("branch " + br.id + ": unknown fusion '" + fusion + "'");
    br.fusion = fusion == "single" ? Fusion::single : Fusion::early;
    br.params_millions = b.at("params_millions").get<double>();
    br.flops = b.at("flops").get<double>();
    br.output_bits = b.value("output_bits", c.detection_output_bits);
    br.accuracy_key = b.value("accuracy_key", br.id);
    if (!(br.flops > 0)) throw std::invalid_argument("branch " + br.id + ": flops must be > 0");
    if (br.fusion == Fusion::early) {
      for (ModalityMask alt : br.input_alternatives)
        if (modalities_in(alt).size() < 2)
          throw std::invalid_argument("branch " + br.id + ": early fusion needs >= 2 modalities");
    }
    c.branches.push_back(std::move(br));
  }
}

}  // namespace qic
