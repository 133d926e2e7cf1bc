#include "qic/radio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace qic::radio {

namespace {

// 3GPP TS 38.214 Table 5.1.3.1-1 (MCS index table 1, up to 64-QAM).
constexpr std::array<double, kMaxMcsIndex + 1> kSpectralEfficiency = {
    0.2344, 0.3066, 0.3770, 0.4902, 0.6016, 0.7402, 0.8770, 1.0273, 1.1758, 1.3262,
    1.3281, 1.4766, 1.6953, 1.9141, 2.1602, 2.4063, 2.5703, 2.5664, 2.7305, 3.0293,
    3.3223, 3.6094, 3.9023, 4.2129, 4.5234, 4.8164, 5.1152, 5.3320, 5.5547};

constexpr int kSubcarriersPerBlock = 12;
constexpr int kSymbolsPerSlot = 14;

struct ChannelModel {
  double reference_snr_db;  // SNR at 1 m
  double path_loss_exponent;
  double shadowing_db;
  double shadowing_memory;  // AR(1) coefficient per sample
  double wall_penalty_db;
};

int snr_to_mcs(double snr_db) {
  // One MCS step per dB above 0 dB.
  return std::clamp(int(std::floor(snr_db)), 0, kMaxMcsIndex);
}

}  // namespace

std::string_view to_string(TraceKind k) { return k == TraceKind::outdoor ? "outdoor" : "indoor"; }

TraceKind trace_kind_from_string(std::string_view s) {
  if (s == "outdoor") return TraceKind::outdoor;
  if (s == "indoor") return TraceKind::indoor;
  throw std::invalid_argument("unknown trace kind '" + std::string(s) + "'");
}

double spectral_efficiency(int mcs_index) {
  if (mcs_index < 0 || mcs_index > kMaxMcsIndex)
    throw std::out_of_range("MCS index " + std::to_string(mcs_index) + " not in table");
  return kSpectralEfficiency[std::size_t(mcs_index)];
}

double per_rb_rate(int mcs_index, double scs_hz, double overhead_fraction) {
  if (!(scs_hz > 0)) throw std::invalid_argument("subcarrier spacing must be > 0");
  const double slot_time = 1e-3 * 15e3 / scs_hz;
  return spectral_efficiency(mcs_index) * kSubcarriersPerBlock * kSymbolsPerSlot / slot_time *
         (1.0 - overhead_fraction);
}

int resource_blocks(double throughput, double rho) {
  if (!(rho > 0)) throw std::invalid_argument("per-RB rate must be > 0");
  if (throughput <= 0) return 0;
  // Guard against x*rho/rho landing one ulp below an integer.
  const double ratio = throughput / rho;
  return int(std::floor(ratio * (1.0 + 1e-12)));
}

SyntheticTrace synth_trace_with_distance(TraceKind kind, double duration_s, std::uint64_t seed) {
  if (!(duration_s > 0)) throw std::invalid_argument("trace duration must be > 0");
  const auto n = std::max<long>(1, std::lround(duration_s / kSampleInterval));

  const ChannelModel model = kind == TraceKind::outdoor
                                 ? ChannelModel{50.0, 3.2, 1.5, 0.9, 0.0}
                                 : ChannelModel{52.0, 3.5, 4.5, 0.7, 10.0};
  std::mt19937_64 rng(seed ^ (kind == TraceKind::outdoor ? 0x0u : 0x9e3779b97f4a7c15ull));
  std::normal_distribution<double> gauss(0.0, 1.0);

  SyntheticTrace out;
  out.samples.reserve(std::size_t(n));
  out.distance.reserve(std::size_t(n));
  double shadow = 0.0;
  for (long k = 0; k < n; ++k) {
    const double t = double(k) / 10.0;
    double distance = 0.0;
    double wall = 0.0;
    if (kind == TraceKind::outdoor) {
      // Circle of radius 6 m whose centre is 8 m from the access point; one lap per 30 s.
      constexpr double radius = 6.0, offset = 8.0, period = 30.0;
      const double phase = 2.0 * std::numbers::pi * t / period;
      distance = std::sqrt(offset * offset + radius * radius -
                           2.0 * offset * radius * std::cos(phase));
    } else {
      // L-shaped path: 11 m straight away from the AP, then a 10 m leg behind walls.
      const double half = duration_s / 2.0;
      double x, y;
      if (t <= half) {
        x = 1.0 + 11.0 * t / half;
        y = 0.0;
      } else {
        x = 12.0;
        y = 10.0 * (t - half) / half;
      }
      distance = std::hypot(x, y);
      wall = model.wall_penalty_db * std::min(1.0, y / 2.0);
    }
    shadow = model.shadowing_memory * shadow +
             std::sqrt(1.0 - model.shadowing_memory * model.shadowing_memory) *
                 model.shadowing_db * gauss(rng);
    const double snr = model.reference_snr_db -
                       10.0 * model.path_loss_exponent * std::log10(distance) - wall + shadow;
    const int mcs = snr_to_mcs(snr);
    // Transport-layer efficiency over the 100 available blocks.
    const double efficiency = std::clamp(0.92 + 0.04 * gauss(rng), 0.6, 1.0);
    const double throughput = std::round(per_rb_rate(mcs) * 100.0 * efficiency);
    out.samples.push_back({t, mcs, throughput});
    out.distance.push_back(distance);
  }
  return out;
}

Trace synth_trace(TraceKind kind, double duration_s, std::uint64_t seed) {
  return synth_trace_with_distance(kind, duration_s, seed).samples;
}

LinkDistribution link_window(const Trace& trace, int t, int width_slots, int samples_per_slot,
                             const Numerology& numerology) {
  if (t < 0 || width_slots <= 0 || samples_per_slot <= 0)
    throw std::out_of_range("invalid link window");
  const std::size_t begin = std::size_t(t) * std::size_t(samples_per_slot);
  const std::size_t end = begin + std::size_t(width_slots) * std::size_t(samples_per_slot);
  if (end > trace.size())
    throw std::out_of_range("link window [" + std::to_string(begin) + ", " +
                            std::to_string(end) + ") beyond trace of " +
                            std::to_string(trace.size()) + " samples");
  LinkDistribution d;
  d.samples.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    const double rho = per_rb_rate(trace[i].mcs_index, numerology.scs_hz, numerology.overhead);
    const int blocks = std::min(numerology.max_blocks, resource_blocks(trace[i].throughput, rho));
    d.samples.push_back({rho, blocks});
  }
  return d;
}

void write_trace_csv(std::ostream& os, const Trace& trace) {
  os << "t_s,mcs,throughput_bps\n";
  char buf[96];
  for (const auto& s : trace) {
    std::snprintf(buf, sizeof buf, "%.10g,%d,%.17g\n", s.timestamp, s.mcs_index, s.throughput);
    os << buf;
  }
}

Trace read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("trace csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t_s,mcs,throughput_bps")
    throw std::runtime_error("trace csv: unexpected header '" + line + "'");
  Trace trace;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::istringstream row(line);
    TraceSample s;
    char c1 = 0, c2 = 0;
    if (!(row >> s.timestamp >> c1 >> s.mcs_index >> c2 >> s.throughput) || c1 != ',' ||
        c2 != ',')
      throw std::runtime_error("trace csv: malformed line " + std::to_string(lineno));
    if (s.mcs_index < 0 || s.mcs_index > kMaxMcsIndex || s.throughput < 0)
      throw std::runtime_error("trace csv: out-of-range value on line " + std::to_string(lineno));
    trace.push_back(s);
  }
  return trace;
}

}  // namespace qic::radio
