#pragma once

#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

namespace qic::radio {

/// Link-state sampling period of the traces, seconds.
inline constexpr double kSampleInterval = 0.1;

struct TraceSample {
  double timestamp = 0.0;  // seconds
  int mcs_index = 0;
  double throughput = 0.0;  // bits/second

  bool operator==(const TraceSample&) const = default;
};

using Trace = std::vector<TraceSample>;

struct LinkSample {
  double rho = 0.0;  // per-resource-block bit rate, bits/second
  int blocks = 0;

  bool operator==(const LinkSample&) const = default;
};

struct LinkDistribution {
  std::vector<LinkSample> samples;
};

enum class TraceKind { outdoor, indoor };

std::string_view to_string(TraceKind k);
TraceKind trace_kind_from_string(std::string_view s);

/// 5G NR numerology used to turn an MCS index into a per-RB rate.
struct Numerology {
  double scs_hz = 15e3;
  double overhead = 0.0;
  int max_blocks = 100;  // 1200 data carriers / 12
};

inline constexpr int kMaxMcsIndex = 28;

/// Spectral efficiency (bits per resource element) of the 64-QAM MCS table.
double spectral_efficiency(int mcs_index);

/// bits/second carried by one resource block (12 subcarriers x 14 symbols per slot).
double per_rb_rate(int mcs_index, double scs_hz = 15e3, double overhead_fraction = 0.0);

/// floor(throughput / rho).
int resource_blocks(double throughput, double rho);

struct SyntheticTrace {
  Trace samples;
  std::vector<double> distance;  // latent transmitter-receiver distance, metres
};

SyntheticTrace synth_trace_with_distance(TraceKind kind, double duration_s, std::uint64_t seed);
Trace synth_trace(TraceKind kind, double duration_s, std::uint64_t seed);

/// (rho, B) pairs for all raw samples in slots [t, t + width).
LinkDistribution link_window(const Trace& trace, int t, int width_slots, int samples_per_slot,
                             const Numerology& numerology = {});

void write_trace_csv(std::ostream& os, const Trace& trace);
Trace read_trace_csv(std::istream& is);

}  // namespace qic::radio
