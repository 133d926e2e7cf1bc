#include <doctest.h>

#include "approx.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "qic/radio.hpp"

using namespace qic::radio;

namespace {

// (modulation order, target code rate x 1024) of the 64-QAM MCS table.
constexpr int kTable[29][2] = {
    {2, 120}, {2, 157}, {2, 193}, {2, 251}, {2, 308}, {2, 379}, {2, 449}, {2, 526},
    {2, 602}, {2, 679}, {4, 340}, {4, 378}, {4, 434}, {4, 490}, {4, 553}, {4, 616},
    {4, 658}, {6, 438}, {6, 466}, {6, 517}, {6, 567}, {6, 616}, {6, 666}, {6, 719},
    {6, 772}, {6, 822}, {6, 873}, {6, 910}, {6, 948}};

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

double variance(const std::vector<double>& x) {
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
  double s = 0;
  for (double v : x) s += (v - m) * (v - m);
  return s / double(x.size());
}

}  // namespace

TEST_CASE("spectral efficiency equals Qm * R / 1024 to table precision") {
  for (int i = 0; i <= kMaxMcsIndex; ++i) {
    CAPTURE(i);
    const double se = kTable[i][0] * kTable[i][1] / 1024.0;
    // The table prints four decimals.
    CHECK(std::abs(spectral_efficiency(i) - se) <= 5e-5);
  }
  CHECK_THROWS_AS(spectral_efficiency(-1), std::out_of_range);
  CHECK_THROWS_AS(spectral_efficiency(29), std::out_of_range);
}

TEST_CASE("per-RB rate is 168 resource elements per 1 ms slot") {
  for (int i = 0; i <= kMaxMcsIndex; ++i)
    CHECK(per_rb_rate(i) == rel(spectral_efficiency(i) * 168e3).epsilon(1e-12));
  // Top 64-QAM entry, SE 5.5547.
  CHECK(per_rb_rate(28) == rel(933.19e3).epsilon(1e-4));
  CHECK(per_rb_rate(28, 30e3) == rel(2 * per_rb_rate(28)).epsilon(1e-12));
  CHECK(per_rb_rate(28, 15e3, 0.25) == rel(0.75 * per_rb_rate(28)).epsilon(1e-12));
  for (int i = 1; i <= kMaxMcsIndex; ++i) CHECK(per_rb_rate(0) < per_rb_rate(i));
}

TEST_CASE("per-RB rate is increasing in spectral efficiency") {
  for (int i = 0; i <= kMaxMcsIndex; ++i)
    for (int j = 0; j <= kMaxMcsIndex; ++j)
      if (spectral_efficiency(i) < spectral_efficiency(j)) CHECK(per_rb_rate(i) < per_rb_rate(j));
}

TEST_CASE("resource blocks is floor of throughput over rho") {
  CHECK(resource_blocks(1000.0, 100.0) == 10);
  CHECK(resource_blocks(1099.0, 100.0) == 10);
  CHECK(resource_blocks(0.0, 100.0) == 0);
  CHECK(resource_blocks(3 * per_rb_rate(7), per_rb_rate(7)) == 3);
  CHECK_THROWS_AS(resource_blocks(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("outdoor synthetic trace statistics") {
  const auto st = synth_trace_with_distance(TraceKind::outdoor, 150.0, 42);
  REQUIRE(st.samples.size() == 1500);
  std::vector<double> mcs, thr;
  for (const auto& s : st.samples) {
    CHECK(s.throughput >= 0);
    CHECK(s.mcs_index >= 0);
    CHECK(s.mcs_index <= kMaxMcsIndex);
    mcs.push_back(s.mcs_index);
    thr.push_back(s.throughput);
  }
  CHECK(pearson(mcs, thr) > 0.7);
  CHECK(pearson(st.distance, thr) < -0.5);
  CHECK(st.samples[1].timestamp == rel(0.1));
}

TEST_CASE("indoor MCS varies more than outdoor") {
  for (std::uint64_t seed : {1ull, 42ull, 7ull}) {
    std::vector<double> in, out;
    for (const auto& s : synth_trace(TraceKind::indoor, 150, seed)) in.push_back(s.mcs_index);
    for (const auto& s : synth_trace(TraceKind::outdoor, 150, seed)) out.push_back(s.mcs_index);
    CHECK(variance(in) > variance(out));
    const auto st = synth_trace_with_distance(TraceKind::indoor, 150, seed);
    std::vector<double> thr;
    for (const auto& s : st.samples) thr.push_back(s.throughput);
    CHECK(pearson(st.distance, thr) < -0.5);
  }
}

TEST_CASE("synthetic traces are seeded") {
  CHECK(synth_trace(TraceKind::outdoor, 20, 3) == synth_trace(TraceKind::outdoor, 20, 3));
  CHECK_FALSE(synth_trace(TraceKind::outdoor, 20, 3) == synth_trace(TraceKind::outdoor, 20, 4));
  CHECK_THROWS_AS(synth_trace(TraceKind::outdoor, 0, 1), std::invalid_argument);
}

TEST_CASE("trace csv round trip") {
  const auto tr = synth_trace(TraceKind::indoor, 10, 5);
  std::stringstream ss;
  write_trace_csv(ss, tr);
  CHECK(ss.str().rfind("t_s,mcs,throughput_bps\n", 0) == 0);
  const auto back = read_trace_csv(ss);
  REQUIRE(back.size() == tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i) {
    CHECK(back[i].mcs_index == tr[i].mcs_index);
    CHECK(back[i].throughput == tr[i].throughput);
    CHECK(std::abs(back[i].timestamp - tr[i].timestamp) <= 1e-9);  // written with 10 digits
  }
}

TEST_CASE("malformed trace csv is rejected") {
  std::istringstream bad_header("time,mcs,thr\n0,1,2\n");
  CHECK_THROWS(read_trace_csv(bad_header));
  std::istringstream bad_mcs("t_s,mcs,throughput_bps\n0,40,100\n");
  CHECK_THROWS(read_trace_csv(bad_mcs));
  std::istringstream bad_row("t_s,mcs,throughput_bps\n0;1;100\n");
  CHECK_THROWS(read_trace_csv(bad_row));
}

TEST_CASE("link window converts each raw sample") {
  Trace tr;
  for (int i = 0; i < 20; ++i) tr.push_back({0.1 * i, i % 29, 1e6 + 1e5 * i});
  const auto w = link_window(tr, 1, 1, 10);
  REQUIRE(w.samples.size() == 10);
  for (int k = 0; k < 10; ++k) {
    const auto& s = tr[std::size_t(10 + k)];
    CHECK(w.samples[std::size_t(k)].rho == per_rb_rate(s.mcs_index));
    CHECK(w.samples[std::size_t(k)].blocks ==
          std::min(100, int(std::floor(s.throughput / per_rb_rate(s.mcs_index)))));
  }
  CHECK_THROWS_AS(link_window(tr, 2, 1, 10), std::out_of_range);
}
