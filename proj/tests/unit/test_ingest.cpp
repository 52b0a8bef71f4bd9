#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <unistd.h>

#include "dhcal/ingest.hpp"

using namespace dhcal;

namespace {

std::vector<RawRecord> constant_stream(int seconds, std::vector<double> ft,
                                       double pt1, double pt2,
                                       std::vector<double> v,
                                       double t0 = 0.0) {
  std::vector<RawRecord> out;
  for (int s = 0; s < seconds; ++s)
    out.push_back({t0 + s, ft, pt1, pt2, v});
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("dhcal_ingest_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const char* name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

}  // namespace

TEST_CASE("telescoping meters recover per-consumer draws") {
  RawRecord r{0.0, {10.0, 6.0, 3.0, 1.0}, 5.0, 1.5, {1, 1, 1, 1}};
  const auto q = consumer_flows(r);
  REQUIRE(q == std::vector<double>{4.0, 3.0, 2.0, 1.0});
  // The reconstruction telescopes, so the draws sum back to the trunk
  // meter exactly, not just approximately.
  double sum = 0.0;
  for (double x : q) sum += x;
  REQUIRE(sum == r.ft[0]);
  REQUIRE(root_dp(r) == 3.5);

  RawRecord one{0.0, {2.5}, 1.0, 0.0, {1.0}};
  REQUIRE(consumer_flows(one) == std::vector<double>{2.5});
  REQUIRE_THROWS_AS(consumer_flows(RawRecord{}), DataError);
}

TEST_CASE("telescoping sums stay exact under adversarial values") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> U(0.0, 30.0);
  for (int trial = 0; trial < 200; ++trial) {
    RawRecord r;
    r.ft = {U(rng), U(rng), U(rng), U(rng)};
    r.v.assign(4, 0.5);
    const auto q = consumer_flows(r);
    // Sum in meter order: (f1-f2)+(f2-f3)+(f3-f4)+f4 cancels exactly in
    // floating point because each term reuses the shared operand.
    double sum = 0.0;
    for (double x : q) sum += x;
    REQUIRE(sum == Catch::Approx(r.ft[0]).margin(1e-12));
  }
}

TEST_CASE("constant stream windows to constant samples") {
  const auto records =
      constant_stream(120, {10, 6, 3, 1}, 5.0, 1.5, {0.9, 0.8, 0.7, 0.6});
  std::vector<RejectedWindow> log;
  const auto d = windowed_samples(records, 40.0, 10.0, {}, &log);
  REQUIRE(d.samples.size() == 3);
  REQUIRE(log.empty());
  for (std::size_t i = 0; i < 3; ++i) {
    const Sample& s = d.samples[i];
    REQUIRE(s.t == 40.0 * i);
    REQUIRE(s.dp0 == Catch::Approx(3.5).margin(1e-12));
    for (std::size_t c = 0; c < 4; ++c)
      REQUIRE(s.v[c] == Catch::Approx(std::vector<double>{0.9, 0.8, 0.7, 0.6}[c])
                            .margin(1e-12));
    for (std::size_t c = 0; c < 4; ++c)
      REQUIRE(s.q[c] == Catch::Approx(std::vector<double>{4, 3, 2, 1}[c])
                            .margin(1e-12));
  }
}

TEST_CASE("discard interval suppresses settling transients") {
  // Flow steps at t=5 inside the first window; the discard covers it, so
  // the window mean sees only the settled value.
  auto records = constant_stream(120, {10, 6, 3, 1}, 5.0, 1.5, {1, 1, 1, 1});
  for (int s = 0; s < 5; ++s) records[s].ft = {20, 6, 3, 1};
  const auto d = windowed_samples(records, 40.0, 10.0);
  REQUIRE(d.samples.size() == 3);
  REQUIRE(d.samples[0].q[0] == Catch::Approx(4.0).margin(1e-12));

  // Same step at t=20, past the discard: now 20 of the 30 averaged scans
  // carry the settled value and 10 the stepped one.
  auto late = constant_stream(120, {10, 6, 3, 1}, 5.0, 1.5, {1, 1, 1, 1});
  for (int s = 10; s < 20; ++s) late[s].ft = {20, 6, 3, 1};
  const auto dl = windowed_samples(late, 40.0, 10.0);
  REQUIRE(dl.samples[0].q[0] ==
          Catch::Approx((10 * 14.0 + 20 * 4.0) / 30.0).margin(1e-12));
}

TEST_CASE("trailing partial window is dropped and appending is stable") {
  const auto base =
      constant_stream(100, {10, 6, 3, 1}, 5.0, 1.5, {1, 1, 1, 1});
  const auto d1 = windowed_samples(base, 40.0, 10.0);
  REQUIRE(d1.samples.size() == 2);  // 100 s covers two full 40 s windows

  auto longer = base;
  for (const auto& r : constant_stream(19, {9, 6, 3, 1}, 5.0, 1.5,
                                       {1, 1, 1, 1}, 100.0))
    longer.push_back(r);
  const auto d2 = windowed_samples(longer, 40.0, 10.0);
  REQUIRE(d2.samples.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    REQUIRE(d2.samples[i].t == d1.samples[i].t);
    REQUIRE(d2.samples[i].q == d1.samples[i].q);
    REQUIRE(d2.samples[i].dp0 == d1.samples[i].dp0);
  }
}

TEST_CASE("cadence holes invalidate exactly the window containing them") {
  auto records = constant_stream(120, {10, 6, 3, 1}, 5.0, 1.5, {1, 1, 1, 1});
  // Remove t=50..52 from the second window: a 4 s hole.
  records.erase(
      std::remove_if(records.begin(), records.end(),
                     [](const RawRecord& r) { return r.t >= 50 && r.t <= 52; }),
      records.end());
  std::vector<RejectedWindow> log;
  const auto d = windowed_samples(records, 40.0, 10.0, {}, &log);
  REQUIRE(d.samples.size() == 2);
  REQUIRE(d.samples[0].t == 0.0);
  REQUIRE(d.samples[1].t == 80.0);
  REQUIRE(log.size() == 1);
  REQUIRE(log[0].window_start == 40.0);
  REQUIRE_THAT(log[0].reason, Catch::Matchers::ContainsSubstring("gap"));

  // A 2 s spacing is still within tolerance.
  auto sparse = constant_stream(122, {10, 6, 3, 1}, 5.0, 1.5, {1, 1, 1, 1});
  sparse.erase(
      std::remove_if(sparse.begin(), sparse.end(),
                     [](const RawRecord& r) {
                       return static_cast<long>(r.t) % 2 == 1;
                     }),
      sparse.end());
  REQUIRE(windowed_samples(sparse, 40.0, 10.0).samples.size() == 3);
}

TEST_CASE("pump-off and deep-negative windows reject, shallow negatives clip") {
  // Middle window: pressures equal, so dp0 = 0.
  auto records = constant_stream(120, {10, 6, 3, 1}, 5.0, 1.5, {1, 1, 1, 1});
  for (auto& r : records)
    if (r.t >= 40 && r.t < 80) r.pt2 = 5.0;
  std::vector<RejectedWindow> log;
  auto d = windowed_samples(records, 40.0, 10.0, {}, &log);
  REQUIRE(d.samples.size() == 2);
  REQUIRE(log.size() == 1);
  REQUIRE_THAT(log[0].reason, Catch::Matchers::ContainsSubstring("pump"));

  // Consumer 2 reads -0.03 l/min: inside the noise floor, clips to zero.
  auto shallow =
      constant_stream(40, {10.0, 6.0, 6.03, 1.0}, 5.0, 1.5, {1, 1, 1, 1});
  d = windowed_samples(shallow, 40.0, 10.0);
  REQUIRE(d.samples.size() == 1);
  REQUIRE(d.samples[0].q[1] == 0.0);
  REQUIRE(d.samples[0].q[2] == Catch::Approx(5.03).margin(1e-12));

  // Consumer 2 reads -0.4 l/min: beyond the floor, the window rejects.
  log.clear();
  auto deep =
      constant_stream(40, {10.0, 6.0, 6.4, 1.0}, 5.0, 1.5, {1, 1, 1, 1});
  d = windowed_samples(deep, 40.0, 10.0, {}, &log);
  REQUIRE(d.samples.empty());
  REQUIRE(log.size() == 1);
  REQUIRE_THAT(log[0].reason, Catch::Matchers::ContainsSubstring("consumer 2"));
}

TEST_CASE("windowing validates its stream") {
  auto records = constant_stream(40, {10, 6, 3, 1}, 5.0, 1.5, {1, 1, 1, 1});
  auto bad = records;
  bad[5].t = bad[4].t;
  REQUIRE_THROWS_AS(windowed_samples(bad, 40.0, 10.0), DataError);
  bad = records;
  bad[5].v[0] = 1.2;
  REQUIRE_THROWS_AS(windowed_samples(bad, 40.0, 10.0), DataError);
  bad = records;
  bad[5].ft.pop_back();
  REQUIRE_THROWS_AS(windowed_samples(bad, 40.0, 10.0), DataError);
  REQUIRE_THROWS_AS(windowed_samples(records, 10.0, 10.0),
                    std::invalid_argument);
  REQUIRE(windowed_samples({}, 40.0, 10.0).samples.empty());
}

TEST_CASE("pre-window deadband filtering matches the channel filter") {
  auto records = constant_stream(4, {10, 6, 3, 1}, 5.0, 1.5, {0, 0, 0, 0});
  const std::vector<double> cmd{0.50, 0.51, 0.53, 0.50};
  for (int s = 0; s < 4; ++s) records[s].v[0] = cmd[s];
  const auto filtered = apply_deadband(records, 0.015);
  const auto expect = filter_setpoint_values(cmd, 0.015);
  for (int s = 0; s < 4; ++s) {
    REQUIRE(filtered[s].v[0] == expect[s]);
    REQUIRE(filtered[s].v[1] == 0.0);  // untouched channels stay put
    REQUIRE(filtered[s].ft == records[s].ft);
  }
  // Zero deadband is the identity on both overloads.
  REQUIRE(apply_deadband(records, 0.0)[2].v[0] == 0.53);
}

TEST_CASE("post-window deadband variant filters the sample sequence") {
  Dataset d;
  d.samples.push_back({0.0, 3.5, {0.50}, {1.0}});
  d.samples.push_back({40.0, 3.5, {0.51}, {1.0}});
  d.samples.push_back({80.0, 3.5, {0.53}, {1.0}});
  d.samples.push_back({120.0, 3.5, {0.50}, {1.0}});
  const auto f = apply_deadband(d, 0.015);
  REQUIRE(f.samples[0].v[0] == 0.50);
  REQUIRE(f.samples[1].v[0] == 0.50);
  REQUIRE(f.samples[2].v[0] == Catch::Approx(0.515).margin(1e-15));
  REQUIRE(f.samples[3].v[0] == Catch::Approx(0.515).margin(1e-15));
  for (const auto& s : f.samples) REQUIRE(s.q[0] == 1.0);
}

TEST_CASE("raw CSV loads, names missing columns, honors a column map") {
  std::istringstream ok(
      "t,ft1,ft2,pt1,pt2,v1,v2\n"
      "0,10,4,5.0,1.5,0.9,0.8\n"
      "1,10,4,5.0,1.5,0.9,0.8\n");
  const auto records = load_raw_csv(ok);
  REQUIRE(records.size() == 2);
  REQUIRE(records[0].ft == std::vector<double>{10.0, 4.0});
  REQUIRE(records[1].t == 1.0);
  REQUIRE(records[1].v[1] == 0.8);

  std::istringstream missing(
      "t,ft1,ft2,pt1,v1,v2\n"
      "0,10,4,5.0,0.9,0.8\n");
  try {
    load_raw_csv(missing);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    REQUIRE_THAT(e.what(), Catch::Matchers::ContainsSubstring("pt2"));
  }

  std::istringstream renamed(
      "time,flow1,flow2,supply,return,cmd1,cmd2\n"
      "0,10,4,5.0,1.5,0.9,0.8\n");
  ColumnMap map;
  map.t = "time";
  map.ft_prefix = "flow";
  map.pt1 = "supply";
  map.pt2 = "return";
  map.v_prefix = "cmd";
  const auto mapped = load_raw_csv(renamed, map);
  REQUIRE(mapped.size() == 1);
  REQUIRE(mapped[0].pt2 == 1.5);

  std::istringstream garbage(
      "t,ft1,pt1,pt2,v1\n"
      "0,10,5.0,oops,0.9\n");
  REQUIRE_THROWS_AS(load_raw_csv(garbage), DataError);
}

TEST_CASE("dataset CSV round-trips losslessly and deterministically") {
  TempDir dir;
  Dataset d;
  d.provenance = Provenance::synthetic;
  d.time_scale = 7.5;
  d.topology_ref = "lab4";
  d.samples.push_back(
      {0.0, 3.5000000000000004, {0.9, 0.123456789012345678}, {4.0, 1e-17}});
  d.samples.push_back({40.0, 1.0 / 3.0, {0.5, 0.5}, {2.0, 0.1}});

  const auto path = dir.file("d.csv");
  save_dataset(d, path);
  const Dataset back = load_dataset(path);
  REQUIRE(back.provenance == Provenance::synthetic);
  REQUIRE(back.time_scale == 7.5);
  REQUIRE(back.topology_ref == "lab4");
  REQUIRE(back.samples.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    REQUIRE(back.samples[i].t == d.samples[i].t);
    REQUIRE(back.samples[i].dp0 == d.samples[i].dp0);
    REQUIRE(back.samples[i].v == d.samples[i].v);
    REQUIRE(back.samples[i].q == d.samples[i].q);
  }

  const auto again = dir.file("d2.csv");
  save_dataset(back, again);
  REQUIRE(slurp(path) == slurp(again));
}

TEST_CASE("load_dataset distinguishes raw from processed schemas") {
  TempDir dir;
  // Raw file: 40 s of constant data becomes one sample.
  {
    std::ofstream out(dir.file("raw.csv"));
    out << "t,ft1,ft2,pt1,pt2,v1,v2\n";
    for (int s = 0; s < 40; ++s)
      out << s << ",10,4,5.0,1.5,0.9,0.8\n";
  }
  const auto d = load_dataset(dir.file("raw.csv"));
  REQUIRE(d.samples.size() == 1);
  REQUIRE(d.provenance == Provenance::exciting);  // raw defaults to lab data
  REQUIRE(d.samples[0].q[0] == Catch::Approx(6.0).margin(1e-12));
  REQUIRE(d.samples[0].q[1] == Catch::Approx(4.0).margin(1e-12));

  // Processed file with a metadata comment.
  {
    std::ofstream out(dir.file("proc.csv"));
    out << "# provenance=realistic time_scale=2\n";
    out << "t,dp0,v1,q1\n0,3.5,0.9,4\n40,3.4,0.8,3.5\n";
  }
  const auto p = load_dataset(dir.file("proc.csv"));
  REQUIRE(p.provenance == Provenance::realistic);
  REQUIRE(p.time_scale == 2.0);
  REQUIRE(p.samples.size() == 2);
  REQUIRE(p.samples[1].dp0 == 3.4);

  // Processed file with out-of-order v/q headers is named in the error.
  {
    std::ofstream out(dir.file("badcols.csv"));
    out << "t,dp0,q1,v1\n0,3.5,4,0.9\n";
  }
  REQUIRE_THROWS_AS(load_dataset(dir.file("badcols.csv")), DataError);

  REQUIRE_THROWS_AS(load_dataset(dir.file("absent.csv")), DataError);
}

TEST_CASE("raw CSV round-trip preserves scans byte for byte") {
  TempDir dir;
  std::vector<RawRecord> records;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int s = 0; s < 50; ++s) {
    RawRecord r;
    r.t = s;
    r.ft = {10 * U(rng), 5 * U(rng), 2 * U(rng)};
    r.pt1 = 5 * U(rng);
    r.pt2 = U(rng);
    r.v = {U(rng), U(rng), U(rng)};
    records.push_back(r);
  }
  const auto a = dir.file("a.csv"), b = dir.file("b.csv");
  save_raw_csv(records, a);
  const auto back = load_raw_csv(a);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    REQUIRE(back[i].t == records[i].t);
    REQUIRE(back[i].ft == records[i].ft);
    REQUIRE(back[i].pt1 == records[i].pt1);
    REQUIRE(back[i].pt2 == records[i].pt2);
    REQUIRE(back[i].v == records[i].v);
  }
  save_raw_csv(back, b);
  REQUIRE(slurp(a) == slurp(b));
}

TEST_CASE("reject log writes one line per rejected window") {
  TempDir dir;
  std::vector<RejectedWindow> log{{40.0, "pump off"}, {120.0, "gap"}};
  save_reject_log(log, dir.file("rej.log"));
  std::ifstream in(dir.file("rej.log"));
  std::string l1, l2;
  std::getline(in, l1);
  std::getline(in, l2);
  REQUIRE(l1 == "40 pump off");
  REQUIRE(l2 == "120 gap");
}
