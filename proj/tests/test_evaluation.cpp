#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "crane/baselines.hpp"
#include "crane/evaluation.hpp"
#include "crane/rng.hpp"

using namespace crane;

TEST_CASE("metrics hand values") {
  const std::vector<double> est{12.0, 19.0};
  const std::vector<double> truth{10.0, 20.0};
  const Metrics m = metrics(est, truth);
  CHECK(m.aae == doctest::Approx(1.5));
  CHECK(m.are == doctest::Approx(0.125));
  CHECK(m.are_count == 2);

  const Metrics perfect = metrics(truth, truth);
  CHECK(perfect.aae == 0.0);
  CHECK(perfect.are == 0.0);
}

TEST_CASE("metrics skips zero-truth entries in the relative error") {
  const std::vector<double> est{5.0, 3.0};
  const std::vector<double> truth{0.0, 2.0};
  const Metrics m = metrics(est, truth);
  CHECK(m.aae == doctest::Approx(3.0));
  CHECK(m.are == doctest::Approx(0.5));
  CHECK(m.are_count == 1);

  const std::vector<double> zeros{0.0, 0.0};
  const Metrics z = metrics(est, zeros);
  CHECK(z.are == 0.0);
  CHECK(z.are_count == 0);
}

TEST_CASE("metrics validates its input") {
  const std::vector<double> a{1.0};
  const std::vector<double> empty;
  CHECK_THROWS_AS(metrics(empty, empty), std::invalid_argument);
  CHECK_THROWS_AS(metrics(a, empty), std::invalid_argument);
}

TEST_CASE("metrics matches a brute-force recomputation") {
  Xoshiro256ss rng(401);
  std::vector<double> est(5000), truth(5000);
  for (auto& x : est) x = rng.uniform(0.0, 100.0);
  for (auto& x : truth) x = rng.below(10) == 0 ? 0.0 : rng.uniform(1.0, 100.0);
  const Metrics m = metrics(est, truth);
  double aae = 0.0, are = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    aae += std::abs(est[i] - truth[i]);
    if (truth[i] != 0.0) {
      are += std::abs(est[i] - truth[i]) / truth[i];
      ++n;
    }
  }
  CHECK(m.aae == doctest::Approx(aae / 5000.0).epsilon(1e-12));
  CHECK(m.are == doctest::Approx(are / static_cast<double>(n)).epsilon(1e-12));
  CHECK(m.are_count == n);
}

TEST_CASE("stream digest is order- and content-sensitive") {
  std::vector<EdgeUpdate> s{{1, 2, 1.0}, {3, 4, 2.0}, {5, 6, 3.0}};
  const std::uint64_t d0 = stream_digest64(s);
  CHECK(stream_digest64(s) == d0);

  std::vector<EdgeUpdate> swapped{s[1], s[0], s[2]};
  CHECK(stream_digest64(swapped) != d0);

  std::vector<EdgeUpdate> reweighted = s;
  reweighted[2].weight = 3.0000001;
  CHECK(stream_digest64(reweighted) != d0);

  CHECK(stream_digest64({}) == 1469598103934665603ull);  // FNV offset basis
}

TEST_CASE("collect_distinct keeps first-appearance order with exact sums") {
  const std::vector<EdgeUpdate> s{{1, 2, 3.0}, {3, 4, 1.0}, {1, 2, 0.5}};
  std::vector<EdgeKey> keys;
  std::vector<double> truths;
  collect_distinct(s, keys, truths);
  REQUIRE(keys.size() == 2);
  CHECK(keys[0] == EdgeKey{1, 2});
  CHECK(keys[1] == EdgeKey{3, 4});
  CHECK(truths[0] == 3.5);
  CHECK(truths[1] == 1.0);
}

TEST_CASE("zipf_edge_stream shape, determinism, and skew") {
  const auto s1 = zipf_edge_stream(5000, 1.2, 50, 1 << 16, 7);
  const auto s2 = zipf_edge_stream(5000, 1.2, 50, 1 << 16, 7);
  REQUIRE(s1.size() == 5000);
  for (std::size_t i = 0; i < s1.size(); ++i) {
    CHECK(s1[i].origin == s2[i].origin);
    CHECK(s1[i].destination == s2[i].destination);
    REQUIRE(s1[i].weight == 1.0);
  }
  std::map<std::uint64_t, std::size_t> counts;
  for (const auto& e : s1) ++counts[edge_key64(e.origin, e.destination)];
  CHECK(counts.size() == 50);
  std::size_t cmax = 0, cmin = s1.size();
  for (const auto& [k, c] : counts) {
    cmax = std::max(cmax, c);
    cmin = std::min(cmin, c);
  }
  CHECK(cmax >= 10 * cmin);  // zipf(1.2) over 50 ranks is strongly skewed
}

TEST_CASE("zipf_edge_stream validates sizes") {
  CHECK_THROWS_AS(zipf_edge_stream(0, 1.1, 10, 100, 1), std::invalid_argument);
  CHECK_THROWS_AS(zipf_edge_stream(10, 1.1, 0, 100, 1), std::invalid_argument);
  CHECK_THROWS_AS(zipf_edge_stream(10, 1.1, 10, 1, 1), std::invalid_argument);
  // 2x2 id grid cannot host 10 distinct edges
  CHECK_THROWS_AS(zipf_edge_stream(10, 1.1, 10, 2, 1), std::invalid_argument);
}

TEST_CASE("run_benchmark reports every method under the shared budget") {
  const CraneModel model = CraneModel::init(4, 4.0, 4.0, 1e-6, 31);
  const auto stream = zipf_edge_stream(2000, 1.1, 200, 1 << 20, 5);
  BenchmarkOptions opt;
  opt.methods = {"crane", "tcm", "cms", "oracle"};
  const BenchmarkReport rep = run_benchmark(model, stream, opt);

  REQUIRE(rep.methods.size() == 4);
  CHECK(rep.stream_length == 2000);
  // zipf draws from a 200-edge pool; deep-tail edges may never be sampled
  std::vector<EdgeKey> keys;
  std::vector<double> truths;
  collect_distinct(stream, keys, truths);
  CHECK(rep.distinct_edges == keys.size());
  CHECK(rep.distinct_edges <= 200);
  CHECK(rep.stream_digest == stream_digest64(stream));
  CHECK(rep.n_layers == 4);

  const auto& crane_row = rep.methods[0];
  CHECK(crane_row.name == "crane");
  CHECK(crane_row.bytes_used == 65536);
  CHECK(crane_row.note.find("active layers") != std::string::npos);

  CHECK(rep.methods[1].bytes_used == 65536);       // tcm 128x128
  CHECK(rep.methods[2].bytes_used == 3u * 5461 * 4);  // cms 3x5461
  for (const auto& m : rep.methods) {
    REQUIRE(m.bytes_used <= opt.budget);
    REQUIRE(std::isfinite(m.err.aae));
    REQUIRE(std::isfinite(m.err.are));
    REQUIRE(m.store_ops_per_sec > 0.0);
    REQUIRE(m.query_ops_per_sec > 0.0);
  }

  const auto& oracle_row = rep.methods[3];
  CHECK(oracle_row.err.aae == 0.0);
  CHECK(oracle_row.err.are == 0.0);
  CHECK(oracle_row.bytes_used == 0);
}

TEST_CASE("run_benchmark caps the sketch to the budgeted layer count") {
  const CraneModel model = CraneModel::init(4, 4.0, 4.0, 1e-6, 31);
  const auto stream = zipf_edge_stream(500, 1.1, 50, 1 << 20, 6);
  BenchmarkOptions opt;
  opt.methods = {"crane"};
  opt.budget = 16384;
  const BenchmarkReport one = run_benchmark(model, stream, opt);
  CHECK(one.n_layers == 1);
  CHECK(one.methods[0].bytes_used == 16384);

  opt.budget = 40000;  // room for two layers, not three
  const BenchmarkReport two = run_benchmark(model, stream, opt);
  CHECK(two.n_layers == 2);
  CHECK(two.methods[0].bytes_used == 32768);
}

TEST_CASE("run_benchmark rejects bad parameters") {
  const CraneModel model = CraneModel::init(2, 4.0, 4.0, 1e-6, 31);
  const auto stream = zipf_edge_stream(100, 1.1, 20, 1 << 20, 7);
  BenchmarkOptions opt;

  opt.methods = {"bogus"};
  CHECK_THROWS_AS(run_benchmark(model, stream, opt), std::invalid_argument);

  opt.methods = {};
  CHECK_THROWS_AS(run_benchmark(model, stream, opt), std::invalid_argument);

  opt.methods = {"crane"};
  opt.budget = 100;  // below one layer
  CHECK_THROWS_AS(run_benchmark(model, stream, opt), std::invalid_argument);

  opt.methods = {"tcm"};
  opt.budget = 3;
  CHECK_THROWS_AS(run_benchmark(model, stream, opt), std::invalid_argument);

  opt.methods = {"cms"};
  opt.budget = 8;
  CHECK_THROWS_AS(run_benchmark(model, stream, opt), std::invalid_argument);

  opt.methods = {"tcm"};
  opt.budget = 65536;
  CHECK_THROWS_AS(run_benchmark(model, {}, opt), std::invalid_argument);

  opt.methods = {"cms"};
  const BenchmarkReport rep = run_benchmark(model, stream, opt);
  CHECK(rep.methods.size() == 1);
  CHECK(rep.methods[0].name == "cms");
}

TEST_CASE("report writers emit the documented layout") {
  const CraneModel model = CraneModel::init(2, 4.0, 4.0, 1e-6, 32);
  const auto stream = zipf_edge_stream(300, 1.1, 30, 1 << 20, 8);
  BenchmarkOptions opt;
  opt.methods = {"crane", "oracle"};
  opt.budget = 32768;
  const BenchmarkReport rep = run_benchmark(model, stream, opt);

  std::ostringstream tsv;
  write_report_tsv(rep, tsv);
  std::istringstream lines(tsv.str());
  std::string l0, l1, l2, l3, extra;
  REQUIRE(std::getline(lines, l0));
  REQUIRE(std::getline(lines, l1));
  REQUIRE(std::getline(lines, l2));
  REQUIRE(std::getline(lines, l3));
  CHECK(!std::getline(lines, extra));
  CHECK(l0.rfind("# seed=", 0) == 0);
  CHECK(l0.find("budget=32768") != std::string::npos);
  CHECK(l1 == "method\taae\tare\tbytes_used\tstore_ops_per_sec\tquery_ops_per_sec");
  CHECK(l2.rfind("crane\t", 0) == 0);
  CHECK(l3.rfind("oracle\t", 0) == 0);

  std::ostringstream text;
  write_report_text(rep, text);
  const std::string t = text.str();
  CHECK(t.find("equal-memory benchmark report") != std::string::npos);
  CHECK(t.find("byte accounting:") != std::string::npos);
  CHECK(t.find("method: crane") != std::string::npos);
  CHECK(t.find("method: oracle") != std::string::npos);
  CHECK(t.find("bytes used: 32768") != std::string::npos);
}

TEST_CASE("crane_stream_are runs in both carry modes") {
  const CraneModel model = CraneModel::init(2, 4.0, 4.0, 1e-6, 33);
  const auto stream = zipf_edge_stream(400, 1.1, 40, 1 << 20, 9);
  const double mb = crane_stream_are(model, stream, 4, CarryMode::minibatch);
  const double sq = crane_stream_are(model, stream, 4, CarryMode::sequential);
  CHECK(std::isfinite(mb));
  CHECK(std::isfinite(sq));
  CHECK(mb >= 0.0);
  CHECK(sq >= 0.0);
}

TEST_CASE("expansion_study grows monotonically with total weight") {
  const CraneModel model = CraneModel::init(4, 4.0, 4.0, 1e-6, 34);
  const std::vector<double> sizes{1e2, 1e3, 1e4, 1e5};
  const auto pts = expansion_study(model, sizes, 3, 400, 4);
  REQUIRE(pts.size() == 4);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(pts[i].total_weight == sizes[i]);
    REQUIRE(pts[i].layers >= 1);
    REQUIRE(pts[i].layers <= 4);
    if (i) REQUIRE(pts[i].layers >= pts[i - 1].layers);
  }
  CHECK(pts.back().layers > pts.front().layers);

  const std::vector<double> tiny{1e-3};
  CHECK(expansion_study(model, tiny, 3, 100, 4)[0].layers == 1);

  CHECK_THROWS_AS(expansion_study(model, {}, 1), std::invalid_argument);
  const std::vector<double> bad1{0.0, 1.0};
  CHECK_THROWS_AS(expansion_study(model, bad1, 1), std::invalid_argument);
  const std::vector<double> bad2{5.0, 5.0};
  CHECK_THROWS_AS(expansion_study(model, bad2, 1), std::invalid_argument);
}
