#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <stdexcept>
#include <vector>

#include "crane/baselines.hpp"
#include "crane/rng.hpp"

using namespace crane;

TEST_CASE("edge_key64 packs origin high, destination low") {
  CHECK(edge_key64(0, 0) == 0);
  CHECK(edge_key64(1, 2) == ((1ull << 32) | 2ull));
  CHECK(edge_key64(0xFFFFFFFFu, 0xFFFFFFFFu) == 0xFFFFFFFFFFFFFFFFull);
  CHECK(edge_key64(1, 2) != edge_key64(2, 1));
}

TEST_CASE("exact counter accumulates weighted repeats") {
  ExactCounter c;
  c.insert({1, 2, 1.5});
  c.insert({1, 2, 2.0});
  c.insert({2, 1, 4.0});
  CHECK(c.query({1, 2}) == 3.5);
  CHECK(c.query({2, 1}) == 4.0);
  CHECK(c.query({3, 3}) == 0.0);
  CHECK(c.distinct_edges() == 2);
}

TEST_CASE("exact node_flux sums per role") {
  ExactCounter c;
  c.insert({1, 2, 3.0});
  c.insert({1, 3, 2.0});
  c.insert({4, 1, 7.0});
  const std::vector<EdgeKey> inc{{1, 2}, {1, 3}, {4, 1}};
  CHECK(c.node_flux(1, inc, FluxDirection::out) == 5.0);
  CHECK(c.node_flux(1, inc, FluxDirection::in) == 7.0);
  CHECK(c.node_flux(2, inc, FluxDirection::out) == 0.0);
}

TEST_CASE("bucket hash: modulo hook and seeded multiply-shift") {
  const BucketHash mod = BucketHash::modulo(10);
  CHECK(mod(0) == 0);
  CHECK(mod(7) == 7);
  CHECK(mod(13) == 3);
  CHECK(mod(100) == 0);

  const BucketHash h = BucketHash::seeded(99, 128);
  CHECK((h.a & 1ull) == 1ull);  // odd multiplier
  Xoshiro256ss rng(1);
  for (int i = 0; i < 1000; ++i)
    REQUIRE(h(static_cast<std::uint32_t>(rng.next())) < 128);

  const BucketHash h2 = BucketHash::seeded(99, 128);
  CHECK(h2.a == h.a);
  CHECK(h2.b == h.b);
}

TEST_CASE("tcm equal-memory construction at 64KB gives a 128x128 grid") {
  const TcmSketch t(65536, 1);
  CHECK(t.m() == 128);
  CHECK(t.bytes_used() == 65536);
  CHECK_THROWS_AS(TcmSketch(3, 1), std::invalid_argument);
  // non-square budgets floor down
  CHECK(TcmSketch(65535, 1).m() == 127);
}

TEST_CASE("tcm cell behavior under the plain modulo hook") {
  TcmSketch t(4, BucketHash::modulo(4));
  t.insert({1, 2, 3.0});
  t.insert({5, 2, 4.0});   // 5 % 4 = 1: collides with (1,2)
  t.insert({2, 3, 10.0});
  CHECK(t.query({1, 2}) == 7.0);
  CHECK(t.query({5, 2}) == 7.0);
  CHECK(t.query({5, 6}) == 7.0);  // (1, 2) cell again
  CHECK(t.query({2, 3}) == 10.0);
  CHECK(t.query({0, 0}) == 0.0);
}

TEST_CASE("tcm node_flux sums a full row or column") {
  TcmSketch t(4, BucketHash::modulo(4));
  t.insert({1, 0, 1.0});
  t.insert({1, 1, 2.0});
  t.insert({1, 2, 4.0});
  t.insert({2, 1, 8.0});
  CHECK(t.node_flux(1, FluxDirection::out) == 7.0);
  CHECK(t.node_flux(1, FluxDirection::in) == 10.0);  // (1,1) and (2,1)
  CHECK(t.node_flux(3, FluxDirection::out) == 0.0);
}

TEST_CASE("tcm never underestimates") {
  TcmSketch t(400, 7);
  ExactCounter exact;
  Xoshiro256ss rng(2);
  std::vector<EdgeUpdate> stream(3000);
  for (auto& e : stream) {
    e.origin = static_cast<std::uint32_t>(rng.below(200));
    e.destination = static_cast<std::uint32_t>(rng.below(200));
    e.weight = rng.uniform(0.0, 2.0);
    t.insert(e);
    exact.insert(e);
  }
  for (const auto& e : stream) {
    const EdgeKey k{e.origin, e.destination};
    REQUIRE(t.query(k) >= exact.query(k) * (1.0 - 1e-12));
  }
}

TEST_CASE("cms equal-memory construction at 64KB") {
  const CountMinSketch c(65536, 1);
  CHECK(c.depth() == 3);
  CHECK(c.width() == 5461);
  CHECK(c.bytes_used() == 3ull * 5461 * 4);
  CHECK(c.bytes_used() <= 65536);
  CHECK_THROWS_AS(CountMinSketch(8, 1), std::invalid_argument);
  CHECK_THROWS_AS(CountMinSketch(0u, 3u, 1ull), std::invalid_argument);
}

TEST_CASE("cms takes the minimum across rows and never underestimates") {
  CountMinSketch c(240, 5);  // depth 3, width 20: collisions guaranteed
  ExactCounter exact;
  Xoshiro256ss rng(3);
  std::vector<EdgeUpdate> stream(2000);
  for (auto& e : stream) {
    e.origin = static_cast<std::uint32_t>(rng.below(60));
    e.destination = static_cast<std::uint32_t>(rng.below(60));
    e.weight = rng.uniform(0.0, 2.0);
    c.insert(e);
    exact.insert(e);
  }
  double overshoot = 0.0;
  for (const auto& e : stream) {
    const EdgeKey k{e.origin, e.destination};
    REQUIRE(c.query(k) >= exact.query(k) * (1.0 - 1e-12));
    overshoot += c.query(k) - exact.query(k);
  }
  CHECK(overshoot > 0.0);  // tiny table must actually collide
}

TEST_CASE("cms width constructor is deterministic per seed") {
  CountMinSketch a(std::uint32_t{100}, 3, 42), b(std::uint32_t{100}, 3, 42);
  a.insert({7, 9, 2.0});
  b.insert({7, 9, 2.0});
  CHECK(a.query({7, 9}) == b.query({7, 9}));
  CHECK(a.width() == 100);
  CHECK(a.depth() == 3);
}
