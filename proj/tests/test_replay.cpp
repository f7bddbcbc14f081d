#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <vector>

#include "gridcl/replay.hpp"
#include "gridcl/rng.hpp"

using namespace gridcl;

TEST_CASE("quota splits capacity with remainder to low labels") {
  CHECK(quota(363, 3) == std::vector<int>{121, 121, 121});
  CHECK(quota(363, 5) == std::vector<int>{73, 73, 73, 72, 72});
  CHECK(quota(363, 11) == std::vector<int>{33, 33, 33, 33, 33, 33, 33, 33, 33, 33, 33});
  CHECK(quota(10, 4) == std::vector<int>{3, 3, 2, 2});
  CHECK(quota(2, 5) == std::vector<int>{1, 1, 0, 0, 0});
  CHECK_THROWS_AS(quota(10, 0), std::invalid_argument);

  // conservation and fairness across a sweep
  for (int cap = 1; cap <= 400; cap += 7)
    for (int k = 1; k <= 11; ++k) {
      auto q = quota(cap, k);
      CHECK(std::accumulate(q.begin(), q.end(), 0) == cap);
      CHECK(*std::max_element(q.begin(), q.end()) -
                *std::min_element(q.begin(), q.end()) <=
            1);
      CHECK(std::is_sorted(q.rbegin(), q.rend()));
    }
}

TEST_CASE("availability-capped quota redistributes shortfalls") {
  // plenty everywhere: same as plain quota
  CHECK(quota_with_availability(10, {100, 100, 100, 100}) == quota(10, 4));
  // one starved class hands its slots onward, ascending round-robin
  CHECK(quota_with_availability(10, {1, 100, 100, 100}) == std::vector<int>{1, 4, 3, 2});
  // capacity above total availability: take everything
  CHECK(quota_with_availability(50, {3, 4, 5}) == std::vector<int>{3, 4, 5});
  // cascading caps
  auto q = quota_with_availability(363, {10, 10, 500, 500, 500});
  CHECK(q[0] == 10);
  CHECK(q[1] == 10);
  CHECK(std::accumulate(q.begin(), q.end(), 0) == 363);
  for (std::size_t i = 0; i < q.size(); ++i) CHECK(q[i] <= std::vector<int>{10, 10, 500, 500, 500}[i]);

  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    int cap = 1 + static_cast<int>(rng.below(400));
    std::vector<int> avail(1 + rng.below(11));
    int total = 0;
    for (auto& a : avail) {
      a = static_cast<int>(rng.below(120));
      total += a;
    }
    auto out = quota_with_availability(cap, avail);
    int sum = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i] >= 0);
      CHECK(out[i] <= avail[i]);
      sum += out[i];
    }
    CHECK(sum == std::min(cap, total));
  }
}

namespace {

// brute-force oracle: full sort under (distance, stream_index, id), take the
// floor(rho*k) head and the k - floor(rho*k) tail
std::vector<int> hybrid_oracle(std::vector<Candidate> cs, int k, double rho) {
  std::sort(cs.begin(), cs.end(), [](const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.stream_index != b.stream_index) return a.stream_index < b.stream_index;
    return a.id < b.id;
  });
  if (static_cast<int>(cs.size()) <= k) {
    std::vector<int> all;
    for (const auto& c : cs) all.push_back(c.id);
    return all;
  }
  int near = static_cast<int>(rho * k);
  std::vector<int> out;
  for (int i = 0; i < near; ++i) out.push_back(cs[i].id);
  for (int i = static_cast<int>(cs.size()) - (k - near); i < static_cast<int>(cs.size()); ++i)
    out.push_back(cs[i].id);
  return out;
}

}  // namespace

TEST_CASE("hybrid selection matches the full-sort oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    int n = 1 + static_cast<int>(rng.below(60));
    int k = 1 + static_cast<int>(rng.below(40));
    double rho = trial % 3 == 0 ? 0.45 : (trial % 3 == 1 ? 0.50 : rng.uniform());
    std::vector<Candidate> cs(n);
    for (int i = 0; i < n; ++i) {
      cs[i].id = i;
      // coarse quantization so distance ties are common
      cs[i].distance = static_cast<float>(rng.below(8)) * 0.5f;
      cs[i].stream_index = static_cast<int>(rng.below(10));
    }
    auto expect = hybrid_oracle(cs, k, rho);
    auto got = select_hybrid(cs, k, rho);
    std::sort(expect.begin(), expect.end());
    auto sorted = got.chosen;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == expect);
    CHECK(got.shortfall == std::max(0, k - n));
    // no duplicates
    CHECK(std::set<int>(sorted.begin(), sorted.end()).size() == sorted.size());
  }
}

TEST_CASE("hybrid selection split sizes follow rho") {
  std::vector<Candidate> cs(10);
  for (int i = 0; i < 10; ++i) {
    cs[i].id = i;
    cs[i].distance = static_cast<float>(i);
    cs[i].stream_index = i;
  }
  auto got = select_hybrid(cs, 4, 0.45);  // floor(1.8) = 1 near, 3 far
  std::sort(got.chosen.begin(), got.chosen.end());
  CHECK(got.chosen == std::vector<int>{0, 7, 8, 9});
  got = select_hybrid(cs, 4, 0.50);  // 2 near, 2 far
  std::sort(got.chosen.begin(), got.chosen.end());
  CHECK(got.chosen == std::vector<int>{0, 1, 8, 9});
}

TEST_CASE("prototype distances are exact squared norms") {
  std::vector<float> feats{1, 0, 0, 1, 3, 4};
  std::vector<float> proto{0, 0};
  auto d = prototype_distances(feats, 3, proto);
  REQUIRE(d.size() == 3);
  CHECK(d[0] == doctest::Approx(1));
  CHECK(d[1] == doctest::Approx(1));
  CHECK(d[2] == doctest::Approx(25));
}

TEST_CASE("buffer class accounting") {
  ReplayBuffer buf;
  for (int i = 0; i < 5; ++i) {
    ReplayEntry e;
    e.label = i % 2 ? 4 : 2;
    buf.entries.push_back(e);
  }
  CHECK(buf.present_labels() == std::vector<int>{2, 4});
  CHECK(buf.class_counts() == std::vector<int>{3, 2});
}

TEST_CASE("memory accounting reproduces the footprint arithmetic") {
  // one window: 12*51 floats = 2448 bytes, label 8 bytes
  ReplayBuffer er;
  for (int i = 0; i < 363; ++i) {
    ReplayEntry e;
    e.label = i % 11;
    er.entries.push_back(e);
  }
  auto m = memory_bytes(er, 0);
  CHECK(m.entry_count == 363);
  CHECK(m.window_bytes == 2448);
  CHECK(m.label_bytes == 8);
  CHECK(m.logits_bytes == 0);
  CHECK(m.buffer_bytes == 891'528);
  CHECK(m.total_bytes == 891'528);

  // dark-replay variant stores 11-way logits per entry
  ReplayBuffer der = er;
  for (auto& e : der.entries) e.logits.assign(11, 0.0f);
  m = memory_bytes(der, 0);
  CHECK(m.logits_bytes == 363u * 44);
  CHECK(m.buffer_bytes == 907'500);
  CHECK(m.total_kib == doctest::Approx(886.23).epsilon(1e-4));

  // prototype-aware adds 11 prototypes of 300 floats
  m = memory_bytes(der, 11);
  CHECK(m.prototype_bytes == 13'200);
  CHECK(m.total_bytes == 920'700);
}

TEST_CASE("buffer dump lists every entry") {
  ReplayBuffer buf;
  for (int i = 0; i < 4; ++i) {
    ReplayEntry e;
    e.label = i;
    e.inserted_task = i / 2;
    e.sel_distance = 0.5f * i;
    buf.entries.push_back(e);
  }
  const char* path = "buf_dump.csv";
  dump_buffer(buf, path);
  std::ifstream f(path);
  std::string line;
  int lines = 0;
  while (std::getline(f, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 5);  // header + 4 entries
  std::remove(path);
}
