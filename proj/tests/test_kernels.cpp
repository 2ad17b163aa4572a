#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <omp.h>

#include "actchain/kernels.hpp"
#include "test_support.hpp"

using namespace actchain;
using namespace actchain::kernels;

namespace {

FlatChains random_flat(std::mt19937_64& rng, std::size_t chains) {
  FlatChains f;
  std::uniform_int_distribution<int> len(1, 16), type(0, 14), minute(0, 1439), rel(0, 3), bits(0, 15), grp(0, 3);
  for (std::size_t i = 0; i < chains; ++i) {
    const int n = len(rng);
    const auto g = static_cast<std::uint8_t>(grp(rng));
    const auto owner = static_cast<std::uint8_t>(rel(rng));
    for (int k = 0; k < n; ++k) {
      const int s = minute(rng);
      std::uniform_int_distribution<int> e(s + 1, 1440);
      f.activities.push_back({static_cast<std::uint8_t>(type(rng)), static_cast<std::uint16_t>(s),
                              static_cast<std::uint16_t>(e(rng)), owner, static_cast<std::uint8_t>(bits(rng) & 0x7),
                              g});
    }
    f.chain_lengths.push_back(static_cast<std::uint32_t>(n));
    f.chain_groups.push_back(g);
  }
  return f;
}

}  // namespace

TEST_CASE("bin edges") {
  CHECK(bin_time(0) == 0);
  CHECK(bin_time(59) == 0);
  CHECK(bin_time(60) == 1);
  CHECK(bin_time(1439) == 23);
  CHECK(bin_time(1440) == 23);
  CHECK_THROWS_AS(bin_time(-1), std::out_of_range);
  CHECK_THROWS_AS(bin_time(1441), std::out_of_range);

  CHECK(bin_duration(1) == 0);
  CHECK(bin_duration(29) == 0);
  CHECK(bin_duration(30) == 1);
  CHECK(bin_duration(839) == 27);
  CHECK(bin_duration(840) == 28);
  CHECK(bin_duration(1440) == 28);
  CHECK_THROWS_AS(bin_duration(0), std::invalid_argument);

  CHECK(bin_length(1) == 0);
  CHECK(bin_length(12) == 11);
  CHECK(bin_length(13) == 12);
  CHECK(bin_length(40) == 12);
  CHECK_THROWS_AS(bin_length(0), std::invalid_argument);
}

TEST_CASE("count_bins matches a hand oracle") {
  std::mt19937_64 rng(3);
  const auto f = random_flat(rng, 400);
  const auto c = count_bins_serial(f);
  std::array<std::uint64_t, 15> type{};
  std::array<std::uint64_t, 24> start{};
  std::array<std::uint64_t, 29> dur{};
  std::array<std::uint64_t, 13> len{};
  std::uint64_t any_joint = 0;
  for (const auto& a : f.activities) {
    ++type[a.type_index];
    ++start[std::min(a.start / 60, 23)];
    ++dur[std::min((a.end - a.start) / 30, 28)];
    if (a.partner_relations) ++any_joint;
  }
  for (auto n : f.chain_lengths) ++len[std::min<int>(n, 13) - 1];
  CHECK(c.chains == f.chain_lengths.size());
  CHECK(c.activities == f.activities.size());
  CHECK(c.type == type);
  CHECK(c.start == start);
  CHECK(c.duration == dur);
  CHECK(c.length == len);
  std::uint64_t joint_any = 0;
  for (auto x : c.joint[2]) joint_any += x;
  CHECK(joint_any == any_joint);
}

TEST_CASE("count_bins: serial and OpenMP agree exactly") {
  std::mt19937_64 rng(4);
  for (std::size_t n : {0u, 1u, 7u, 1000u, 5000u}) {
    const auto f = random_flat(rng, n);
    for (int threads : {1, 2, 4, 7}) {
      omp_set_num_threads(threads);
      for (std::uint8_t filter : {std::uint8_t{0}, kGroupStudent, kGroupWorker}) {
        CHECK(count_bins_serial(f, filter) == count_bins_omp(f, filter));
      }
    }
  }
}

TEST_CASE("count_bins: merge over batches equals one pass") {
  std::mt19937_64 rng(5);
  const auto a = random_flat(rng, 300);
  const auto b = random_flat(rng, 200);
  FlatChains both = a;
  both.activities.insert(both.activities.end(), b.activities.begin(), b.activities.end());
  both.chain_lengths.insert(both.chain_lengths.end(), b.chain_lengths.begin(), b.chain_lengths.end());
  both.chain_groups.insert(both.chain_groups.end(), b.chain_groups.begin(), b.chain_groups.end());
  auto merged = count_bins_serial(a);
  merged.merge(count_bins_serial(b));
  CHECK(merged == count_bins_serial(both));
}

TEST_CASE("count_bins rejects inconsistent lengths") {
  FlatChains f;
  f.chain_lengths = {2};
  f.chain_groups = {0};
  f.activities.push_back({0, 0, 10, 0, 0, 0});
  CHECK_THROWS_AS(count_bins_serial(f), std::invalid_argument);
  CHECK_THROWS_AS(count_bins_omp(f), std::invalid_argument);
}

TEST_CASE("jsd_many: serial and OpenMP agree with the brute-force oracle") {
  std::mt19937_64 rng(6);
  const std::size_t arity = 24, pairs = 2000;
  std::vector<double> p, q;
  std::vector<double> expect;
  for (std::size_t i = 0; i < pairs; ++i) {
    auto a = actchain::testing::random_distribution(rng, arity, 0.3);
    auto b = actchain::testing::random_distribution(rng, arity, 0.3);
    expect.push_back(actchain::testing::brute_force_jsd(a, b));
    p.insert(p.end(), a.begin(), a.end());
    q.insert(q.end(), b.begin(), b.end());
  }
  const auto serial = jsd_many_serial(p, q, arity);
  omp_set_num_threads(4);
  const auto parallel = jsd_many_omp(p, q, arity);
  REQUIRE(serial.size() == pairs);
  REQUIRE(parallel.size() == pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    CHECK(serial[i] == parallel[i]);
    CHECK(std::abs(serial[i] - expect[i]) <= 1e-12);
  }
  CHECK_THROWS(jsd_many_serial(p, std::span<const double>(q).first(q.size() - 1), arity));
}
