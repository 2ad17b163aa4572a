#include <benchmark/benchmark.h>

#include <random>

#include "actchain/kernels.hpp"

namespace k = actchain::kernels;

namespace {

k::FlatChains synthetic_chains(std::size_t n) {
  std::mt19937_64 rng(n);
  k::FlatChains out;
  for (std::size_t c = 0; c < n; ++c) {
    const auto len = 1 + static_cast<std::uint32_t>(rng() % 10);
    const auto groups = static_cast<std::uint8_t>(rng() % 4);
    int t = 0;
    for (std::uint32_t i = 0; i < len; ++i) {
      const int end = std::min(1440, t + 1 + static_cast<int>(rng() % 240));
      k::FlatActivity a;
      a.type_index = static_cast<std::uint8_t>(rng() % actchain::kActivityTypeCount);
      a.start = static_cast<std::uint16_t>(t);
      a.end = static_cast<std::uint16_t>(end);
      a.owner_relation = static_cast<std::uint8_t>(rng() % 3);
      a.partner_relations = static_cast<std::uint8_t>(rng() % 8);
      a.groups = groups;
      out.activities.push_back(a);
      t = std::min(1439, end);
    }
    out.chain_lengths.push_back(len);
    out.chain_groups.push_back(groups);
  }
  return out;
}

std::vector<double> rows(std::size_t n, std::size_t arity, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(n * arity);
  for (std::size_t r = 0; r < n; ++r) {
    double total = 0;
    for (std::size_t i = 0; i < arity; ++i) total += out[r * arity + i] = u(rng);
    for (std::size_t i = 0; i < arity; ++i) out[r * arity + i] /= total;
  }
  return out;
}

template <k::BinCounts (*Count)(const k::FlatChains&, std::uint8_t)>
void count_bins(benchmark::State& state) {
  const auto chains = synthetic_chains(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(Count(chains, 0));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * chains.activities.size()));
}

template <std::vector<double> (*Many)(std::span<const double>, std::span<const double>, std::size_t)>
void jsd_many(benchmark::State& state) {
  constexpr std::size_t arity = actchain::kernels::kTimeBins;
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto p = rows(n, arity, 1), q = rows(n, arity, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Many(p, q, arity));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

}  // namespace

BENCHMARK(count_bins<k::count_bins_serial>)->Name("count_bins/serial")->Arg(1'000)->Arg(100'000);
BENCHMARK(count_bins<k::count_bins_omp>)->Name("count_bins/omp")->Arg(1'000)->Arg(100'000);
BENCHMARK(jsd_many<k::jsd_many_serial>)->Name("jsd_many/serial")->Arg(1'000)->Arg(100'000);
BENCHMARK(jsd_many<k::jsd_many_omp>)->Name("jsd_many/omp")->Arg(1'000)->Arg(100'000);

BENCHMARK_MAIN();
