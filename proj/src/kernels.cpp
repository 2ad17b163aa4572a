#include "actchain/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace actchain::kernels {
namespace {

template <typename Array>
void add_into(Array& dst, const Array& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void count_activity(BinCounts& c, const FlatActivity& a) {
  const int t = a.type_index;
  const int sb = bin_time(a.start);
  const int eb = bin_time(a.end);
  ++c.activities;
  ++c.type[t];
  ++c.start[sb];
  ++c.end[eb];
  ++c.duration[bin_duration(a.end - a.start)];
  ++c.type_start[t][sb];
  ++c.type_end[t][eb];

  const auto head = relation_bit(Relationship::head);
  const auto spouse = relation_bit(Relationship::spouse);
  const auto child = relation_bit(Relationship::child);
  const auto owner = static_cast<Relationship>(a.owner_relation);

  if (owner == Relationship::head || owner == Relationship::spouse) {
    ++c.joint_total[0][t];
    const bool joint = owner == Relationship::head ? (a.partner_relations & spouse) : (a.partner_relations & head);
    if (joint) ++c.joint[0][t];
  }
  if (owner == Relationship::head || owner == Relationship::child) {
    ++c.joint_total[1][t];
    const bool joint = owner == Relationship::head ? (a.partner_relations & child) : (a.partner_relations & head);
    if (joint) ++c.joint[1][t];
  }
  ++c.joint_total[2][t];
  if (a.partner_relations != 0) ++c.joint[2][t];
}

// Offsets of each chain's first activity.
std::vector<std::size_t> chain_offsets(const FlatChains& chains) {
  std::vector<std::size_t> offsets(chains.chain_lengths.size() + 1, 0);
  for (std::size_t i = 0; i < chains.chain_lengths.size(); ++i) offsets[i + 1] = offsets[i] + chains.chain_lengths[i];
  if (offsets.back() != chains.activities.size()) {
    throw std::invalid_argument("chain lengths do not sum to the activity count");
  }
  return offsets;
}

void count_chain(BinCounts& c, const FlatChains& chains, const std::vector<std::size_t>& offsets, std::size_t i,
                 std::uint8_t group_filter) {
  if (group_filter != 0 && (chains.chain_groups[i] & group_filter) == 0) return;
  ++c.chains;
  ++c.length[bin_length(chains.chain_lengths[i])];
  for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) count_activity(c, chains.activities[k]);
}

}  // namespace

void BinCounts::merge(const BinCounts& other) {
  chains += other.chains;
  activities += other.activities;
  add_into(type, other.type);
  add_into(start, other.start);
  add_into(end, other.end);
  add_into(duration, other.duration);
  add_into(length, other.length);
  for (int t = 0; t < kActivityTypeCount; ++t) {
    add_into(type_start[t], other.type_start[t]);
    add_into(type_end[t], other.type_end[t]);
  }
  for (int r = 0; r < kRelationPairs; ++r) {
    add_into(joint[r], other.joint[r]);
    add_into(joint_total[r], other.joint_total[r]);
  }
}

int bin_time(int minute) {
  if (minute < 0 || minute > 1440) throw std::out_of_range("time " + std::to_string(minute) + " outside 0..1440");
  return minute == 1440 ? kTimeBins - 1 : minute / 60;
}

int bin_duration(int minutes) {
  if (minutes < 1) throw std::invalid_argument("duration " + std::to_string(minutes) + " must be positive");
  const int bin = minutes / 30;
  return bin < kDurationBins - 1 ? bin : kDurationBins - 1;
}

int bin_length(std::size_t length) {
  if (length == 0) throw std::invalid_argument("chain length must be at least 1");
  return length > static_cast<std::size_t>(kMaxChainLength) ? kLengthBins - 1 : static_cast<int>(length) - 1;
}

BinCounts count_bins_serial(const FlatChains& chains, std::uint8_t group_filter) {
  const auto offsets = chain_offsets(chains);
  BinCounts total;
  for (std::size_t i = 0; i < chains.chain_lengths.size(); ++i) count_chain(total, chains, offsets, i, group_filter);
  return total;
}

BinCounts count_bins_omp(const FlatChains& chains, std::uint8_t group_filter) {
  const auto offsets = chain_offsets(chains);
  const auto n = static_cast<std::ptrdiff_t>(chains.chain_lengths.size());
  BinCounts total;
#pragma omp parallel
  {
    BinCounts local;
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t i = 0; i < n; ++i) count_chain(local, chains, offsets, static_cast<std::size_t>(i), group_filter);
#pragma omp critical(actchain_bin_merge)
    total.merge(local);
  }
  return total;
}

double jsd_unchecked(std::span<const double> p, std::span<const double> q) {
  double kl_p = 0.0;
  double kl_q = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) kl_p += p[i] * std::log2(p[i] / m);
    if (q[i] > 0.0) kl_q += q[i] * std::log2(q[i] / m);
  }
  const double d = 0.5 * kl_p + 0.5 * kl_q;
  if (d < 0.0) return 0.0;
  if (d > 1.0) return 1.0;
  return d;
}

std::vector<double> jsd_many_serial(std::span<const double> p, std::span<const double> q, std::size_t arity) {
  if (arity == 0 || p.size() != q.size() || p.size() % arity != 0) {
    throw std::invalid_argument("jsd_many: inputs must be equal-length multiples of the arity");
  }
  const std::size_t n = p.size() / arity;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = jsd_unchecked(p.subspan(i * arity, arity), q.subspan(i * arity, arity));
  return out;
}

std::vector<double> jsd_many_omp(std::span<const double> p, std::span<const double> q, std::size_t arity) {
  if (arity == 0 || p.size() != q.size() || p.size() % arity != 0) {
    throw std::invalid_argument("jsd_many: inputs must be equal-length multiples of the arity");
  }
  const auto n = static_cast<std::ptrdiff_t>(p.size() / arity);
  std::vector<double> out(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = jsd_unchecked(p.subspan(k * arity, arity), q.subspan(k * arity, arity));
  }
  return out;
}

}  // namespace actchain::kernels
