#include "quadtensor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <unordered_map>

#include "quadtensor/errors.hpp"

namespace quadtensor {

namespace {

void require_same_dims(const TensorDims& a, const TensorDims& b) {
  if (!(a == b)) throw InvalidArgument("tensor dimensions differ");
}

}  // namespace

void TensorDims::validate() const {
  if (d1 == 0 || d2 == 0 || d3 == 0) throw InvalidArgument("tensor dimensions must be positive");
  constexpr auto kMax = std::numeric_limits<std::size_t>::max();
  if (d1 > kMax / d2 || d1 * d2 > kMax / d3) throw InvalidArgument("tensor entry count overflows");
}

std::size_t TensorDims::max_dim() const { return std::max({d1, d2, d3}); }

ObservationSet::ObservationSet(TensorDims dims, std::vector<Observation> entries)
    : dims_(dims), entries_(std::move(entries)) {
  dims_.validate();
  if (entries_.empty()) throw InvalidArgument("observation set must be nonempty");
  std::vector<std::size_t> flat;
  flat.reserve(entries_.size());
  for (const auto& e : entries_) {
    if (!dims_.contains(e.index)) {
      throw InvalidArgument("observation index (" + std::to_string(e.index.i) + "," +
                            std::to_string(e.index.j) + "," + std::to_string(e.index.k) +
                            ") out of range");
    }
    flat.push_back(dims_.flat(e.index));
  }
  std::sort(flat.begin(), flat.end());
  auto dup = std::adjacent_find(flat.begin(), flat.end());
  if (dup != flat.end()) {
    auto t = dims_.unflat(*dup);
    throw DuplicateEntry("duplicate observation at (" + std::to_string(t.i) + "," +
                         std::to_string(t.j) + "," + std::to_string(t.k) + ")");
  }
}

std::vector<unsigned char> ObservationSet::observed_mask() const {
  std::vector<unsigned char> mask(dims_.entry_count(), 0);
  for (const auto& e : entries_) mask[dims_.flat(e.index)] = 1;
  return mask;
}

ObservationSet ObservationSet::with_values(std::span<const double> values) const {
  if (values.size() != entries_.size()) throw InvalidArgument("value count mismatch");
  auto copy = entries_;
  for (std::size_t n = 0; n < copy.size(); ++n) copy[n].value = values[n];
  return ObservationSet(dims_, std::move(copy));
}

DenseTensor::DenseTensor(TensorDims dims, std::size_t dim_cap) : dims_(dims) {
  dims_.validate();
  if (dims_.max_dim() > dim_cap) {
    throw ResourceError("dense tensor mode size " + std::to_string(dims_.max_dim()) +
                        " exceeds cap " + std::to_string(dim_cap));
  }
  values_.assign(dims_.entry_count(), 0.0);
}

DenseTensor::DenseTensor(TensorDims dims, std::vector<double> values, std::size_t dim_cap)
    : DenseTensor(dims, dim_cap) {
  if (values.size() != dims_.entry_count()) throw InvalidArgument("dense value count mismatch");
  values_ = std::move(values);
}

std::vector<EntryIndex> sample_uniform_entries(const TensorDims& dims, std::size_t m,
                                               std::uint64_t seed) {
  dims.validate();
  const std::size_t n = dims.entry_count();
  if (m < 1 || m > n) {
    throw InvalidArgument("sample count " + std::to_string(m) + " outside [1, " +
                          std::to_string(n) + "]");
  }
  // Partial Fisher-Yates over [0, n); only displaced slots are stored.
  std::mt19937_64 rng(seed);
  std::unordered_map<std::size_t, std::size_t> displaced;
  displaced.reserve(2 * m);
  auto slot = [&](std::size_t p) {
    auto it = displaced.find(p);
    return it == displaced.end() ? p : it->second;
  };
  std::vector<EntryIndex> out;
  out.reserve(m);
  for (std::size_t s = 0; s < m; ++s) {
    std::uniform_int_distribution<std::size_t> pick(s, n - 1);
    const std::size_t r = pick(rng);
    const std::size_t chosen = slot(r);
    displaced[r] = slot(s);
    out.push_back(dims.unflat(chosen));
  }
  return out;
}

ObservationSet observe(const DenseTensor& truth, std::span<const EntryIndex> indices) {
  std::vector<Observation> entries;
  entries.reserve(indices.size());
  for (const auto& t : indices) {
    if (!truth.dims().contains(t)) throw InvalidArgument("index out of range");
    entries.push_back({t, truth[t]});
  }
  return ObservationSet(truth.dims(), std::move(entries));
}

double relative_test_error(const DenseTensor& truth, const DenseTensor& estimate,
                           const ObservationSet& train) {
  require_same_dims(truth.dims(), estimate.dims());
  require_same_dims(truth.dims(), train.dims());
  const auto mask = train.observed_mask();
  const auto a = truth.values();
  const auto b = estimate.values();
  double num = 0.0;
  double den = 0.0;
  std::size_t held_out = 0;
  for (std::size_t f = 0; f < a.size(); ++f) {
    if (mask[f]) continue;
    ++held_out;
    const double diff = b[f] - a[f];
    num += diff * diff;
    den += a[f] * a[f];
  }
  if (held_out == 0) throw DegenerateMetric("no held-out entries");
  if (den == 0.0) throw DegenerateMetric("held-out truth is identically zero");
  return std::sqrt(num / den);
}

double mean_squared_error_full(const DenseTensor& truth, const DenseTensor& estimate) {
  require_same_dims(truth.dims(), estimate.dims());
  const auto a = truth.values();
  const auto b = estimate.values();
  double sum = 0.0;
  for (std::size_t f = 0; f < a.size(); ++f) {
    const double diff = b[f] - a[f];
    sum += diff * diff;
  }
  return sum / static_cast<double>(a.size());
}

}  // namespace quadtensor
