#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace quadtensor {

/// Largest per-mode size a DenseTensor may have unless the caller raises it.
inline constexpr std::size_t kDefaultDimCap = 256;

struct EntryIndex {
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t k = 0;

  friend auto operator<=>(const EntryIndex&, const EntryIndex&) = default;
};

struct TensorDims {
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  std::size_t d3 = 0;

  static TensorDims cube(std::size_t d) { return {d, d, d}; }

  /// Throws InvalidArgument unless all modes are positive and the entry
  /// count fits in std::size_t.
  void validate() const;

  std::size_t entry_count() const { return d1 * d2 * d3; }
  std::size_t max_dim() const;
  /// Rows of the stacked factor matrix [X; Y; Z].
  std::size_t stacked_rows() const { return d1 + d2 + d3; }

  bool contains(const EntryIndex& t) const { return t.i < d1 && t.j < d2 && t.k < d3; }

  // Row-major: i outermost, k innermost.
  std::size_t flat(const EntryIndex& t) const { return (t.i * d2 + t.j) * d3 + t.k; }
  EntryIndex unflat(std::size_t f) const { return {f / (d2 * d3), (f / d3) % d2, f % d3}; }

  friend bool operator==(const TensorDims&, const TensorDims&) = default;
};

struct Observation {
  EntryIndex index;
  double value = 0.0;

  friend bool operator==(const Observation&, const Observation&) = default;
};

/// The training set: distinct in-range indices with their observed values.
class ObservationSet {
 public:
  /// Validates range, uniqueness (DuplicateEntry) and non-emptiness.
  ObservationSet(TensorDims dims, std::vector<Observation> entries);

  const TensorDims& dims() const { return dims_; }
  std::span<const Observation> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const Observation& operator[](std::size_t n) const { return entries_[n]; }

  /// One byte per tensor entry, 1 where observed.
  std::vector<unsigned char> observed_mask() const;

  /// Same indices, new values (length must match).
  ObservationSet with_values(std::span<const double> values) const;

  friend bool operator==(const ObservationSet&, const ObservationSet&) = default;

 private:
  TensorDims dims_;
  std::vector<Observation> entries_;
};

class DenseTensor {
 public:
  /// Zero tensor. Throws ResourceError if any mode exceeds dim_cap.
  explicit DenseTensor(TensorDims dims, std::size_t dim_cap = kDefaultDimCap);
  DenseTensor(TensorDims dims, std::vector<double> values, std::size_t dim_cap = kDefaultDimCap);

  const TensorDims& dims() const { return dims_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return values_[dims_.flat({i, j, k})];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return values_[dims_.flat({i, j, k})];
  }
  double operator[](const EntryIndex& t) const { return values_[dims_.flat(t)]; }

 private:
  TensorDims dims_;
  std::vector<double> values_;
};

/// m distinct indices drawn uniformly without replacement. Deterministic in
/// seed. Throws InvalidArgument unless 1 <= m <= entry_count.
std::vector<EntryIndex> sample_uniform_entries(const TensorDims& dims, std::size_t m,
                                               std::uint64_t seed);

/// Reads the given entries out of a dense tensor.
ObservationSet observe(const DenseTensor& truth, std::span<const EntryIndex> indices);

/// sqrt( sum_{t not in train} (est_t - truth_t)^2 / sum_{t not in train} truth_t^2 ).
/// Throws DegenerateMetric when nothing is held out or the denominator is 0.
double relative_test_error(const DenseTensor& truth, const DenseTensor& estimate,
                           const ObservationSet& train);

/// Per-entry mean of the squared difference over the whole tensor.
double mean_squared_error_full(const DenseTensor& truth, const DenseTensor& estimate);

}  // namespace quadtensor
