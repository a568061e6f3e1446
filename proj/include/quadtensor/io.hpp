#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quadtensor/linalg.hpp"
#include "quadtensor/solvers.hpp"
#include "quadtensor/tensor.hpp"

namespace quadtensor {

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

// COO tensor files: header "i\tj\tk\tvalue", then one entry per line.
// Without explicit dims the shape is max index + 1 per mode.
ObservationSet read_coo_tsv(std::istream& in, std::optional<TensorDims> dims = std::nullopt);
void write_coo_tsv(const ObservationSet& obs, std::ostream& out);
ObservationSet load_coo_tsv(const std::string& path, std::optional<TensorDims> dims = std::nullopt);
void save_coo_tsv(const ObservationSet& obs, const std::string& path);

/// Every entry of a dense tensor in COO form (zeros included).
void save_dense_tsv(const DenseTensor& tensor, const std::string& path);
/// Reads a COO file that lists every entry of its shape.
DenseTensor load_dense_tsv(const std::string& path, std::optional<TensorDims> dims = std::nullopt);

struct MovielensData {
  ObservationSet obs;
  std::vector<std::int64_t> user_ids;  // user_ids[i] is the raw id of user index i
  std::vector<std::int64_t> item_ids;
  std::int64_t origin = 0;             // minimum timestamp, start of bin 0
  std::size_t bin_weeks = 20;
};

constexpr std::int64_t kSecondsPerWeek = 604800;

/// "UserID::MovieID::Rating::Timestamp" lines. Users and movies are
/// re-indexed from 0 in order of first appearance; the time index is
/// floor((timestamp - min timestamp) / (bin_weeks weeks)). Repeated
/// (user, movie, bin) triples keep the rating with the latest timestamp.
MovielensData read_movielens(std::istream& in, std::size_t bin_weeks = 20);
MovielensData load_movielens(const std::string& path, std::size_t bin_weeks = 20);
/// Writes <prefix>_users.csv and <prefix>_items.csv ("index,id").
void save_movielens_mapping(const MovielensData& data, const std::string& prefix);

/// v -> ln(1 + v); rejects negative values.
ObservationSet log1p_normalize(const ObservationSet& obs);

/// Header "row,c0,...,c{R-1}", one line per row.
void write_matrix_csv(const Matrix& M, std::ostream& out);
void save_matrix_csv(const Matrix& M, const std::string& path);
Matrix read_matrix_csv(std::istream& in);
Matrix load_matrix_csv(const std::string& path);

/// Columns iteration, objective, train_rmse, test_rmse (and gap for
/// Frank-Wolfe traces). Missing test values are left empty.
void write_trace_csv(const SolveTrace& trace, std::ostream& out);
void save_trace_csv(const SolveTrace& trace, const std::string& path);

/// Flat JSON object; values become strings (arrays join with ',').
std::map<std::string, std::string> read_flat_json(std::istream& in);
std::map<std::string, std::string> load_flat_json(const std::string& path);

}  // namespace quadtensor
