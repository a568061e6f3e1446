#include "quadtensor/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include "json.hpp"

#include "quadtensor/errors.hpp"

namespace quadtensor {

namespace {

constexpr std::string_view kCooHeader = "i\tj\tk\tvalue";

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + sep.size();
  }
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && first != last;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

void check_written(const std::ostream& out, const std::string& path) {
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

ObservationSet read_coo_tsv(std::istream& in, std::optional<TensorDims> dims) {
  std::string line;
  if (!std::getline(in, line) || trim_cr(line) != kCooHeader) {
    throw ParseError(1, "expected header 'i<TAB>j<TAB>k<TAB>value'");
  }
  std::vector<Observation> entries;
  std::vector<std::size_t> line_of;
  std::size_t lineno = 1;
  TensorDims seen{0, 0, 0};
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = trim_cr(line);
    if (text.empty()) continue;
    const auto fields = split(text, "\t");
    if (fields.size() != 4) throw ParseError(lineno, "expected 4 tab-separated fields");
    EntryIndex t{};
    double value = 0.0;
    if (!parse_number(fields[0], t.i) || !parse_number(fields[1], t.j) ||
        !parse_number(fields[2], t.k)) {
      throw ParseError(lineno, "indices must be non-negative integers");
    }
    if (!parse_number(fields[3], value) || !std::isfinite(value)) {
      throw ParseError(lineno, "value must be a finite number");
    }
    if (dims && !dims->contains(t)) throw ParseError(lineno, "index out of range");
    seen = {std::max(seen.d1, t.i + 1), std::max(seen.d2, t.j + 1), std::max(seen.d3, t.k + 1)};
    entries.push_back({t, value});
    line_of.push_back(lineno);
  }
  if (entries.empty()) throw ParseError(lineno, "no entries");

  std::vector<std::size_t> order(entries.size());
  for (std::size_t n = 0; n < order.size(); ++n) order[n] = n;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return entries[a].index < entries[b].index || (entries[a].index == entries[b].index && a < b);
  });
  for (std::size_t n = 1; n < order.size(); ++n) {
    if (entries[order[n]].index == entries[order[n - 1]].index) {
      const auto& t = entries[order[n]].index;
      throw DuplicateEntry("duplicate entry (" + std::to_string(t.i) + "," + std::to_string(t.j) +
                           "," + std::to_string(t.k) + ") on lines " +
                           std::to_string(line_of[order[n - 1]]) + " and " +
                           std::to_string(line_of[order[n]]));
    }
  }
  return ObservationSet(dims ? *dims : seen, std::move(entries));
}

void write_coo_tsv(const ObservationSet& obs, std::ostream& out) {
  out << kCooHeader << '\n';
  for (const auto& e : obs.entries()) {
    out << e.index.i << '\t' << e.index.j << '\t' << e.index.k << '\t' << format_double(e.value)
        << '\n';
  }
}

ObservationSet load_coo_tsv(const std::string& path, std::optional<TensorDims> dims) {
  auto in = open_in(path);
  return read_coo_tsv(in, dims);
}

void save_coo_tsv(const ObservationSet& obs, const std::string& path) {
  auto out = open_out(path);
  write_coo_tsv(obs, out);
  check_written(out, path);
}

void save_dense_tsv(const DenseTensor& tensor, const std::string& path) {
  auto out = open_out(path);
  out << kCooHeader << '\n';
  const auto& dims = tensor.dims();
  const auto values = tensor.values();
  for (std::size_t f = 0; f < values.size(); ++f) {
    const auto t = dims.unflat(f);
    out << t.i << '\t' << t.j << '\t' << t.k << '\t' << format_double(values[f]) << '\n';
  }
  check_written(out, path);
}

DenseTensor load_dense_tsv(const std::string& path, std::optional<TensorDims> dims) {
  const auto obs = load_coo_tsv(path, dims);
  if (obs.size() != obs.dims().entry_count()) {
    throw InvalidArgument(path + ": dense tensor file must list every entry (" +
                          std::to_string(obs.dims().entry_count()) + " expected, " +
                          std::to_string(obs.size()) + " found)");
  }
  DenseTensor out(obs.dims(), obs.dims().max_dim());
  auto values = out.values();
  for (const auto& e : obs.entries()) values[obs.dims().flat(e.index)] = e.value;
  return out;
}

MovielensData read_movielens(std::istream& in, std::size_t bin_weeks) {
  if (bin_weeks < 1) throw InvalidArgument("bin_weeks must be >= 1");
  struct Raw {
    std::int64_t user;
    std::int64_t item;
    double rating;
    std::int64_t timestamp;
  };
  std::vector<Raw> raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = trim_cr(line);
    if (text.empty()) continue;
    const auto fields = split(text, "::");
    if (fields.size() != 4) throw ParseError(lineno, "expected UserID::MovieID::Rating::Timestamp");
    Raw r{};
    if (!parse_number(fields[0], r.user) || r.user < 1) throw ParseError(lineno, "bad user id");
    if (!parse_number(fields[1], r.item) || r.item < 1) throw ParseError(lineno, "bad movie id");
    if (!parse_number(fields[2], r.rating) || !std::isfinite(r.rating)) {
      throw ParseError(lineno, "bad rating");
    }
    if (!parse_number(fields[3], r.timestamp) || r.timestamp < 0) {
      throw ParseError(lineno, "bad timestamp");
    }
    raw.push_back(r);
  }
  if (raw.empty()) throw ParseError(lineno, "no ratings");

  std::vector<std::int64_t> user_ids;
  std::vector<std::int64_t> item_ids;
  const std::int64_t origin = std::min_element(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) {
                  return a.timestamp < b.timestamp;
                })->timestamp;
  const std::int64_t width = static_cast<std::int64_t>(bin_weeks) * kSecondsPerWeek;

  std::unordered_map<std::int64_t, std::size_t> user_index;
  std::unordered_map<std::int64_t, std::size_t> item_index;
  struct Kept {
    EntryIndex index;
    double rating;
    std::int64_t timestamp;
  };
  std::vector<Kept> kept;
  std::map<EntryIndex, std::size_t> slot;
  std::size_t n_bins = 0;
  for (const auto& r : raw) {
    const auto [u, new_user] = user_index.try_emplace(r.user, user_index.size());
    if (new_user) user_ids.push_back(r.user);
    const auto [it, new_item] = item_index.try_emplace(r.item, item_index.size());
    if (new_item) item_ids.push_back(r.item);
    const auto bin = static_cast<std::size_t>((r.timestamp - origin) / width);
    n_bins = std::max(n_bins, bin + 1);
    const EntryIndex t{u->second, it->second, bin};
    const auto [s, inserted] = slot.try_emplace(t, kept.size());
    if (inserted) {
      kept.push_back({t, r.rating, r.timestamp});
    } else if (r.timestamp >= kept[s->second].timestamp) {
      kept[s->second].rating = r.rating;
      kept[s->second].timestamp = r.timestamp;
    }
  }
  std::vector<Observation> entries;
  entries.reserve(kept.size());
  for (const auto& k : kept) entries.push_back({k.index, k.rating});
  ObservationSet obs({user_ids.size(), item_ids.size(), n_bins}, std::move(entries));
  return {std::move(obs), std::move(user_ids), std::move(item_ids), origin, bin_weeks};
}

MovielensData load_movielens(const std::string& path, std::size_t bin_weeks) {
  auto in = open_in(path);
  return read_movielens(in, bin_weeks);
}

void save_movielens_mapping(const MovielensData& data, const std::string& prefix) {
  auto write = [](const std::vector<std::int64_t>& ids, const std::string& path) {
    auto out = open_out(path);
    out << "index,id\n";
    for (std::size_t n = 0; n < ids.size(); ++n) out << n << ',' << ids[n] << '\n';
    check_written(out, path);
  };
  write(data.user_ids, prefix + "_users.csv");
  write(data.item_ids, prefix + "_items.csv");
}

ObservationSet log1p_normalize(const ObservationSet& obs) {
  std::vector<double> values;
  values.reserve(obs.size());
  for (const auto& e : obs.entries()) {
    if (e.value < 0.0) throw InvalidArgument("log1p_normalize: negative value");
    values.push_back(std::log1p(e.value));
  }
  return obs.with_values(values);
}

void write_matrix_csv(const Matrix& M, std::ostream& out) {
  out << "row";
  for (Eigen::Index c = 0; c < M.cols(); ++c) out << ",c" << c;
  out << '\n';
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    out << r;
    for (Eigen::Index c = 0; c < M.cols(); ++c) out << ',' << format_double(M(r, c));
    out << '\n';
  }
}

void save_matrix_csv(const Matrix& M, const std::string& path) {
  auto out = open_out(path);
  write_matrix_csv(M, out);
  check_written(out, path);
}

Matrix read_matrix_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  const auto header = split(trim_cr(line), ",");
  if (header.size() < 2 || header[0] != "row") throw ParseError(1, "expected header row,c0,...");
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c] != "c" + std::to_string(c - 1)) throw ParseError(1, "bad column name");
  }
  const auto cols = static_cast<Eigen::Index>(header.size() - 1);
  std::vector<double> values;
  std::size_t lineno = 1;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = trim_cr(line);
    if (text.empty()) continue;
    const auto fields = split(text, ",");
    if (static_cast<Eigen::Index>(fields.size()) != cols + 1) {
      throw ParseError(lineno, "wrong number of columns");
    }
    Eigen::Index row = 0;
    if (!parse_number(fields[0], row) || row != rows) throw ParseError(lineno, "rows must be 0,1,2,...");
    for (Eigen::Index c = 0; c < cols; ++c) {
      double v = 0.0;
      if (!parse_number(fields[static_cast<std::size_t>(c) + 1], v) || !std::isfinite(v)) {
        throw ParseError(lineno, "bad number");
      }
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw ParseError(lineno, "no rows");
  return Eigen::Map<const Matrix>(values.data(), rows, cols);
}

Matrix load_matrix_csv(const std::string& path) {
  auto in = open_in(path);
  return read_matrix_csv(in);
}

void write_trace_csv(const SolveTrace& trace, std::ostream& out) {
  const bool has_gap = !trace.gap_trace.empty();
  out << "iteration,objective,train_rmse,test_rmse" << (has_gap ? ",gap" : "") << '\n';
  for (std::size_t it = 0; it < trace.objective_trace.size(); ++it) {
    out << it << ',' << format_double(trace.objective_trace[it]) << ','
        << format_double(trace.train_error_trace[it]) << ',';
    if (it < trace.test_error_trace.size() && !std::isnan(trace.test_error_trace[it])) {
      out << format_double(trace.test_error_trace[it]);
    }
    if (has_gap) out << ',' << format_double(trace.gap_trace[it]);
    out << '\n';
  }
}

void save_trace_csv(const SolveTrace& trace, const std::string& path) {
  auto out = open_out(path);
  write_trace_csv(trace, out);
  check_written(out, path);
}

std::map<std::string, std::string> read_flat_json(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  if (!doc.is_object()) throw InvalidArgument("config must be a JSON object");
  auto scalar = [&](const nlohmann::json& v, const std::string& key) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return format_double(v.get<double>());
    throw InvalidArgument("config key '" + key + "' must be a scalar or an array of scalars");
  };
  std::map<std::string, std::string> out;
  for (const auto& [key, value] : doc.items()) {
    if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) joined += (joined.empty() ? "" : ",") + scalar(v, key);
      out[key] = joined;
    } else {
      out[key] = scalar(value, key);
    }
  }
  return out;
}

std::map<std::string, std::string> load_flat_json(const std::string& path) {
  auto in = open_in(path);
  return read_flat_json(in);
}

}  // namespace quadtensor
