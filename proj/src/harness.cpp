#include "quadtensor/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "quadtensor/errors.hpp"

namespace quadtensor {

SolverKind parse_solver(std::string_view name) {
  if (name == "als") return SolverKind::Als;
  if (name == "gd") return SolverKind::Gd;
  if (name == "fw") return SolverKind::Fw;
  if (name == "cp-als") return SolverKind::CpAls;
  throw InvalidArgument("unknown solver '" + std::string(name) + "' (expected als, gd, fw, cp-als)");
}

std::string to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::Als: return "als";
    case SolverKind::Gd: return "gd";
    case SolverKind::Fw: return "fw";
    case SolverKind::CpAls: return "cp-als";
  }
  return "unknown";
}

DenseTensor TrainOutcome::reconstruct(std::size_t dim_cap) const {
  if (model) return reconstruct_dense(*model, dim_cap);
  if (cp_model) return cp_reconstruct_dense(*cp_model, dim_cap);
  throw InvalidArgument("TrainOutcome holds no model");
}

double TrainOutcome::predict(const EntryIndex& t) const {
  if (model) return predict_entry(*model, t);
  if (cp_model) return cp_predict_entry(*cp_model, t);
  throw InvalidArgument("TrainOutcome holds no model");
}

namespace {

double resolve_alpha(const ObservationSet& obs, const TrainOptions& opts, double truth_alpha) {
  if (opts.alpha > 0.0) return opts.alpha;
  if (truth_alpha > 0.0) return truth_alpha;
  double peak = 0.0;
  for (const auto& e : obs.entries()) peak = std::max(peak, std::abs(e.value));
  return peak > 0.0 ? peak / 3.0 : 1.0;
}

}  // namespace

RegularizationConfig resolve_regularization(const ObservationSet& obs, const TrainOptions& opts,
                                            std::size_t rank, double truth_alpha) {
  const double alpha = resolve_alpha(obs, opts, truth_alpha);
  if (!(opts.lambda_scale >= 0.0)) throw InvalidArgument("lambda_scale must be >= 0");
  RegularizationConfig reg;
  reg.alpha = alpha;
  reg.rank = rank;
  reg.perturbation_seed = opts.perturbation_seed;
  const auto defaults = default_lambdas(alpha, static_cast<double>(obs.dims().stacked_rows()) / 3.0,
                                        static_cast<double>(obs.size()));
  reg.lambda1 = opts.lambda1 >= 0.0 ? opts.lambda1 : defaults.lambda1 * opts.lambda_scale;
  reg.lambda2 = opts.lambda2 >= 0.0 ? opts.lambda2 : defaults.lambda2 * opts.lambda_scale;
  return reg;
}

TrainOutcome train(const ObservationSet& obs, const KernelMatrix& kernel, const TrainOptions& opts,
                   std::size_t truth_rank, double truth_alpha) {
  TrainOutcome out;
  std::size_t rank = opts.rank;
  if (rank == 0) {
    if (opts.solver == SolverKind::Gd) {
      rank = overparameterized_rank(obs.size(), obs.dims());
    } else if (opts.solver != SolverKind::Fw) {
      if (truth_rank == 0) throw InvalidArgument("train: rank must be given for " + to_string(opts.solver));
      rank = truth_rank;
    }
  }
  switch (opts.solver) {
    case SolverKind::Als: {
      auto res = als_solve(obs, kernel, rank, opts.ridge, opts.cfg);
      out.model = std::move(res.model);
      out.trace = std::move(res);
      break;
    }
    case SolverKind::CpAls: {
      auto res = cp_als_solve(obs, rank, opts.ridge, opts.cfg);
      out.cp_model = std::move(res.model);
      out.trace = std::move(res);
      break;
    }
    case SolverKind::Gd: {
      out.reg = resolve_regularization(obs, opts, rank, truth_alpha);
      auto res = gd_solve(obs, kernel, out.reg, opts.cfg);
      out.model = std::move(res.model);
      out.trace = std::move(res);
      break;
    }
    case SolverKind::Fw: {
      out.reg = resolve_regularization(obs, opts, 1, truth_alpha);
      const auto problem = ConvexProblem::trace_constrained(obs.dims(), out.reg.alpha, out.reg.lambda1,
                                                            out.reg.perturbation_seed);
      auto res = fw_solve(obs, kernel, problem, opts.cfg, opts.fw);
      out.model = std::move(res.model);
      out.trace = std::move(res);
      rank = static_cast<std::size_t>(out.model->rank());
      out.reg.rank = rank;
      break;
    }
  }
  out.rank = rank;
  return out;
}

double holdout_or_full_error(const DenseTensor& truth, const DenseTensor& estimate,
                             const ObservationSet& train) {
  if (train.size() < truth.dims().entry_count()) return relative_test_error(truth, estimate, train);
  if (!(truth.dims() == estimate.dims())) throw InvalidArgument("dims mismatch");
  double num = 0.0;
  double den = 0.0;
  const auto a = truth.values();
  const auto b = estimate.values();
  for (std::size_t f = 0; f < a.size(); ++f) {
    num += (b[f] - a[f]) * (b[f] - a[f]);
    den += a[f] * a[f];
  }
  if (den == 0.0) throw DegenerateMetric("truth tensor is zero");
  return std::sqrt(num / den);
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("QUADTENSOR_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t x = splitmix64(base);
  x = splitmix64(x ^ a);
  x = splitmix64(x ^ b);
  return splitmix64(x ^ c);
}

std::size_t sample_count(std::size_t d, std::size_t r, double c) {
  if (!(c > 0.0)) throw InvalidArgument("c must be positive");
  const double total = static_cast<double>(d) * static_cast<double>(d) * static_cast<double>(d);
  const double m = std::round(c * static_cast<double>(d) * static_cast<double>(r));
  return static_cast<std::size_t>(std::clamp(m, 1.0, total));
}

SyntheticInstance make_instance(std::size_t d, std::size_t r, std::size_t m,
                                const KernelMatrix& kernel, FactorDistribution dist,
                                std::uint64_t seed_base, std::size_t repeat) {
  const auto dims = TensorDims::cube(d);
  GroundTruth truth = random_ground_truth(dims, r, kernel, dist, derive_seed(seed_base, d, repeat, 1));
  DenseTensor dense = reconstruct_dense(truth.as_model(), d);
  const auto idx = sample_uniform_entries(dims, m, derive_seed(derive_seed(seed_base, d, repeat, 2), m));
  ObservationSet obs = observe(dense, idx);
  return {std::move(truth), std::move(dense), std::move(obs)};
}

void SweepSpec::validate() const {
  if (d_values.empty()) throw InvalidArgument("sweep: no d values");
  if (c_values.empty()) throw InvalidArgument("sweep: no c values");
  if (repeats < 1) throw InvalidArgument("sweep: repeats must be >= 1");
  if (r < 1) throw InvalidArgument("sweep: r must be >= 1");
  for (const double c : c_values) {
    if (!(c > 0.0)) throw InvalidArgument("sweep: c values must be positive");
  }
  for (const auto d : d_values) {
    if (d < 1 || d > kDefaultDimCap) throw InvalidArgument("sweep: d out of range");
  }
}

double median_of(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median_of: empty input");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

std::vector<SweepRow> phase_transition_sweep(const SweepSpec& spec) {
  spec.validate();
  const KernelMatrix kernel = parse_kernel(spec.kernel);

  struct Cell {
    std::size_t row;
    std::size_t d;
    std::size_t m;
    std::size_t repeat;
    double error = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;
    std::string failure;
    SolveTrace trace;
  };
  std::vector<SweepRow> rows;
  std::vector<Cell> cells;
  for (const auto d : spec.d_values) {
    for (const double c : spec.c_values) {
      SweepRow row;
      row.d = d;
      row.c = c;
      row.m = sample_count(d, spec.r, c);
      for (std::size_t rep = 0; rep < spec.repeats; ++rep) {
        cells.push_back({rows.size(), d, row.m, rep, std::numeric_limits<double>::quiet_NaN(), 0.0, {}, {}});
      }
      rows.push_back(row);
    }
  }

  auto run_cell = [&](Cell& cell) {
    const auto start = std::chrono::steady_clock::now();
    try {
      const auto inst = make_instance(cell.d, spec.r, cell.m, kernel, spec.distribution,
                                      spec.seed_base, cell.repeat);
      TrainOptions opts = spec.train;
      opts.cfg.truth = nullptr;
      opts.cfg.seed = derive_seed(spec.seed_base, cell.d, cell.repeat, 3);
      opts.perturbation_seed = derive_seed(spec.seed_base, cell.d, cell.repeat, 4);
      const auto out = train(inst.obs, kernel, opts, spec.r, inst.truth.alpha);
      cell.error = holdout_or_full_error(inst.dense, out.reconstruct(cell.d), inst.obs);
      if (spec.keep_traces) cell.trace = out.trace;
    } catch (const std::exception& e) {
      cell.failure = e.what();
    }
    cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  const std::size_t n_threads = std::min(spec.threads > 0 ? spec.threads : worker_threads(), cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t n = next++; n < cells.size(); n = next++) run_cell(cells[n]);
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  for (auto& cell : cells) {
    SweepRow& row = rows[cell.row];
    row.wall_time_s += cell.seconds;
    if (cell.failure.empty()) {
      row.errors.push_back(cell.error);
      if (spec.keep_traces) row.traces.push_back(std::move(cell.trace));
    } else {
      if (row.failed == 0) row.failure = cell.failure;
      ++row.failed;
    }
  }
  for (auto& row : rows) {
    if (row.errors.empty()) {
      row.median_test_error = row.min_test_error = row.max_test_error =
          std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    row.median_test_error = median_of(row.errors);
    row.min_test_error = *std::min_element(row.errors.begin(), row.errors.end());
    row.max_test_error = *std::max_element(row.errors.begin(), row.errors.end());
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path,
                     const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  if (!header_comment.empty()) {
    std::istringstream lines(header_comment);
    for (std::string line; std::getline(lines, line);) out << "# " << line << '\n';
  }
  out << "d,c,m,median_test_error,min_test_error,max_test_error,wall_time_s,ok,failed,failure\n";
  out << std::setprecision(17);
  for (const auto& row : rows) {
    std::string failure = row.failure;
    std::replace(failure.begin(), failure.end(), '"', '\'');
    out << row.d << ',' << row.c << ',' << row.m << ',' << row.median_test_error << ','
        << row.min_test_error << ',' << row.max_test_error << ',' << row.wall_time_s << ','
        << row.errors.size() << ',' << row.failed << ",\"" << failure << "\"\n";
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::string default_sweep_filename(std::string_view solver, std::string_view kernel) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  return "sweep_" + std::string(solver) + "_" + std::string(kernel) + "_" + stamp + ".csv";
}

SolveTrace convergence_trace(std::size_t d, std::size_t r, double c, const TrainOptions& opts_in,
                             std::uint64_t seed, std::string_view kernel_name) {
  const KernelMatrix kernel = parse_kernel(kernel_name);
  const auto inst = make_instance(d, r, sample_count(d, r, c), kernel,
                                  FactorDistribution::StandardNormal, seed, 0);
  TrainOptions opts = opts_in;
  opts.cfg.truth = &inst.dense;
  opts.cfg.test_every = 1;
  return train(inst.obs, kernel, opts, r, inst.truth.alpha).trace;
}

GapReport generalization_gap(const DenseTensor& truth, const DenseTensor& estimate,
                             const ObservationSet& train_set) {
  if (!(truth.dims() == estimate.dims()) || !(truth.dims() == train_set.dims())) {
    throw InvalidArgument("generalization_gap: dims mismatch");
  }
  GapReport out;
  double s = 0.0;
  for (const auto& e : train_set.entries()) {
    const double diff = estimate[e.index] - truth[e.index];
    s += diff * diff;
  }
  out.train_mse = s / static_cast<double>(train_set.size());
  out.full_mse = mean_squared_error_full(truth, estimate);
  out.gap = out.full_mse - out.train_mse;
  return out;
}

GapReport generalization_gap(std::size_t d, std::size_t r, double c, const TrainOptions& opts,
                             std::uint64_t seed, std::string_view kernel_name) {
  const KernelMatrix kernel = parse_kernel(kernel_name);
  const auto inst = make_instance(d, r, sample_count(d, r, c), kernel,
                                  FactorDistribution::StandardNormal, seed, 0);
  TrainOptions run = opts;
  run.cfg.truth = nullptr;
  const auto out = train(inst.obs, kernel, run, r, inst.truth.alpha);
  return generalization_gap(inst.dense, out.reconstruct(d), inst.obs);
}

namespace {

ComparisonSide tune_side(const ObservationSet& fit, const ObservationSet& val,
                         const ObservationSet& all, const DenseTensor& truth,
                         const KernelMatrix& kernel, TrainOptions opts,
                         const std::vector<double>& grid, std::size_t truth_rank) {
  opts.cfg.truth = nullptr;
  ComparisonSide side;
  side.validation_rmse = std::numeric_limits<double>::infinity();
  bool any = false;
  for (const double lambda : grid) {
    opts.ridge = lambda;
    double rmse = std::numeric_limits<double>::infinity();
    try {
      const auto out = train(fit, kernel, opts, truth_rank);
      double s = 0.0;
      for (const auto& e : val.entries()) {
        const double diff = out.predict(e.index) - e.value;
        s += diff * diff;
      }
      rmse = std::sqrt(s / static_cast<double>(val.size()));
    } catch (const SingularSystem&) {
    }
    if (!any || rmse < side.validation_rmse) {
      side.validation_rmse = rmse;
      side.best_lambda = lambda;
      any = true;
    }
  }
  opts.ridge = side.best_lambda;
  const auto out = train(all, kernel, opts, truth_rank);
  side.test_error = holdout_or_full_error(truth, out.reconstruct(truth.dims().max_dim()), all);
  return side;
}

}  // namespace

ComparisonReport compare_models(const ObservationSet& obs, const DenseTensor& truth,
                                const KernelMatrix& kernel, const TrainOptions& first,
                                const TrainOptions& second, const std::vector<double>& lambda_grid,
                                std::size_t truth_rank, std::uint64_t split_seed) {
  if (lambda_grid.empty()) throw InvalidArgument("compare_models: empty lambda grid");
  if (obs.size() < 2) throw InvalidArgument("compare_models: need at least 2 observations");
  std::vector<std::size_t> order(obs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(split_seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(obs.size()))));
  std::vector<Observation> fit_entries;
  std::vector<Observation> val_entries;
  for (std::size_t n = 0; n < order.size(); ++n) {
    (n < n_val ? val_entries : fit_entries).push_back(obs[order[n]]);
  }
  const ObservationSet fit(obs.dims(), std::move(fit_entries));
  const ObservationSet val(obs.dims(), std::move(val_entries));

  ComparisonReport report;
  report.first = tune_side(fit, val, obs, truth, kernel, first, lambda_grid, truth_rank);
  report.second = tune_side(fit, val, obs, truth, kernel, second, lambda_grid, truth_rank);
  return report;
}

ComparisonReport cp_vs_quadratic(TruthKind truth_kind, std::size_t d, std::size_t r, double c,
                                 const std::vector<double>& lambda_grid, const SolverConfig& cfg,
                                 std::uint64_t seed) {
  const auto dims = TensorDims::cube(d);
  const KernelMatrix kernel = make_kernel(KernelKind::Pairwise);
  const DenseTensor truth =
      truth_kind == TruthKind::Quadratic
          ? reconstruct_dense(random_ground_truth(dims, r, kernel, FactorDistribution::StandardNormal,
                                                  derive_seed(seed, d, 0, 1))
                                  .as_model(),
                              d)
          : cp_reconstruct_dense(random_cp_model(dims, r, derive_seed(seed, d, 0, 1)), d);
  const std::size_t m = sample_count(d, r, c);
  const auto obs = observe(truth, sample_uniform_entries(dims, m, derive_seed(seed, d, m, 2)));

  TrainOptions quad;
  quad.solver = SolverKind::Als;
  quad.rank = r;
  quad.cfg = cfg;
  quad.cfg.seed = derive_seed(seed, d, 0, 3);
  TrainOptions cp = quad;
  cp.solver = SolverKind::CpAls;
  return compare_models(obs, truth, kernel, quad, cp, lambda_grid, r, derive_seed(seed, d, m, 5));
}

double find_stable_step(const ObservationSet& obs, const KernelMatrix& kernel,
                        const RegularizationConfig& reg, const SolverConfig& cfg, double start,
                        std::size_t probe_iters, std::size_t max_halvings) {
  if (!(start > 0.0)) throw InvalidArgument("find_stable_step: start must be positive");
  double step = start;
  for (std::size_t h = 0; h <= max_halvings; ++h, step *= 0.5) {
    SolverConfig probe = cfg;
    probe.max_iters = probe_iters;
    probe.step_size = step;
    probe.tol = 0.0;
    probe.truth = nullptr;
    try {
      const auto res = gd_solve(obs, kernel, reg, probe);
      bool monotone = true;
      const auto& f = res.objective_trace;
      for (std::size_t i = 2; i < f.size(); ++i) {
        if (f[i] > f[i - 1]) {
          monotone = false;
          break;
        }
      }
      if (monotone) return step;
    } catch (const Divergence&) {
    }
  }
  throw Divergence("find_stable_step: no stable step found down to " + std::to_string(step));
}

}  // namespace quadtensor
