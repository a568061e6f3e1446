#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "quadtensor/kernel.hpp"
#include "quadtensor/model.hpp"
#include "quadtensor/solvers.hpp"
#include "quadtensor/tensor.hpp"

namespace quadtensor {

enum class SolverKind { Als, Gd, Fw, CpAls };

/// "als", "gd", "fw", "cp-als".
SolverKind parse_solver(std::string_view name);
std::string to_string(SolverKind kind);

/// Everything needed to train one model from an observation set.
struct TrainOptions {
  SolverKind solver = SolverKind::Als;
  /// 0 picks a default: the ground-truth rank for als/cp-als and
  /// ceil(sqrt(2m + 2d)) for gd.
  std::size_t rank = 0;
  /// Ridge weight for als and cp-als.
  double ridge = 1e-3;
  /// Row-norm budget for gd and fw; <= 0 means "take it from the instance"
  /// (ground-truth alpha, or max|y| / 3 without a truth).
  double alpha = 0.0;
  /// Explicit lambdas for gd/fw; negative means default_lambdas times lambda_scale.
  double lambda1 = -1.0;
  double lambda2 = -1.0;
  double lambda_scale = 1.0;
  std::uint64_t perturbation_seed = 0;
  SolverConfig cfg;
  FwOptions fw;
};

/// Output of train(): exactly one of `model` / `cp_model` is set.
struct TrainOutcome {
  std::optional<FactorModel> model;
  std::optional<CPModel> cp_model;
  SolveTrace trace;
  std::size_t rank = 0;
  RegularizationConfig reg;  // lambdas resolved (gd / fw only)

  DenseTensor reconstruct(std::size_t dim_cap = kDefaultDimCap) const;
  double predict(const EntryIndex& t) const;
};

/// Resolves rank and regularization from `opts` and runs the chosen solver.
/// `truth_rank` is used when opts.rank == 0 for als/cp-als; `truth_alpha`
/// when opts.alpha <= 0.
TrainOutcome train(const ObservationSet& obs, const KernelMatrix& kernel, const TrainOptions& opts,
                   std::size_t truth_rank = 0, double truth_alpha = 0.0);

/// Regularization used by gd / fw: alpha from opts, else `truth_alpha`, else
/// max|y| / 3; lambdas explicit or default_lambdas scaled by lambda_scale.
RegularizationConfig resolve_regularization(const ObservationSet& obs, const TrainOptions& opts,
                                            std::size_t rank, double truth_alpha = 0.0);

/// Relative error over held-out entries, or over every entry when nothing is
/// held out (full observation).
double holdout_or_full_error(const DenseTensor& truth, const DenseTensor& estimate,
                             const ObservationSet& train);

/// Number of worker threads: QUADTENSOR_THREADS if set and positive,
/// otherwise the hardware concurrency.
std::size_t worker_threads();

/// Seed derived from a key; the same key always gives the same seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

/// One synthetic instance: ground truth, its dense tensor and m sampled entries.
struct SyntheticInstance {
  GroundTruth truth;
  DenseTensor dense;
  ObservationSet obs;
};

/// Ground truth keyed by (seed, d, repeat); sample keyed additionally by m,
/// so instances at different m share the same truth.
SyntheticInstance make_instance(std::size_t d, std::size_t r, std::size_t m,
                                const KernelMatrix& kernel, FactorDistribution dist,
                                std::uint64_t seed_base, std::size_t repeat);

/// m = round(c d r), clamped to [1, d^3].
std::size_t sample_count(std::size_t d, std::size_t r, double c);

struct SweepSpec {
  std::vector<std::size_t> d_values;
  std::size_t r = 5;
  std::vector<double> c_values;
  std::size_t repeats = 3;
  std::uint64_t seed_base = 0;
  std::string kernel = "pairwise";
  FactorDistribution distribution = FactorDistribution::StandardNormal;
  TrainOptions train;
  /// 0 means worker_threads().
  std::size_t threads = 0;
  /// Keep each repeat's solver trace in SweepRow::traces.
  bool keep_traces = false;

  void validate() const;
};

struct SweepRow {
  std::size_t d = 0;
  double c = 0.0;
  std::size_t m = 0;
  double median_test_error = 0.0;
  double min_test_error = 0.0;
  double max_test_error = 0.0;
  double wall_time_s = 0.0;
  std::vector<double> errors;  // successful repeats, in repeat order
  std::vector<SolveTrace> traces;  // same order; only with SweepSpec::keep_traces
  std::size_t failed = 0;
  std::string failure;  // first failure message, if any
};

/// One row per (d, c); cells run in parallel, results are independent of
/// scheduling. A failing cell is recorded in its row and does not abort.
std::vector<SweepRow> phase_transition_sweep(const SweepSpec& spec);

/// Lower median (always one of the values). Requires a nonempty input.
double median_of(std::vector<double> values);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path,
                     const std::string& header_comment = {});
std::string default_sweep_filename(std::string_view solver, std::string_view kernel);

/// A single run with the test error recorded at every iteration.
SolveTrace convergence_trace(std::size_t d, std::size_t r, double c, const TrainOptions& opts,
                             std::uint64_t seed, std::string_view kernel = "pairwise");

struct GapReport {
  double train_mse = 0.0;  // mean over observed entries
  double full_mse = 0.0;   // mean over all entries
  double gap = 0.0;        // full_mse - train_mse
};

GapReport generalization_gap(const DenseTensor& truth, const DenseTensor& estimate,
                             const ObservationSet& train);
GapReport generalization_gap(std::size_t d, std::size_t r, double c, const TrainOptions& opts,
                             std::uint64_t seed, std::string_view kernel = "pairwise");

struct ComparisonSide {
  double test_error = 0.0;
  double best_lambda = 0.0;
  double validation_rmse = 0.0;
};

struct ComparisonReport {
  ComparisonSide first;
  ComparisonSide second;
};

/// Tunes `ridge` over lambda_grid for each side on a seeded 90/10 split of
/// the training entries, retrains on all of them with the best value and
/// reports the held-out relative error against `truth`.
ComparisonReport compare_models(const ObservationSet& obs, const DenseTensor& truth,
                                const KernelMatrix& kernel, const TrainOptions& first,
                                const TrainOptions& second, const std::vector<double>& lambda_grid,
                                std::size_t truth_rank, std::uint64_t split_seed);

enum class TruthKind { Quadratic, CP };

/// Quadratic model (als, pairwise) against CP-ALS, both at rank r, on a
/// quadratic or CP ground truth. `first` is the quadratic side.
ComparisonReport cp_vs_quadratic(TruthKind truth_kind, std::size_t d, std::size_t r, double c,
                                 const std::vector<double>& lambda_grid, const SolverConfig& cfg,
                                 std::uint64_t seed);

/// Largest step in {start, start/2, ...} (at most `max_halvings` halvings)
/// for which gd_solve runs `probe_iters` iterations without diverging and with
/// a non-increasing objective after iteration 1.
double find_stable_step(const ObservationSet& obs, const KernelMatrix& kernel,
                        const RegularizationConfig& reg, const SolverConfig& cfg, double start,
                        std::size_t probe_iters, std::size_t max_halvings = 30);

}  // namespace quadtensor
