#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "doctest.h"
#include "quadtensor/errors.hpp"
#include "quadtensor/harness.hpp"

using namespace quadtensor;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SweepSpec small_spec() {
  SweepSpec s;
  s.d_values = {5, 6};
  s.r = 2;
  s.c_values = {2.0, 4.0};
  s.repeats = 3;
  s.seed_base = 7;
  s.train.solver = SolverKind::Als;
  s.train.ridge = 1e-4;
  s.train.cfg.max_iters = 30;
  return s;
}

}  // namespace

TEST_CASE("solver names round-trip") {
  for (auto k : {SolverKind::Als, SolverKind::Gd, SolverKind::Fw, SolverKind::CpAls}) {
    CHECK(parse_solver(to_string(k)) == k);
  }
  CHECK(to_string(SolverKind::CpAls) == "cp-als");
  CHECK_THROWS_AS(parse_solver("sgd"), InvalidArgument);
}

TEST_CASE("derive_seed is a deterministic function of its key") {
  CHECK(derive_seed(1, 2, 3, 4) == derive_seed(1, 2, 3, 4));
  CHECK(derive_seed(1, 2, 3, 4) != derive_seed(1, 2, 3, 5));
  CHECK(derive_seed(1, 2, 3, 4) != derive_seed(1, 3, 2, 4));
  CHECK(derive_seed(0, 0) != derive_seed(1, 0));
}

TEST_CASE("median_of returns the lower median, always an input value") {
  CHECK(median_of({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median_of({4.0, 1.0, 3.0, 2.0}) == 2.0);
  CHECK(median_of({5.0}) == 5.0);
  CHECK_THROWS_AS(median_of({}), InvalidArgument);
}

TEST_CASE("sample_count rounds c d r and clamps to the tensor size") {
  CHECK(sample_count(50, 5, 2.0) == 500);
  CHECK(sample_count(10, 3, 2.5) == 75);
  CHECK(sample_count(3, 5, 100.0) == 27);
  CHECK(sample_count(3, 1, 1e-9) == 1);
  CHECK_THROWS_AS(sample_count(3, 1, 0.0), InvalidArgument);
}

TEST_CASE("instances at different m share one ground truth") {
  const auto K = make_kernel(KernelKind::Pairwise);
  const auto a = make_instance(6, 2, 30, K, FactorDistribution::StandardNormal, 3, 1);
  const auto b = make_instance(6, 2, 60, K, FactorDistribution::StandardNormal, 3, 1);
  const auto c = make_instance(6, 2, 30, K, FactorDistribution::StandardNormal, 3, 2);
  CHECK(a.truth.A == b.truth.A);
  CHECK(a.truth.A != c.truth.A);
  CHECK(a.obs.size() == 30);
  CHECK(b.obs.size() == 60);
  CHECK(a.obs == make_instance(6, 2, 30, K, FactorDistribution::StandardNormal, 3, 1).obs);
  for (const auto& e : a.obs.entries()) CHECK(e.value == a.dense[e.index]);
}

TEST_CASE("sweep rows do not depend on scheduling") {
  auto spec = small_spec();
  spec.threads = 1;
  const auto serial = phase_transition_sweep(spec);
  spec.threads = 3;
  const auto parallel = phase_transition_sweep(spec);
  REQUIRE(serial.size() == 4);
  REQUIRE(parallel.size() == 4);
  for (std::size_t n = 0; n < serial.size(); ++n) {
    CHECK(serial[n].d == parallel[n].d);
    CHECK(serial[n].c == parallel[n].c);
    CHECK(serial[n].errors == parallel[n].errors);
    CHECK(serial[n].errors.size() == 3);
    CHECK(std::find(serial[n].errors.begin(), serial[n].errors.end(), serial[n].median_test_error) !=
          serial[n].errors.end());
    CHECK(serial[n].min_test_error <= serial[n].median_test_error);
    CHECK(serial[n].median_test_error <= serial[n].max_test_error);
  }
  CHECK(serial[0].d == 5);
  CHECK(serial[0].m == 20);
  CHECK(serial[3].m == 48);
}

TEST_CASE("sweep records failing cells without aborting") {
  auto spec = small_spec();
  spec.train.solver = SolverKind::Gd;
  spec.train.cfg.step_size = 1e6;
  spec.d_values = {5};
  spec.c_values = {2.0};
  const auto rows = phase_transition_sweep(spec);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].failed == 3);
  CHECK(rows[0].errors.empty());
  CHECK(std::isnan(rows[0].median_test_error));
  CHECK(rows[0].failure.find("diverged") != std::string::npos);
}

TEST_CASE("sweep validation") {
  auto spec = small_spec();
  spec.c_values = {};
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
  spec = small_spec();
  spec.repeats = 0;
  CHECK_THROWS_AS(phase_transition_sweep(spec), InvalidArgument);
  spec = small_spec();
  spec.d_values = {1000};
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
}

TEST_CASE("full observation is never worse than partial for ALS") {
  SweepSpec spec;
  spec.d_values = {6};
  spec.r = 2;
  spec.c_values = {3.0, 6.0, 12.0, 18.0};  // 18 d r = d^3
  spec.repeats = 3;
  spec.seed_base = 11;
  spec.train.solver = SolverKind::Als;
  spec.train.ridge = 1e-8;
  spec.train.cfg.max_iters = 300;
  const auto rows = phase_transition_sweep(spec);
  REQUIRE(rows.back().m == 216);
  for (std::size_t rep = 0; rep < 3; ++rep) {
    const double full = rows.back().errors[rep];
    for (std::size_t n = 0; n + 1 < rows.size(); ++n) CHECK(full <= rows[n].errors[rep]);
  }
}

TEST_CASE("sweep CSV has a header and one line per row") {
  auto spec = small_spec();
  spec.d_values = {5};
  const auto rows = phase_transition_sweep(spec);
  const auto path = (std::filesystem::temp_directory_path() / "quadtensor_sweep_test.csv").string();
  write_sweep_csv(rows, path, "solver=als\nr=2");
  std::istringstream in(slurp(path));
  std::string line;
  std::getline(in, line);
  CHECK(line == "# solver=als");
  std::getline(in, line);
  CHECK(line == "# r=2");
  std::getline(in, line);
  CHECK(line == "d,c,m,median_test_error,min_test_error,max_test_error,wall_time_s,ok,failed,failure");
  std::size_t count = 0;
  while (std::getline(in, line)) {
    ++count;
    CHECK(line.rfind("5,", 0) == 0);
    CHECK(line.size() > 10);
  }
  CHECK(count == rows.size());
  std::filesystem::remove(path);
}

TEST_CASE("default sweep file name follows the documented pattern") {
  const auto name = default_sweep_filename("als", "pairwise");
  CHECK(std::regex_match(name, std::regex(R"(sweep_als_pairwise_\d{8}T\d{6}Z\.csv)")));
}

TEST_CASE("worker_threads honours QUADTENSOR_THREADS") {
  const char* old = std::getenv("QUADTENSOR_THREADS");
  const std::string saved = old ? old : "";
  setenv("QUADTENSOR_THREADS", "3", 1);
  CHECK(worker_threads() == 3);
  setenv("QUADTENSOR_THREADS", "zero", 1);
  CHECK(worker_threads() >= 1);
  if (old) {
    setenv("QUADTENSOR_THREADS", saved.c_str(), 1);
  } else {
    unsetenv("QUADTENSOR_THREADS");
  }
}

TEST_CASE("holdout_or_full_error falls back to every entry") {
  const auto K = make_kernel(KernelKind::Pairwise);
  const auto inst = make_instance(3, 1, 27, K, FactorDistribution::StandardNormal, 1, 0);
  std::vector<double> v(inst.dense.values().begin(), inst.dense.values().end());
  for (auto& x : v) x *= 1.1;
  const DenseTensor est(inst.dense.dims(), v);
  CHECK(holdout_or_full_error(inst.dense, est, inst.obs) == doctest::Approx(0.1).epsilon(1e-12));
  const auto part = make_instance(3, 1, 10, K, FactorDistribution::StandardNormal, 1, 0);
  CHECK(holdout_or_full_error(part.dense, est, part.obs) == relative_test_error(part.dense, est, part.obs));
}

TEST_CASE("generalization gap is full minus training error") {
  const auto K = make_kernel(KernelKind::Pairwise);
  const auto inst = make_instance(4, 1, 20, K, FactorDistribution::StandardNormal, 2, 0);
  const DenseTensor zero(inst.dense.dims());
  const auto gap = generalization_gap(inst.dense, zero, inst.obs);
  double train = 0.0;
  for (const auto& e : inst.obs.entries()) train += e.value * e.value;
  CHECK(gap.train_mse == doctest::Approx(train / 20.0));
  CHECK(gap.full_mse == doctest::Approx(mean_squared_error_full(inst.dense, zero)));
  CHECK(gap.gap == doctest::Approx(gap.full_mse - gap.train_mse));

  TrainOptions opts;
  opts.ridge = 1e-6;
  opts.cfg.max_iters = 50;
  const auto g = generalization_gap(8, 2, 4.0, opts, 3);
  CHECK(g.train_mse >= 0.0);
  CHECK(g.full_mse >= 0.0);
}

TEST_CASE("regularization defaults") {
  const ObservationSet obs(TensorDims::cube(3), {{{0, 0, 0}, -6.0}, {{1, 1, 1}, 3.0}});
  TrainOptions opts;
  auto reg = resolve_regularization(obs, opts, 4);
  CHECK(reg.alpha == 2.0);
  CHECK(reg.rank == 4);
  const auto def = default_lambdas(2.0, 3.0, 2.0);
  CHECK(reg.lambda1 == doctest::Approx(def.lambda1));
  CHECK(reg.lambda2 == doctest::Approx(def.lambda2));
  reg = resolve_regularization(obs, opts, 4, 5.0);
  CHECK(reg.alpha == 5.0);
  opts.alpha = 1.5;
  opts.lambda_scale = 0.5;
  opts.lambda2 = 0.25;
  reg = resolve_regularization(obs, opts, 4, 5.0);
  CHECK(reg.alpha == 1.5);
  CHECK(reg.lambda1 == doctest::Approx(0.5 * default_lambdas(1.5, 3.0, 2.0).lambda1));
  CHECK(reg.lambda2 == 0.25);
  opts.lambda_scale = -1.0;
  CHECK_THROWS_AS(resolve_regularization(obs, opts, 4), InvalidArgument);
}

TEST_CASE("train dispatches to every solver") {
  const auto K = make_kernel(KernelKind::Pairwise);
  const auto inst = make_instance(5, 2, 60, K, FactorDistribution::StandardNormal, 4, 0);
  TrainOptions opts;
  opts.cfg.max_iters = 5;
  opts.cfg.step_size = 0.01;
  for (auto kind : {SolverKind::Als, SolverKind::Gd, SolverKind::Fw, SolverKind::CpAls}) {
    opts.solver = kind;
    const auto out = train(inst.obs, K, opts, 2, inst.truth.alpha);
    CHECK(out.model.has_value() != out.cp_model.has_value());
    CHECK(out.cp_model.has_value() == (kind == SolverKind::CpAls));
    const auto T = out.reconstruct();
    CHECK(T[{1, 2, 3}] == doctest::Approx(out.predict({1, 2, 3})).epsilon(1e-10));
    if (kind == SolverKind::Gd) CHECK(out.rank == overparameterized_rank(60, inst.obs.dims()));
    if (kind == SolverKind::Als || kind == SolverKind::CpAls) CHECK(out.rank == 2);
  }
  opts.solver = SolverKind::Als;
  CHECK_THROWS_AS(train(inst.obs, K, opts), InvalidArgument);
}

TEST_CASE("convergence trace records test error at every iteration") {
  TrainOptions opts;
  opts.ridge = 1e-4;
  opts.cfg.max_iters = 8;
  opts.cfg.tol = 0.0;
  const auto tr = convergence_trace(8, 2, 4.0, opts, 1);
  REQUIRE(tr.test_error_trace.size() == 9);
  for (double e : tr.test_error_trace) CHECK_FALSE(std::isnan(e));
}

TEST_CASE("model comparison picks lambdas from the grid") {
  SolverConfig cfg;
  cfg.max_iters = 30;
  const std::vector<double> grid{1e-4, 1e-2};
  const auto rep = cp_vs_quadratic(TruthKind::Quadratic, 8, 2, 6.0, grid, cfg, 1);
  CHECK(std::find(grid.begin(), grid.end(), rep.first.best_lambda) != grid.end());
  CHECK(std::find(grid.begin(), grid.end(), rep.second.best_lambda) != grid.end());
  CHECK(std::isfinite(rep.first.test_error));
  CHECK(std::isfinite(rep.second.test_error));
  const auto again = cp_vs_quadratic(TruthKind::Quadratic, 8, 2, 6.0, grid, cfg, 1);
  CHECK(again.first.test_error == rep.first.test_error);
  CHECK_THROWS_AS(cp_vs_quadratic(TruthKind::CP, 8, 2, 6.0, {}, cfg, 1), InvalidArgument);
}

TEST_CASE("find_stable_step halves until gradient descent is stable") {
  const auto K = make_kernel(KernelKind::Pairwise);
  const auto inst = make_instance(5, 2, 60, K, FactorDistribution::StandardNormal, 5, 0);
  RegularizationConfig reg;
  reg.alpha = inst.truth.alpha;
  reg.rank = 6;
  SolverConfig cfg;
  const double step = find_stable_step(inst.obs, K, reg, cfg, 1024.0, 50);
  CHECK(step < 1024.0);
  CHECK(std::log2(1024.0 / step) == doctest::Approx(std::round(std::log2(1024.0 / step))));
  cfg.max_iters = 50;
  cfg.step_size = step;
  cfg.tol = 0.0;
  const auto res = gd_solve(inst.obs, K, reg, cfg);
  for (std::size_t i = 2; i < res.objective_trace.size(); ++i) {
    CHECK(res.objective_trace[i] <= res.objective_trace[i - 1]);
  }
  CHECK_THROWS_AS(find_stable_step(inst.obs, K, reg, cfg, 0.0, 5), InvalidArgument);
}
