#include "quadtensor/cli.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "quadtensor/errors.hpp"
#include "quadtensor/harness.hpp"
#include "quadtensor/io.hpp"
#include "quadtensor/model.hpp"
#include "quadtensor/solvers.hpp"

namespace quadtensor {

namespace {

struct Logger {
  std::ostream& out = std::cout;
  template <class... Args>
  void operator()(const Args&... args) const {
    (out << ... << args) << '\n';
  }
};

std::vector<double> as_doubles(const std::vector<std::string>& in) {
  std::vector<double> out;
  for (const auto& s : in) out.push_back(std::stod(s));
  return out;
}

std::optional<TensorDims> dims_from(const std::vector<std::size_t>& v) {
  if (v.empty()) return std::nullopt;
  if (v.size() != 3) throw InvalidArgument("--dims takes exactly three values");
  TensorDims dims{v[0], v[1], v[2]};
  dims.validate();
  return dims;
}

FactorDistribution parse_distribution(const std::string& name) {
  if (name == "normal") return FactorDistribution::StandardNormal;
  if (name == "scaled") return FactorDistribution::NormalScaledInvD;
  throw InvalidArgument("unknown distribution '" + name + "' (expected normal or scaled)");
}

std::size_t default_max_iters(SolverKind kind) {
  switch (kind) {
    case SolverKind::Gd: return 20000;
    case SolverKind::Fw: return 2000;
    default: return 100;
  }
}

// Solver knobs shared by train, sweep and audit.
struct SolverFlags {
  std::string solver = "als";
  std::string rank = "auto";
  double ridge = 1e-4;
  double alpha = 0.0;
  double lambda1 = -1.0;
  double lambda2 = -1.0;
  double lambda_scale = 1.0;
  std::uint64_t perturbation_seed = 0;
  std::size_t max_iters = 0;
  double tol = 1e-8;
  double step = 0.1;
  bool no_line_search = false;
  std::size_t inface_steps = 10;
  std::uint64_t seed = 0;

  void add_to(CLI::App* app, bool with_solver) {
    if (with_solver) {
      app->add_option("--solver", solver, "als, gd, fw or cp-als")
          ->check(CLI::IsMember({"als", "gd", "fw", "cp-als"}))
          ->capture_default_str();
    }
    app->add_option("--rank", rank, "factor width R, or 'auto' for ceil(sqrt(2m + 2d))")
        ->capture_default_str();
    app->add_option("--lambda", ridge, "ridge weight for als / cp-als")->capture_default_str();
    app->add_option("--alpha", alpha, "row-norm budget (<= 0: from the data)")->capture_default_str();
    app->add_option("--lambda1", lambda1, "Frobenius weight (< 0: default)")->capture_default_str();
    app->add_option("--lambda2", lambda2, "row-norm penalty weight (< 0: default)")
        ->capture_default_str();
    app->add_option("--lambda-scale", lambda_scale, "multiplier on the default lambdas")
        ->capture_default_str();
    app->add_option("--perturbation-seed", perturbation_seed)->capture_default_str();
    app->add_option("--max-iters", max_iters, "0: solver default (als 100, gd 20000, fw 2000)")
        ->capture_default_str();
    app->add_option("--tol", tol, "relative objective-change tolerance")->capture_default_str();
    app->add_option("--step", step, "gradient descent step size")->capture_default_str();
    app->add_flag("--no-line-search", no_line_search, "fw: use the 2/(k+2) schedule");
    app->add_option("--inface-steps", inface_steps, "fw: refinement steps per iteration")
        ->capture_default_str();
    app->add_option("--seed", seed, "random seed")->capture_default_str();
  }

  /// Solver settings with rank 0 when --rank is "auto".
  TrainOptions options() const {
    TrainOptions opts;
    opts.solver = parse_solver(solver);
    if (rank != "auto") {
      std::size_t r = 0;
      const auto [ptr, ec] = std::from_chars(rank.data(), rank.data() + rank.size(), r);
      if (ec != std::errc() || ptr != rank.data() + rank.size() || r < 1) {
        throw CLI::ValidationError("--rank", "expected a positive integer or 'auto'");
      }
      opts.rank = r;
    }
    opts.ridge = ridge;
    opts.alpha = alpha;
    opts.lambda1 = lambda1;
    opts.lambda2 = lambda2;
    opts.lambda_scale = lambda_scale;
    opts.perturbation_seed = perturbation_seed;
    opts.cfg.max_iters = max_iters > 0 ? max_iters : default_max_iters(opts.solver);
    opts.cfg.tol = tol;
    opts.cfg.step_size = step;
    opts.cfg.line_search = !no_line_search;
    opts.cfg.seed = seed;
    opts.fw.inface_steps = inface_steps;
    return opts;
  }

  /// As options(), resolving "auto" to ceil(sqrt(2m + 2d)) and logging it.
  TrainOptions options(std::size_t m, const TensorDims& dims, const Logger& log) const {
    TrainOptions opts = options();
    if (rank == "auto") {
      if (opts.solver == SolverKind::Fw) {
        log("rank: fw grows its own rank; --rank ignored");
      } else {
        opts.rank = overparameterized_rank(m, dims);
        log("rank auto -> R = ", opts.rank, " (ceil(sqrt(2m + 2d)), m = ", m, ", d = ",
            dims.max_dim(), ")");
      }
    }
    return opts;
  }
};

void save_model(const TrainOutcome& out, const std::string& prefix) {
  if (out.model) {
    save_matrix_csv(out.model->X, prefix + "_X.csv");
    save_matrix_csv(out.model->Y, prefix + "_Y.csv");
    save_matrix_csv(out.model->Z, prefix + "_Z.csv");
  } else {
    save_matrix_csv(out.cp_model->A, prefix + "_A.csv");
    save_matrix_csv(out.cp_model->B, prefix + "_B.csv");
    save_matrix_csv(out.cp_model->C, prefix + "_C.csv");
  }
}

void add_config(CLI::App* app) {
  app->add_option("--config", "flat JSON object of flag values; command-line flags win");
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& flag) {
  for (const auto& a : args) {
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

// Replaces "--config FILE" after the subcommand name by the flags it lists,
// skipping any flag that is also given explicitly.
std::vector<std::string> expand_config(const CLI::App& app, std::vector<std::string> args) {
  if (args.empty()) return args;
  const CLI::App* sub = nullptr;
  for (const CLI::App* candidate : app.get_subcommands({})) {
    if (candidate->get_name() == args[0]) sub = candidate;
  }
  if (sub == nullptr) return args;
  std::string path;
  std::vector<std::string> rest;
  for (std::size_t n = 0; n < args.size(); ++n) {
    if (args[n] == "--config") {
      if (n + 1 >= args.size()) throw CLI::ArgumentMismatch("--config", 1, 0);
      path = args[++n];
    } else if (args[n].rfind("--config=", 0) == 0) {
      path = args[n].substr(9);
    } else {
      rest.push_back(args[n]);
    }
  }
  if (path.empty()) return rest;
  std::map<std::string, std::string> values;
  try {
    values = load_flat_json(path);
  } catch (const std::exception& e) {
    throw CLI::ValidationError("--config", e.what());
  }
  for (const auto& [key, value] : values) {
    const std::string flag = "--" + key;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (opt == nullptr || key == "config") {
      throw CLI::ValidationError("--config", "unknown key '" + key + "' for " + sub->get_name());
    }
    if (given_on_command_line(rest, flag)) continue;
    if (opt->get_expected_max() == 0) {
      if (value == "true") rest.push_back(flag);
      else if (value != "false") throw CLI::ValidationError(flag, "config value must be true or false");
    } else {
      rest.push_back(flag);
      rest.push_back(value);
    }
  }
  return rest;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"quadtensor: quadratic tensor completion experiments"};
  app.name("quadtensor");
  app.require_subcommand(1);
  const Logger log;

  // sample
  auto* sample = app.add_subcommand("sample", "sample observed entries of a random ground truth");
  add_config(sample);
  struct {
    std::size_t d = 0;
    std::vector<std::size_t> dims;
    std::size_t r = 5;
    double c = 0.0;
    std::size_t m = 0;
    std::string kernel = "pairwise";
    std::string distribution = "normal";
    std::uint64_t seed = 0;
    std::string out;
    std::string truth;
    std::string factors;
  } s;
  sample->add_option("--d", s.d, "mode size (cube)");
  sample->add_option("--dims", s.dims, "d1,d2,d3 (overrides --d)")->delimiter(',');
  sample->add_option("--r", s.r, "ground-truth rank")->capture_default_str();
  sample->add_option("--c", s.c, "samples m = c d r");
  sample->add_option("--m", s.m, "number of samples (overrides --c)");
  sample->add_option("--kernel", s.kernel)->capture_default_str();
  sample->add_option("--distribution", s.distribution, "normal or scaled (N(0, 1/d))")
      ->capture_default_str();
  sample->add_option("--seed", s.seed)->capture_default_str();
  sample->add_option("--out", s.out, "observations (COO TSV)")->required();
  sample->add_option("--truth", s.truth, "dense ground truth (COO TSV with every entry)");
  sample->add_option("--factors-prefix", s.factors, "write ground-truth factors <prefix>_{A,B,C}.csv");

  // train
  auto* trainc = app.add_subcommand("train", "train a model on a COO observation file");
  add_config(trainc);
  SolverFlags tf;
  std::string t_input, t_truth, t_prefix, t_kernel = "pairwise";
  std::vector<std::size_t> t_dims;
  std::size_t t_test_every = 1;
  tf.add_to(trainc, true);
  trainc->add_option("--input", t_input, "observations (COO TSV)")->required();
  trainc->add_option("--dims", t_dims, "d1,d2,d3 (default: max index + 1)")->delimiter(',');
  trainc->add_option("--kernel", t_kernel)->capture_default_str();
  trainc->add_option("--truth", t_truth, "dense ground truth for the test-error trace");
  trainc->add_option("--test-every", t_test_every)->capture_default_str();
  trainc->add_option("--out-prefix", t_prefix, "writes <prefix>_{X,Y,Z}.csv and <prefix>_trace.csv")
      ->required();

  // eval
  auto* evalc = app.add_subcommand("eval", "compare trained factors with a dense ground truth");
  add_config(evalc);
  std::string e_prefix, e_truth, e_train, e_out, e_model = "quadratic", e_kernel = "pairwise";
  evalc->add_option("--factors-prefix", e_prefix, "prefix used by train --out-prefix")->required();
  evalc->add_option("--model", e_model, "quadratic or cp")
      ->check(CLI::IsMember({"quadratic", "cp"}))
      ->capture_default_str();
  evalc->add_option("--kernel", e_kernel)->capture_default_str();
  evalc->add_option("--truth", e_truth, "dense ground truth (COO TSV)")->required();
  evalc->add_option("--train", e_train, "training observations, for held-out metrics");
  evalc->add_option("--out", e_out, "write metrics as JSON");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "phase-transition sweep over d and c");
  add_config(sweep);
  SolverFlags sf;
  sf.add_to(sweep, true);
  std::vector<std::size_t> w_d;
  std::vector<std::string> w_c;
  std::size_t w_r = 5, w_repeats = 3, w_threads = 0;
  std::string w_kernel = "pairwise", w_out, w_distribution = "normal";
  bool w_no_timing = false;
  sweep->add_option("--d", w_d, "mode sizes")->delimiter(',')->required();
  sweep->add_option("--c", w_c, "sample ratios, m = c d r")->delimiter(',')->required();
  sweep->add_option("--r", w_r)->capture_default_str();
  sweep->add_option("--repeats", w_repeats)->capture_default_str();
  sweep->add_option("--kernel", w_kernel)->capture_default_str();
  sweep->add_option("--distribution", w_distribution)->capture_default_str();
  sweep->add_option("--threads", w_threads, "0: QUADTENSOR_THREADS or all cores")->capture_default_str();
  sweep->add_option("--out", w_out, "CSV path (default sweep_<solver>_<kernel>_<timestamp>.csv)");
  sweep->add_flag("--no-timing", w_no_timing, "write wall_time_s as 0 for reproducible files");

  // audit
  auto* audit = app.add_subcommand("audit", "gradient descent from many random starts");
  add_config(audit);
  SolverFlags af;
  af.add_to(audit, false);
  std::string a_input, a_truth, a_out, a_kernel = "pairwise";
  std::size_t a_d = 20, a_r = 3, a_inits = 10;
  double a_c = 3.0;
  audit->add_option("--input", a_input, "observations (COO TSV); default: synthetic instance");
  audit->add_option("--truth", a_truth, "dense ground truth for the full-tensor MSE");
  audit->add_option("--d", a_d, "synthetic mode size")->capture_default_str();
  audit->add_option("--r", a_r, "synthetic rank")->capture_default_str();
  audit->add_option("--c", a_c, "synthetic sample ratio")->capture_default_str();
  audit->add_option("--kernel", a_kernel)->capture_default_str();
  audit->add_option("--inits", a_inits)->capture_default_str();
  audit->add_option("--out", a_out, "write the report as JSON");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "convert ratings or COO data to an observation file");
  add_config(ingest);
  std::string i_format = "movielens", i_input, i_out, i_mapping;
  std::size_t i_bin_weeks = 20;
  bool i_log1p = false;
  ingest->add_option("--format", i_format, "movielens or coo")
      ->check(CLI::IsMember({"movielens", "coo"}))
      ->capture_default_str();
  ingest->add_option("--input", i_input)->required();
  ingest->add_option("--bin-weeks", i_bin_weeks)->capture_default_str();
  ingest->add_flag("--log1p", i_log1p, "replace each value v by ln(1 + v)");
  ingest->add_option("--out", i_out, "observations (COO TSV)")->required();
  ingest->add_option("--mapping-prefix", i_mapping, "movielens: write <prefix>_{users,items}.csv");

  if (argc <= 1) {
    std::cout << app.help();
    return 2;
  }
  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(app, std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*sample) {
      const KernelMatrix kernel = parse_kernel(s.kernel);
      TensorDims dims = s.dims.empty() ? TensorDims::cube(s.d) : *dims_from(s.dims);
      dims.validate();
      std::size_t m = s.m;
      if (m == 0) {
        if (!(s.c > 0.0)) throw CLI::ValidationError("sample", "give --m or a positive --c");
        const double total = static_cast<double>(dims.entry_count());
        m = static_cast<std::size_t>(std::clamp(
            std::round(s.c * static_cast<double>(dims.max_dim()) * static_cast<double>(s.r)), 1.0,
            total));
      }
      const auto truth =
          random_ground_truth(dims, s.r, kernel, parse_distribution(s.distribution), derive_seed(s.seed, 1));
      const DenseTensor dense = reconstruct_dense(truth.as_model(), dims.max_dim());
      const auto obs = observe(dense, sample_uniform_entries(dims, m, derive_seed(s.seed, 2)));
      save_coo_tsv(obs, s.out);
      if (!s.truth.empty()) save_dense_tsv(dense, s.truth);
      if (!s.factors.empty()) {
        save_matrix_csv(truth.A, s.factors + "_A.csv");
        save_matrix_csv(truth.B, s.factors + "_B.csv");
        save_matrix_csv(truth.C, s.factors + "_C.csv");
      }
      log("sampled ", m, " of ", dims.entry_count(), " entries (", dims.d1, "x", dims.d2, "x", dims.d3,
          ", r = ", s.r, ", alpha = ", format_double(truth.alpha), ")");
      return 0;
    }

    if (*trainc) {
      const KernelMatrix kernel = parse_kernel(t_kernel);
      const auto obs = load_coo_tsv(t_input, dims_from(t_dims));
      TrainOptions opts = tf.options(obs.size(), obs.dims(), log);
      std::optional<DenseTensor> truth;
      if (!t_truth.empty()) {
        truth = load_dense_tsv(t_truth, obs.dims());
        opts.cfg.truth = &*truth;
        opts.cfg.test_every = t_test_every;
      }
      log("solver ", tf.solver, " on ", obs.size(), " observations of ", obs.dims().d1, "x",
          obs.dims().d2, "x", obs.dims().d3);
      const auto out = train(obs, kernel, opts);
      save_model(out, t_prefix);
      save_trace_csv(out.trace, t_prefix + "_trace.csv");
      log("iterations ", out.trace.iterations_run, " (", to_string(out.trace.termination), "), rank ",
          out.rank);
      log("objective ", format_double(out.trace.objective_trace.back()), ", train_rmse ",
          format_double(out.trace.train_error_trace.back()));
      if (!out.trace.test_error_trace.empty()) {
        log("test_error ", format_double(out.trace.test_error_trace.back()));
      }
      return 0;
    }

    if (*evalc) {
      const DenseTensor truth = load_dense_tsv(e_truth);
      DenseTensor estimate(truth.dims(), truth.dims().max_dim());
      if (e_model == "quadratic") {
        FactorModel model{load_matrix_csv(e_prefix + "_X.csv"), load_matrix_csv(e_prefix + "_Y.csv"),
                          load_matrix_csv(e_prefix + "_Z.csv"), parse_kernel(e_kernel)};
        model.validate();
        if (!(model.dims() == truth.dims())) throw InvalidArgument("factor shapes do not match the truth");
        estimate = reconstruct_dense(model, truth.dims().max_dim());
      } else {
        CPModel model{load_matrix_csv(e_prefix + "_A.csv"), load_matrix_csv(e_prefix + "_B.csv"),
                      load_matrix_csv(e_prefix + "_C.csv")};
        model.validate();
        if (!(model.dims() == truth.dims())) throw InvalidArgument("factor shapes do not match the truth");
        estimate = cp_reconstruct_dense(model, truth.dims().max_dim());
      }
      nlohmann::ordered_json report;
      report["full_mse"] = mean_squared_error_full(truth, estimate);
      if (!e_train.empty()) {
        const auto obs = load_coo_tsv(e_train, truth.dims());
        const auto gap = generalization_gap(truth, estimate, obs);
        report["train_mse"] = gap.train_mse;
        report["gap"] = gap.gap;
        report["relative_test_error"] = holdout_or_full_error(truth, estimate, obs);
      }
      for (const auto& [key, value] : report.items()) log(key, " ", format_double(value.get<double>()));
      if (!e_out.empty()) {
        std::ofstream f(e_out);
        f << report.dump(2) << '\n';
        if (!f) throw std::runtime_error("write failed for " + e_out);
      }
      return 0;
    }

    if (*sweep) {
      SweepSpec spec;
      spec.d_values = w_d;
      spec.c_values = as_doubles(w_c);
      spec.r = w_r;
      spec.repeats = w_repeats;
      spec.seed_base = sf.seed;
      spec.kernel = w_kernel;
      spec.distribution = parse_distribution(w_distribution);
      spec.threads = w_threads;
      // "auto" rank is resolved per cell: r for als / cp-als, ceil(sqrt(2m + 2d)) for gd.
      spec.train = sf.options();
      auto rows = phase_transition_sweep(spec);
      if (w_no_timing) {
        for (auto& row : rows) row.wall_time_s = 0.0;
      }
      const std::string path = w_out.empty() ? default_sweep_filename(sf.solver, w_kernel) : w_out;
      std::ostringstream header;
      header << "solver=" << sf.solver << " kernel=" << w_kernel << " r=" << w_r
             << " repeats=" << w_repeats << " seed=" << sf.seed;
      write_sweep_csv(rows, path, header.str());
      for (const auto& row : rows) {
        log("d ", row.d, " c ", format_double(row.c), " m ", row.m, " median ",
            format_double(row.median_test_error), row.failed ? " (failures: " + row.failure + ")" : "");
      }
      log("wrote ", rows.size(), " rows to ", path);
      return 0;
    }

    if (*audit) {
      const KernelMatrix kernel = parse_kernel(a_kernel);
      std::optional<SyntheticInstance> inst;
      std::optional<ObservationSet> loaded;
      std::optional<DenseTensor> truth;
      double truth_alpha = 0.0;
      if (a_input.empty()) {
        inst = make_instance(a_d, a_r, sample_count(a_d, a_r, a_c), kernel,
                             FactorDistribution::StandardNormal, af.seed, 0);
        truth_alpha = inst->truth.alpha;
      } else {
        loaded = load_coo_tsv(a_input);
        if (!a_truth.empty()) truth = load_dense_tsv(a_truth, loaded->dims());
      }
      const ObservationSet& obs = inst ? inst->obs : *loaded;
      SolverFlags flags = af;
      flags.solver = "gd";
      TrainOptions opts = flags.options(obs.size(), obs.dims(), log);
      if (inst) opts.cfg.truth = &inst->dense;
      if (truth) opts.cfg.truth = &*truth;
      const RegularizationConfig reg = resolve_regularization(obs, opts, opts.rank, truth_alpha);
      const auto report = multi_init_audit(obs, kernel, reg, a_inits, opts.cfg);
      nlohmann::ordered_json j;
      j["rank"] = report.rank;
      j["rank_threshold"] = report.rank_threshold;
      j["below_threshold"] = report.below_threshold;
      j["final_objectives"] = report.final_objectives;
      j["objective_min"] = report.objective_min;
      j["objective_max"] = report.objective_max;
      j["objective_spread"] = report.objective_spread;
      if (!report.full_mse.empty()) {
        j["full_mse"] = report.full_mse;
        j["mse_min"] = report.mse_min;
        j["mse_max"] = report.mse_max;
        j["mse_spread"] = report.mse_spread;
      }
      log(j.dump(2));
      if (!a_out.empty()) {
        std::ofstream f(a_out);
        f << j.dump(2) << '\n';
        if (!f) throw std::runtime_error("write failed for " + a_out);
      }
      return 0;
    }

    if (*ingest) {
      std::optional<ObservationSet> obs;
      if (i_format == "movielens") {
        auto data = load_movielens(i_input, i_bin_weeks);
        if (!i_mapping.empty()) save_movielens_mapping(data, i_mapping);
        log("users ", data.user_ids.size(), ", movies ", data.item_ids.size(), ", time bins ",
            data.obs.dims().d3, ", ratings ", data.obs.size());
        obs = std::move(data.obs);
      } else {
        obs = load_coo_tsv(i_input);
      }
      if (i_log1p) obs = log1p_normalize(*obs);
      save_coo_tsv(*obs, i_out);
      log("wrote ", obs->size(), " entries to ", i_out);
      return 0;
    }
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace quadtensor
