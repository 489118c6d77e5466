#include "sgdlab/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "sgdlab/config.hpp"
#include "sgdlab/harness.hpp"
#include "sgdlab/io.hpp"

namespace sgdlab {

namespace {

namespace fs = std::filesystem;

// Options shared by the config-driven subcommands.
struct Common {
  std::string config;
  std::string manifest;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string output_dir = ".";
  bool json = false;
};

void add_common(CLI::App* cmd, Common& c, bool with_manifest) {
  auto* cfg = cmd->add_option("config", c.config, "Experiment config file");
  if (with_manifest) {
    auto* man = cmd->add_option("--from-manifest", c.manifest,
                                "Replay the config recorded in a manifest.json");
    cfg->excludes(man);
  } else {
    cfg->required();
  }
  cmd->add_option("--set", c.overrides, "Override as section.key=value")
      ->take_all()
      ->allow_extra_args(false);
  cmd->add_option("--seed", c.seed, "Master seed (overrides run.seed)");
  cmd->add_option("-o,--output-dir", c.output_dir, "Directory for output files");
  cmd->add_flag("--json", c.json, "Print machine-readable JSON to stdout");
}

ExperimentConfig resolve(const Common& c) {
  std::string text;
  try {
    if (!c.manifest.empty()) {
      text = to_config_text(config_from_manifest(read_file(c.manifest)));
    } else if (!c.config.empty()) {
      text = read_file(c.config);
    } else {
      throw ConfigError("a config file or --from-manifest is required");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  ConfigDoc doc = parse_config_text(text);
  for (const std::string& o : c.overrides) apply_override(doc, o);
  if (c.seed) doc.set("run", "seed", std::to_string(*c.seed));
  return to_experiment_config(doc);
}

// Writes all files or none: anything written before a failure is removed.
void write_outputs(const std::string& dir,
                   const std::vector<std::pair<std::string, std::string>>& files) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "'");
  std::vector<fs::path> written;
  try {
    for (const auto& [name, body] : files) {
      const fs::path path = fs::path(dir) / name;
      write_file(path.string(), body);
      written.push_back(path);
    }
  } catch (const std::runtime_error& e) {
    for (const fs::path& p : written) fs::remove(p, ec);
    throw ConfigError(e.what());
  }
}

std::string classify_json(const PowerSchedule& s, const ScheduleClass& sc,
                          const PartialSumReport& r) {
  nlohmann::ordered_json j;
  j["alpha"] = {{"c", s.coeff_alpha}, {"a", s.exp_alpha}};
  j["mu"] = {{"m", s.coeff_mu}, {"b", s.exp_mu}};
  j["diverges"] = sc.diverges;
  j["square_summable"] = sc.square_summable;
  j["thm22_condition"] = sc.tail_product_vanishes;
  j["damping_admissible"] = sc.damping_admissible;
  j["l_mu"] = sc.l_mu;
  j["partial_sums"] = {{"horizon", r.horizon},
                       {"sum_alpha", r.sum_alpha},
                       {"sum_alpha_sq", r.sum_alpha_sq},
                       {"tail_product", r.tail_product},
                       {"ratio_alpha_mu", r.ratio_alpha_mu},
                       {"sum_alpha_mu", r.sum_alpha_mu}};
  return j.dump(2);
}

std::string classify_table(const PowerSchedule& s, const ScheduleClass& sc,
                           const PartialSumReport& r) {
  const auto b = [](bool v) { return v ? "true" : "false"; };
  std::string t;
  t += fmt::format("{:<20}alpha_k = {} k^-{}\n", "schedule", s.coeff_alpha, s.exp_alpha);
  if (s.has_damping()) {
    t += fmt::format("{:<20}mu_k = {} k^-{}\n", "", s.coeff_mu, s.exp_mu);
  }
  t += fmt::format("{:<20}{}\n", "diverges", b(sc.diverges));
  t += fmt::format("{:<20}{}\n", "square_summable", b(sc.square_summable));
  t += fmt::format("{:<20}{}\n", "thm22_condition", b(sc.tail_product_vanishes));
  t += fmt::format("{:<20}{}\n", "damping_admissible", b(sc.damping_admissible));
  t += fmt::format("{:<20}{}\n", "l_mu", sc.l_mu);
  t += fmt::format("partial sums to n = {}\n", r.horizon);
  t += fmt::format("  {:<18}{:.6g}\n", "sum alpha", r.sum_alpha);
  t += fmt::format("  {:<18}{:.6g}\n", "sum alpha^2", r.sum_alpha_sq);
  t += fmt::format("  {:<18}{:.6g}\n", "alpha_n sum a^2", r.tail_product);
  if (s.has_damping()) {
    t += fmt::format("  {:<18}{:.6g}\n", "alpha_n / mu_n", r.ratio_alpha_mu);
    t += fmt::format("  {:<18}{:.6g}\n", "sum alpha mu", r.sum_alpha_mu);
  }
  return t;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"sgdlab: stochastic optimization experiments"};
  app.name("sgdlab");
  app.require_subcommand(1);

  // classify
  auto* classify_cmd = app.add_subcommand("classify", "Classify a power-law schedule");
  double alpha_c = 1.0, alpha_a = 1.0, mu_m = 0.0, mu_b = 0.0;
  std::uint64_t probe_horizon = 1000000;
  bool classify_json_flag = false;
  classify_cmd->add_option("--alpha-c", alpha_c, "Step coefficient c")->required();
  classify_cmd->add_option("--alpha-a", alpha_a, "Step exponent a")->required();
  classify_cmd->add_option("--mu-m", mu_m, "Damping coefficient m");
  classify_cmd->add_option("--mu-b", mu_b, "Damping exponent b");
  classify_cmd->add_option("--horizon", probe_horizon, "Partial-sum horizon");
  classify_cmd->add_flag("--json", classify_json_flag, "Print JSON");

  // run
  auto* run_cmd = app.add_subcommand("run", "Single trajectory");
  Common run_opts;
  add_common(run_cmd, run_opts, false);

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "Monte Carlo experiment");
  Common exp_opts;
  bool exp_plot = false;
  add_common(exp_cmd, exp_opts, true);
  exp_cmd->add_flag("--plot", exp_plot, "Also write curve.svg");

  // lyapunov
  auto* lyap_cmd = app.add_subcommand("lyapunov", "Lyapunov descent report");
  Common lyap_opts;
  std::optional<std::uint64_t> burn_in;
  add_common(lyap_cmd, lyap_opts, false);
  lyap_cmd->add_option("--burn-in", burn_in, "Burn-in iterations (default horizon/20)");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Grid over methods and exponents");
  Common sweep_opts;
  std::vector<std::string> sweep_methods;
  std::vector<double> sweep_a, sweep_b;
  add_common(sweep_cmd, sweep_opts, false);
  sweep_cmd->add_option("--methods", sweep_methods, "Methods")->delimiter(',');
  sweep_cmd->add_option("--alpha-a", sweep_a, "Step exponents")->delimiter(',');
  sweep_cmd->add_option("--mu-b", sweep_b, "Damping exponents")->delimiter(',');

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "Render estimates.csv as curve.svg");
  std::string plot_input;
  std::string plot_dir = ".";
  plot_cmd->add_option("estimates", plot_input, "estimates.csv")->required();
  plot_cmd->add_option("-o,--output-dir", plot_dir, "Directory for curve.svg");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (classify_cmd->parsed()) {
      const PowerSchedule s = make_power_schedule(alpha_c, alpha_a, mu_m, mu_b);
      if (probe_horizon < 10) throw ConfigError("--horizon must be at least 10");
      const ScheduleClass sc = classify(s);
      PartialSumReport r;
      try {
        r = numeric_probe(s, probe_horizon);
      } catch (const std::overflow_error& e) {
        throw ConfigError(e.what());
      }
      out << (classify_json_flag ? classify_json(s, sc, r) + "\n"
                                 : classify_table(s, sc, r));
      return kExitOk;
    }

    if (run_cmd->parsed()) {
      const ExperimentConfig cfg = resolve(run_opts);
      const Problem p = make_problem(cfg.problem);
      GradientOracle oracle = make_oracle(cfg, p);
      const RunOptions ro = single_run_options(cfg, p);
      Trajectory t;
      try {
        t = run(ro, p, oracle, cfg.master_seed);
      } catch (const DivergenceError& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
      }
      const std::string json = trajectory_json(t);
      write_outputs(run_opts.output_dir,
                    {{"trajectory.csv", trajectory_csv(t)}, {"trajectory.json", json}});
      if (run_opts.json) out << json << "\n";
      return kExitOk;
    }

    if (exp_cmd->parsed()) {
      const ExperimentConfig cfg = resolve(exp_opts);
      const MonteCarloEstimate est = run_experiment(cfg);
      const std::string csv = estimates_csv(est);
      const std::string summary = summary_json(est);
      std::vector<std::pair<std::string, std::string>> files{
          {"estimates.csv", csv},
          {"summary.json", summary + "\n"},
          {"manifest.json", manifest_json(cfg)}};
      if (exp_plot) files.emplace_back("curve.svg", render_svg(parse_estimates_csv(csv)));
      write_outputs(exp_opts.output_dir, files);
      if (exp_opts.json) out << summary << "\n";
      return kExitOk;
    }

    if (lyap_cmd->parsed()) {
      ExperimentConfig cfg = resolve(lyap_opts);
      cfg.lyapunov = true;
      const MonteCarloEstimate est = run_experiment(cfg);
      const std::vector<DescentPoint> series = descent_series(est);
      const DescentFit fit = descent_fit(series, cfg.schedule,
                                         burn_in.value_or(cfg.horizon / 20),
                                         est.lyapunov_mode);
      const std::string json = to_json(fit);
      write_outputs(lyap_opts.output_dir, {{"lyapunov.csv", lyapunov_csv(est)},
                                           {"descent.json", json + "\n"},
                                           {"manifest.json", manifest_json(cfg)}});
      if (lyap_opts.json) out << json << "\n";
      return kExitOk;
    }

    if (sweep_cmd->parsed()) {
      const ExperimentConfig base = resolve(sweep_opts);
      std::vector<Method> methods;
      for (const std::string& m : sweep_methods) methods.push_back(parse_method(m));
      if (methods.empty()) methods.push_back(base.method);
      if (sweep_a.empty()) sweep_a.push_back(base.schedule.exp_alpha);
      if (sweep_b.empty()) sweep_b.push_back(base.schedule.exp_mu);
      std::vector<ExperimentConfig> grid;
      for (Method m : methods) {
        for (double a : sweep_a) {
          for (double b : sweep_b) {
            ExperimentConfig c = base;
            c.method = m;
            c.schedule = make_power_schedule(base.schedule.coeff_alpha, a,
                                             base.schedule.coeff_mu, b);
            grid.push_back(c);
          }
        }
      }
      const std::vector<SweepRow> rows = sweep(grid);
      const std::string csv = sweep_csv(rows);
      write_outputs(sweep_opts.output_dir, {{"sweep.csv", csv}});
      if (sweep_opts.json) {
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const SweepRow& r : rows) {
          nlohmann::ordered_json row{{"method", to_string(r.method)},
                                     {"a", r.a},
                                     {"b", r.b},
                                     {"ok", r.ok}};
          if (r.ok && r.final) {
            row["mean_grad_sq"] = r.final->mean_grad_sq;
            row["mean_gap"] = r.final->mean_gap;
          } else {
            row["error"] = r.error;
          }
          j.push_back(row);
        }
        out << j.dump(2) << "\n";
      }
      const bool any_ok =
          std::any_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.ok; });
      return any_ok ? kExitOk : kExitFailure;
    }

    if (plot_cmd->parsed()) {
      std::string text;
      try {
        text = read_file(plot_input);
      } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
      }
      write_outputs(plot_dir, {{"curve.svg", render_svg(parse_estimates_csv(text))}});
      return kExitOk;
    }
  } catch (const ExperimentFailure& e) {
    err << "experiment failed: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace sgdlab
