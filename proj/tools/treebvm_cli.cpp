#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "treebvm/approx.hpp"
#include "treebvm/bvm.hpp"
#include "treebvm/config.hpp"
#include "treebvm/dataset.hpp"
#include "treebvm/errors.hpp"
#include "treebvm/mcmc.hpp"
#include "treebvm/report.hpp"
#include "treebvm/rng.hpp"

namespace fs = std::filesystem;
using namespace treebvm;
using nlohmann::json;

namespace {

struct SubOptions {
  std::string config_path;
  std::vector<std::string> sets;
  int threads = 0;
  CLI::Option* threads_opt = nullptr;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("read failed for " + path);
  return buffer.str();
}

int env_threads() {
  const char* value = std::getenv("TREEBVM_THREADS");
  if (!value) return 0;
  const long parsed = std::strtol(value, nullptr, 10);
  return parsed > 0 ? static_cast<int>(parsed) : 0;
}

// Artifact bookkeeping: writes relative to the output directory and remembers
// each path for the report envelope.
struct Artifacts {
  fs::path dir;
  std::vector<std::pair<std::string, std::string>> entries;

  std::string write(const std::string& name, const std::string& filename,
                    const std::string& text) {
    const std::string path = (dir / filename).string();
    write_text_file(path, text);
    entries.emplace_back(name, path);
    std::cout << "wrote " << path << "\n";
    return path;
  }

  void record(const std::string& name, const std::string& path) {
    entries.emplace_back(name, path);
    std::cout << "wrote " << path << "\n";
  }
};

void write_report(Artifacts& artifacts, const std::string& mode,
                  const ExperimentConfig& config, const std::string& payload) {
  const std::string path = (artifacts.dir / "report.json").string();
  artifacts.entries.emplace_back("report", path);
  write_text_file(path, report_envelope(mode, experiment_config_to_json(config), payload,
                                        artifacts.entries));
  std::cout << "wrote " << path << "\n";
}

int run_generate(const ExperimentConfig& config, Artifacts& artifacts) {
  const Dataset design = make_grid_design(config.n, config.p);
  const auto [data, truth] = generate_responses(design, config.dataset_family, config.alpha,
                                                config.dataset_seed, config.const_value);
  const std::string json_path = (artifacts.dir / "dataset.json").string();
  save_dataset_json(data, truth, json_path);
  artifacts.record("dataset_json", json_path);
  const std::string csv_path = (artifacts.dir / "dataset.csv").string();
  save_dataset_csv(data, truth, csv_path);
  artifacts.record("dataset_csv", csv_path);
  const json payload = {{"n", data.n}, {"p", data.p}, {"family", config.dataset_family},
                        {"alpha", config.alpha},      {"seed", config.dataset_seed}};
  write_report(artifacts, "generate", config, payload.dump(2) + "\n");
  return 0;
}

int run_sample(const ExperimentConfig& config, Artifacts& artifacts) {
  const Dataset design = make_grid_design(config.n, config.p);
  const auto [data, truth] = generate_responses(design, config.dataset_family, config.alpha,
                                                config.dataset_seed, config.const_value);
  (void)truth;
  const FunctionalWeight weight = make_weight(design, config.weight_family, config.gamma);
  const SamplerConfig sampler = sampler_from(config);
  validate_sampler_config(sampler, data);

  const std::string draws_path = (artifacts.dir / "draws.csv").string();
  DrawsCsvWriter csv(draws_path, config.n_trees);
  std::unique_ptr<ForestJsonlWriter> forests;
  std::string forests_path;
  if (config.write_forests) {
    forests_path = (artifacts.dir / "forests.jsonl").string();
    forests = std::make_unique<ForestJsonlWriter>(forests_path);
  }
  const ChainDiagnostics diag =
      run_chain_stream(sampler, data, &weight, [&](const PosteriorDraw& draw) {
        csv.add(draw);
        if (forests) forests->add(draw);
      });
  csv.close();
  artifacts.record("draws", draws_path);
  if (forests) {
    forests->close();
    artifacts.record("forests", forests_path);
  }
  write_report(artifacts, "sample", config, diagnostics_to_json(diag));
  std::cout << "draws=" << diag.draws_emitted << " ess_psi=" << diag.ess_psi << "\n";
  return 0;
}

int run_bvm_mode(const ExperimentConfig& config, Artifacts& artifacts) {
  const BvmReport report = run_bvm_experiment(bvm_config_from(config));
  artifacts.write("tau_histogram", "tau_histogram.csv",
                  tau_histogram_csv(report.tau_draws, report.V0));
  artifacts.write("tau_qq", "tau_qq.csv", tau_qq_csv(report.tau_draws, report.V0));
  if (config.write_svg)
    artifacts.write("tau_svg", "tau.svg", tau_svg(report.tau_draws, report.V0));
  write_report(artifacts, "bvm", config, bvm_report_to_json(report));
  std::cout << "ks=" << report.ks_stat << " w1=" << report.w1_stat
            << " ess_psi=" << report.ess_psi << (report.conclusive ? "" : " (inconclusive)")
            << "\n";
  return report.conclusive ? 0 : 3;
}

int run_coverage(const ExperimentConfig& config, Artifacts& artifacts) {
  const CoverageResult result = coverage_experiment(coverage_config_from(config));
  write_report(artifacts, "coverage", config, coverage_result_to_json(result));
  std::cout << "coverage=" << result.empirical_coverage << " (" << result.hits << "/"
            << result.n_reps << ") min_ess=" << result.min_ess << "\n";
  return result.min_ess >= config.min_ess ? 0 : 3;
}

int run_selfsim(const ExperimentConfig& config, Artifacts& artifacts) {
  const Dataset design = make_grid_design(config.n, config.p);
  const auto [data, truth] = generate_responses(design, config.dataset_family, config.alpha,
                                                config.dataset_seed, config.const_value);
  (void)data;
  Rng rng(config.chain_seed);
  const SelfSimCertificate cert = self_similarity_certificate(
      design, truth, config.alpha, config.M, config.D, config.selfsim_budget, rng);
  write_report(artifacts, "selfsim", config, selfsim_certificate_to_json(cert));
  std::cout << "verdict=" << (cert.verdict ? "true" : "false") << " min_ratio=" << cert.min_ratio
            << " tested=" << cert.tested_partitions << "\n";
  return 0;
}

int run_concentration(const ExperimentConfig& config, Artifacts& artifacts) {
  const std::vector<ConcentrationRow> rows =
      laplace_concentration_check(config.n_grid, concentration_config_from(config));
  write_report(artifacts, "concentration", config, concentration_rows_to_json(rows));
  bool conclusive = true;
  for (const ConcentrationRow& row : rows) {
    std::cout << "n=" << row.n << " mean_error=" << row.mean_error << " ratio=" << row.ratio
              << " ess=" << row.ess << "\n";
    if (row.ess < config.min_ess) conclusive = false;
  }
  return conclusive ? 0 : 3;
}

int run_regularity(const ExperimentConfig& config, Artifacts& artifacts) {
  const Dataset design = make_grid_design(config.n, config.p);
  const RegularityVerdict verdict =
      check_design_regularity(design, config.regularity_max_s, config.M);
  write_report(artifacts, "regularity", config, regularity_verdict_to_json(verdict));
  std::cout << "regular=" << (verdict.regular ? "true" : "false") << "\n";
  return 0;
}

int run_validate(const SubOptions& opt) {
  std::string text = read_file(opt.config_path);
  text = apply_overrides(text, opt.sets);
  const std::vector<std::string> diags = validate_experiment_json(text);
  for (const std::string& diag : diags) std::cout << diag << "\n";
  if (diags.empty()) std::cout << "config ok\n";
  return diags.empty() ? 0 : 2;
}

int execute(const std::string& mode, const SubOptions& opt) {
  if (mode == "validate") return run_validate(opt);

  std::string text = read_file(opt.config_path);
  std::vector<std::string> sets = opt.sets;
  sets.push_back("experiment.mode=" + mode);  // the subcommand decides the mode
  text = apply_overrides(text, sets);
  const std::vector<std::string> diags = validate_experiment_json(text);
  if (!diags.empty()) {
    for (const std::string& diag : diags) std::cerr << diag << "\n";
    return 2;
  }
  ExperimentConfig config = parse_experiment_config(text);

  // --threads beats TREEBVM_THREADS beats the config file.
  int threads = config.threads;
  if (opt.threads_opt && opt.threads_opt->count() > 0)
    threads = opt.threads;
  else if (env_threads() > 0)
    threads = env_threads();
  config.threads = threads > 0 ? threads : 1;

  Artifacts artifacts{fs::path(config.out_dir), {}};
  fs::create_directories(artifacts.dir);
  if (mode == "generate") return run_generate(config, artifacts);
  if (mode == "sample") return run_sample(config, artifacts);
  if (mode == "bvm") return run_bvm_mode(config, artifacts);
  if (mode == "coverage") return run_coverage(config, artifacts);
  if (mode == "selfsim") return run_selfsim(config, artifacts);
  if (mode == "concentration") return run_concentration(config, artifacts);
  if (mode == "regularity") return run_regularity(config, artifacts);
  std::cerr << "unknown mode " << mode << "\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian tree-ensemble posterior experiments"};
  app.require_subcommand(1);

  const std::vector<std::string> modes = {"generate",      "sample",  "bvm",
                                          "coverage",      "selfsim", "concentration",
                                          "regularity",    "validate"};
  const std::vector<std::string> briefs = {
      "write a simulated dataset (JSON + CSV)",
      "run one chain and stream draws to CSV",
      "centered-functional experiment with distance-to-Gaussian report",
      "repeated credible-interval coverage experiment",
      "self-similarity certificate for the configured truth",
      "posterior contraction table over experiment.n_grid",
      "design regularity check over split depths",
      "check a config file and list diagnostics without running"};

  std::vector<SubOptions> options(modes.size());
  std::vector<CLI::App*> subs(modes.size());
  for (std::size_t i = 0; i < modes.size(); ++i) {
    CLI::App* sub = app.add_subcommand(modes[i], briefs[i]);
    sub->add_option("config", options[i].config_path, "experiment config JSON file")
        ->required();
    sub->add_option("--set", options[i].sets,
                    "dotted-path override, e.g. --set dataset.seed=7");
    if (modes[i] != "validate")
      options[i].threads_opt = sub->add_option(
          "--threads", options[i].threads, "worker threads (default: env TREEBVM_THREADS)");
    subs[i] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (std::size_t i = 0; i < modes.size(); ++i) {
    if (!app.got_subcommand(subs[i])) continue;
    try {
      return execute(modes[i], options[i]);
    } catch (const TooFewDraws& e) {
      std::cerr << "inconclusive: " << e.what() << "\n";
      return 3;
    } catch (const IoError& e) {
      std::cerr << "io error: " << e.what() << "\n";
      return 1;
    } catch (const NumericalFailure& e) {
      std::cerr << "numerical failure: " << e.what() << "\n";
      return 1;
    } catch (const Error& e) {
      std::cerr << "invalid run: " << e.what() << "\n";
      return 2;
    } catch (const fs::filesystem_error& e) {
      std::cerr << "io error: " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}
