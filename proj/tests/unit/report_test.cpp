#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "treebvm/config.hpp"
#include "treebvm/dataset.hpp"
#include "treebvm/errors.hpp"
#include "treebvm/mcmc.hpp"
#include "treebvm/partition.hpp"
#include "treebvm/report.hpp"
#include "treebvm/rng.hpp"
#include "treebvm/stats.hpp"

using namespace treebvm;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::filesystem::path scratch_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "treebvm_report_test";
  std::filesystem::create_directories(dir);
  return dir;
}

std::pair<std::vector<PosteriorDraw>, Dataset> small_run(int n_trees) {
  const Dataset design = make_grid_design(16, 1);
  auto [data, truth] = generate_responses(design, "f0_lipschitz", 1.0, 5150);
  (void)truth;
  const FunctionalWeight weight = make_weight(design, "one", 1.0);
  SamplerConfig config;
  config.tree_prior.family = TreePriorSpec::Family::galton_watson;
  config.tree_prior.gw = make_chipman_prior(0.9, 2.0);
  config.leaf_prior = n_trees > 1 ? make_gaussian_scaled_leaf_prior()
                                  : make_gaussian_leaf_prior(1.0);
  config.n_trees = n_trees;
  config.iterations = 120;
  config.burn_in = 40;
  config.thin = 2;
  config.seed = 2024;
  auto [draws, diag] = run_chain(config, data, &weight);
  (void)diag;
  REQUIRE(draws.size() == 40);
  return {std::move(draws), data};
}

}  // namespace

TEST_CASE("report envelope embeds config, hash, result, and artifacts") {
  ExperimentConfig config;
  config.dataset_seed = 7;
  const std::string config_json = experiment_config_to_json(config);
  const std::string payload = "{\"ks\": 0.05, \"w1\": 0.1}\n";
  const std::string text = report_envelope("bvm", config_json, payload,
                                           {{"report", "out/report.json"},
                                            {"draws", "out/draws.csv"}});
  const json doc = json::parse(text);
  CHECK(doc.at("mode") == "bvm");
  CHECK(doc.at("config").at("dataset").at("seed") == 7);
  CHECK(doc.at("config_hash") == git_blob_sha1(config_json));
  CHECK(doc.at("result").at("ks") == 0.05);
  CHECK(doc.at("artifacts").at("draws") == "out/draws.csv");
  // distinct configs hash differently
  config.dataset_seed = 8;
  CHECK(doc.at("config_hash") != git_blob_sha1(experiment_config_to_json(config)));
}

TEST_CASE("payload serializers expose every field") {
  BvmReport report;
  report.n = 256;
  report.alpha = 1.0;
  report.gamma = 0.5;
  report.V0 = 1.0;
  report.tau_draws = {0.1, -0.2, 0.3};
  report.ks_stat = 0.04;
  report.w1_stat = 0.08;
  report.centering_mode = CenteringMode::global_psi_n;
  report.concentration.frac_regular = 0.95;
  report.concentration.frac_small_k = 0.9;
  report.concentration.frac_both = 0.88;
  report.concentration.k_n = 12;
  report.ess_psi = 812.0;
  report.conclusive = true;
  report.diagnostics.acceptance_rates.grow = 0.3;
  report.diagnostics.draws_emitted = 3;

  json doc = json::parse(bvm_report_to_json(report));
  CHECK(doc.at("n") == 256);
  CHECK(doc.at("n_draws") == 3);
  CHECK(doc.at("ks") == 0.04);
  CHECK(doc.at("w1") == 0.08);
  CHECK(doc.at("centering") == "global_psi_n");
  CHECK(doc.at("concentration").at("k_n") == 12);
  CHECK(doc.at("conclusive") == true);
  CHECK(doc.at("diagnostics").at("acceptance_rates").at("grow") == 0.3);
  CHECK(doc.at("diagnostics").at("draws_emitted") == 3);

  CoverageResult coverage;
  coverage.nominal_level = 0.9;
  coverage.n_reps = 20;
  coverage.hits = 18;
  coverage.empirical_coverage = 0.9;
  coverage.interval_widths = {0.5, 0.4, 0.7};
  coverage.min_ess = 310.0;
  doc = json::parse(coverage_result_to_json(coverage));
  CHECK(doc.at("hits") == 18);
  CHECK(doc.at("interval_widths").at("max") == 0.7);
  CHECK(doc.at("min_ess") == 310.0);

  SelfSimCertificate cert;
  cert.alpha = 1.0;
  cert.M = 0.8;
  cert.D = 0.25;
  cert.tested_partitions = 400;
  cert.min_ratio = 1.1;
  cert.verdict = true;
  doc = json::parse(selfsim_certificate_to_json(cert));
  CHECK(doc.at("tested_partitions") == 400);
  CHECK(doc.at("verdict") == true);

  std::vector<ConcentrationRow> rows(2);
  rows[0] = {256, 0.2, 0.25, 0.8, 500.0};
  rows[1] = {1024, 0.1, 0.15, 0.67, 600.0};
  doc = json::parse(concentration_rows_to_json(rows));
  CHECK(doc.at("rows").size() == 2);
  CHECK(doc.at("rows")[1].at("n") == 1024);
  CHECK(doc.at("rows")[0].at("ratio") == 0.8);

  RegularityVerdict verdict;
  verdict.regular = false;
  verdict.first_failing_s = 3;
  verdict.rows.push_back({1, 0.5, 0.5, true});
  verdict.rows.push_back({3, 0.9, 0.6, false});
  doc = json::parse(regularity_verdict_to_json(verdict));
  CHECK(doc.at("regular") == false);
  CHECK(doc.at("first_failing_s") == 3);
  CHECK(doc.at("rows")[1].at("pass") == false);
}

TEST_CASE("draws csv streams one row per draw with per-tree leaf counts") {
  auto [draws, data] = small_run(3);
  const auto path = (scratch_dir() / "draws.csv").string();
  DrawsCsvWriter writer(path, 3);
  for (const PosteriorDraw& draw : draws) writer.add(draw);
  writer.close();

  const std::string text = slurp(path);
  std::istringstream lines(text);
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(line == "iteration,K_1,K_2,K_3,psi_value,log_posterior_unnorm");
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    long iteration = 0;
    int k1 = 0, k2 = 0, k3 = 0;
    double psi = 0.0, logpost = 0.0;
    REQUIRE(std::sscanf(line.c_str(), "%ld,%d,%d,%d,%lf,%lf", &iteration, &k1, &k2, &k3, &psi,
                        &logpost) == 6);
    const PosteriorDraw& draw = draws[rows];
    CHECK(iteration == draw.iteration);
    CHECK(k1 == draw.forest.ensemble.trees[0].leaf_count());
    CHECK(k2 == draw.forest.ensemble.trees[1].leaf_count());
    CHECK(k3 == draw.forest.ensemble.trees[2].leaf_count());
    CHECK(psi == doctest::Approx(draw.psi_value).epsilon(1e-15));
    CHECK(logpost == doctest::Approx(draw.log_posterior_unnorm).epsilon(1e-15));
    ++rows;
  }
  CHECK(rows == draws.size());
}

TEST_CASE("forest jsonl round-trips topology and leaf values") {
  auto [draws, data] = small_run(2);
  const auto path = (scratch_dir() / "forests.jsonl").string();
  ForestJsonlWriter writer(path);
  for (const PosteriorDraw& draw : draws) writer.add(draw);
  writer.close();

  std::istringstream lines(slurp(path));
  std::string line;
  std::size_t row = 0;
  while (std::getline(lines, line)) {
    const json doc = json::parse(line);
    const PosteriorDraw& draw = draws[row];
    CHECK(doc.at("iteration") == draw.iteration);
    REQUIRE(doc.at("trees").size() == 2);
    for (std::size_t t = 0; t < 2; ++t) {
      const std::vector<TreeNode> topo =
          topology_from_json(doc.at("trees")[t].at("topology").dump());
      const TreePartition rebuilt = TreePartition::assign_cells(topo, data);
      CHECK(rebuilt.leaf_count() == draw.forest.ensemble.trees[t].leaf_count());
      const auto beta = doc.at("trees")[t].at("beta").get<std::vector<double>>();
      CHECK(beta == draw.forest.betas[t]);
    }
    ++row;
  }
  CHECK(row == draws.size());
}

TEST_CASE("histogram csv integrates to one and matches the normal density") {
  Rng rng(99);
  std::vector<double> draws(4000);
  for (double& d : draws) d = 1.3 * rng.normal();
  const std::string csv = tau_histogram_csv(draws, 1.69, 50);
  std::istringstream lines(csv);
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(line == "bin_left,bin_right,count,density,normal_density");
  double mass = 0.0;
  long total = 0;
  std::size_t bins = 0;
  while (std::getline(lines, line)) {
    double left = 0.0, right = 0.0, density = 0.0, normal = 0.0;
    long count = 0;
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%ld,%lf,%lf", &left, &right, &count, &density,
                        &normal) == 5);
    mass += density * (right - left);
    total += count;
    const double center = 0.5 * (left + right);
    const double expected =
        std::exp(-0.5 * center * center / 1.69) / std::sqrt(2.0 * 3.14159265358979323846 * 1.69);
    CHECK(normal == doctest::Approx(expected).epsilon(1e-6));
    ++bins;
  }
  CHECK(bins == 50);
  CHECK(total == 4000);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));

  CHECK(tau_histogram_csv({}, 1.0, 10) == "bin_left,bin_right,count,density,normal_density\n");
}

TEST_CASE("qq csv pairs sorted draws with gaussian quantiles") {
  std::vector<double> draws = {0.4, -1.2, 0.0, 2.1};
  const std::string csv = tau_qq_csv(draws, 4.0);
  std::istringstream lines(csv);
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(line == "theoretical,empirical");
  std::vector<double> theo, emp;
  while (std::getline(lines, line)) {
    double t = 0.0, e = 0.0;
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf", &t, &e) == 2);
    theo.push_back(t);
    emp.push_back(e);
  }
  REQUIRE(theo.size() == 4);
  CHECK(emp == std::vector<double>{-1.2, 0.0, 0.4, 2.1});
  // theoretical column is sd * Phi^{-1}((i+1/2)/4), symmetric in +-
  CHECK(theo[0] == doctest::Approx(2.0 * normal_quantile(0.125)).epsilon(1e-9));
  CHECK(theo[3] == doctest::Approx(-theo[0]).epsilon(1e-9));
  CHECK(theo[1] < theo[2]);
}

TEST_CASE("svg emitter produces a self-contained figure") {
  Rng rng(123);
  std::vector<double> draws(500);
  for (double& d : draws) d = rng.normal();
  const std::string svg = tau_svg(draws, 1.0);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);  // gaussian overlay
  CHECK(svg.find("<circle") != std::string::npos);    // qq points
  CHECK(svg.find("<rect") != std::string::npos);      // histogram bars
  CHECK(svg.find("href") == std::string::npos);       // no external references
  const std::string empty_svg = tau_svg({}, 1.0);     // degenerate input still renders
  CHECK(empty_svg.find("</svg>") != std::string::npos);
}

TEST_CASE("write_text_file creates parents and reports failures") {
  const auto dir = scratch_dir() / "nested" / "deeper";
  const auto path = (dir / "report.json").string();
  std::filesystem::remove_all(scratch_dir() / "nested");
  write_text_file(path, "{\"ok\": true}\n");
  CHECK(slurp(path) == "{\"ok\": true}\n");

  // a path that walks through a regular file cannot be created
  CHECK_THROWS_AS(write_text_file(path + "/impossible.json", "x"), IoError);
}
