#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "treebvm/bvm.hpp"

namespace treebvm {

// Payload fragments (JSON text) for each experiment mode.
std::string diagnostics_to_json(const ChainDiagnostics& diagnostics);
std::string bvm_report_to_json(const BvmReport& report);
std::string coverage_result_to_json(const CoverageResult& result);
std::string selfsim_certificate_to_json(const SelfSimCertificate& certificate);
std::string concentration_rows_to_json(const std::vector<ConcentrationRow>& rows);
std::string regularity_verdict_to_json(const RegularityVerdict& verdict);

// Wraps a payload with the metadata every report carries: the mode, the fully
// resolved config with its git blob hash, and the artifact paths written
// alongside. config_json and payload_json must be valid JSON text.
std::string report_envelope(const std::string& mode, const std::string& config_json,
                            const std::string& payload_json,
                            const std::vector<std::pair<std::string, std::string>>& artifacts);

// Throws IoError when the file cannot be created or written.
void write_text_file(const std::string& path, const std::string& text);

// Streaming draw log with header iteration,K_1,...,K_T,psi_value,log_posterior_unnorm.
class DrawsCsvWriter {
 public:
  DrawsCsvWriter(const std::string& path, int n_trees);
  void add(const PosteriorDraw& draw);
  void close();

 private:
  std::ofstream out_;
  std::string path_;
  int n_trees_ = 1;
  bool closed_ = false;
};

// One JSON line per draw: iteration plus each tree's topology and leaf values.
class ForestJsonlWriter {
 public:
  explicit ForestJsonlWriter(const std::string& path);
  void add(const PosteriorDraw& draw);
  void close();

 private:
  std::ofstream out_;
  std::string path_;
  bool closed_ = false;
};

// Plot data for the centered draws: histogram bins with the N(0, V0) density
// sampled at bin centers, and QQ pairs (theoretical, empirical).
std::string tau_histogram_csv(const std::vector<double>& tau_draws, double V0, int bins = 40);
std::string tau_qq_csv(const std::vector<double>& tau_draws, double V0);

// Self-contained SVG: histogram with the Gaussian overlay and a QQ panel.
std::string tau_svg(const std::vector<double>& tau_draws, double V0);

}  // namespace treebvm
