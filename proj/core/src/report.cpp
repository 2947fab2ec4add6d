#include "treebvm/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include <json.hpp>

#include "treebvm/config.hpp"
#include "treebvm/errors.hpp"
#include "treebvm/partition.hpp"
#include "treebvm/stats.hpp"

namespace treebvm {

namespace {

using nlohmann::json;

constexpr double kLog2Pi = 1.8378770664093454836;

json diagnostics_node(const ChainDiagnostics& d) {
  return {{"acceptance_rates",
           {{"grow", d.acceptance_rates.grow},
            {"prune", d.acceptance_rates.prune},
            {"change", d.acceptance_rates.change}}},
          {"ess_psi", d.ess_psi},
          {"leaf_counts",
           {{"mean", d.leaf_counts.mean}, {"min", d.leaf_counts.min}, {"max", d.leaf_counts.max}}},
          {"draws_emitted", d.draws_emitted}};
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::string diagnostics_to_json(const ChainDiagnostics& diagnostics) {
  return diagnostics_node(diagnostics).dump(2) + "\n";
}

std::string bvm_report_to_json(const BvmReport& report) {
  json doc = {{"n", report.n},
              {"alpha", report.alpha},
              {"gamma", report.gamma},
              {"V0", report.V0},
              {"n_draws", report.tau_draws.size()},
              {"ks", report.ks_stat},
              {"w1", report.w1_stat},
              {"centering", centering_mode_name(report.centering_mode)},
              {"concentration",
               {{"frac_regular", report.concentration.frac_regular},
                {"frac_small_k", report.concentration.frac_small_k},
                {"frac_both", report.concentration.frac_both},
                {"k_n", report.concentration.k_n}}},
              {"ess_psi", report.ess_psi},
              {"conclusive", report.conclusive},
              {"diagnostics", diagnostics_node(report.diagnostics)}};
  return doc.dump(2) + "\n";
}

std::string coverage_result_to_json(const CoverageResult& result) {
  json doc = {{"nominal_level", result.nominal_level},
              {"n_reps", result.n_reps},
              {"hits", result.hits},
              {"empirical_coverage", result.empirical_coverage},
              {"interval_widths",
               {{"mean", result.interval_widths.mean},
                {"min", result.interval_widths.min},
                {"max", result.interval_widths.max}}},
              {"min_ess", result.min_ess}};
  return doc.dump(2) + "\n";
}

std::string selfsim_certificate_to_json(const SelfSimCertificate& certificate) {
  json doc = {{"alpha", certificate.alpha},
              {"M", certificate.M},
              {"D", certificate.D},
              {"tested_partitions", certificate.tested_partitions},
              {"min_ratio", certificate.min_ratio},
              {"verdict", certificate.verdict}};
  return doc.dump(2) + "\n";
}

std::string concentration_rows_to_json(const std::vector<ConcentrationRow>& rows) {
  json arr = json::array();
  for (const ConcentrationRow& row : rows)
    arr.push_back({{"n", row.n},
                   {"mean_error", row.mean_error},
                   {"epsilon", row.epsilon},
                   {"ratio", row.ratio},
                   {"ess", row.ess}});
  json doc = {{"rows", arr}};
  return doc.dump(2) + "\n";
}

std::string regularity_verdict_to_json(const RegularityVerdict& verdict) {
  json rows = json::array();
  for (const RegularityRow& row : verdict.rows)
    rows.push_back({{"s", row.s},
                    {"max_diam", row.max_diam},
                    {"typical_diam", row.typical_diam},
                    {"pass", row.pass}});
  json doc = {{"regular", verdict.regular},
              {"first_failing_s", verdict.first_failing_s},
              {"rows", rows}};
  return doc.dump(2) + "\n";
}

std::string report_envelope(const std::string& mode, const std::string& config_json,
                            const std::string& payload_json,
                            const std::vector<std::pair<std::string, std::string>>& artifacts) {
  json doc;
  doc["mode"] = mode;
  doc["config"] = json::parse(config_json);
  doc["config_hash"] = git_blob_sha1(config_json);
  doc["result"] = json::parse(payload_json);
  json files = json::object();
  for (const auto& [name, path] : artifacts) files[name] = path;
  doc["artifacts"] = files;
  return doc.dump(2) + "\n";
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(target.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + target.parent_path().string());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for " + path);
}

DrawsCsvWriter::DrawsCsvWriter(const std::string& path, int n_trees)
    : path_(path), n_trees_(std::max(1, n_trees)) {
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open " + path + " for writing");
  out_ << "iteration";
  for (int t = 1; t <= n_trees_; ++t) out_ << ",K_" << t;
  out_ << ",psi_value,log_posterior_unnorm\n";
}

void DrawsCsvWriter::add(const PosteriorDraw& draw) {
  out_ << draw.iteration;
  for (int t = 0; t < n_trees_; ++t) {
    const auto& trees = draw.forest.ensemble.trees;
    const int k = t < static_cast<int>(trees.size())
                      ? trees[static_cast<std::size_t>(t)].leaf_count()
                      : 0;
    out_ << ',' << k;
  }
  char buf[80];
  std::snprintf(buf, sizeof(buf), ",%.17g,%.17g\n", draw.psi_value, draw.log_posterior_unnorm);
  out_ << buf;
}

void DrawsCsvWriter::close() {
  if (closed_) return;
  closed_ = true;
  out_.flush();
  if (!out_) throw IoError("write failed for " + path_);
  out_.close();
}

ForestJsonlWriter::ForestJsonlWriter(const std::string& path) : path_(path) {
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open " + path + " for writing");
}

void ForestJsonlWriter::add(const PosteriorDraw& draw) {
  json trees = json::array();
  for (std::size_t t = 0; t < draw.forest.ensemble.trees.size(); ++t) {
    json tree;
    tree["topology"] = json::parse(topology_to_json(draw.forest.ensemble.trees[t]));
    tree["beta"] = t < draw.forest.betas.size() ? json(draw.forest.betas[t]) : json::array();
    trees.push_back(std::move(tree));
  }
  json line = {{"iteration", draw.iteration}, {"trees", std::move(trees)}};
  out_ << line.dump() << '\n';
}

void ForestJsonlWriter::close() {
  if (closed_) return;
  closed_ = true;
  out_.flush();
  if (!out_) throw IoError("write failed for " + path_);
  out_.close();
}

std::string tau_histogram_csv(const std::vector<double>& tau_draws, double V0, int bins) {
  if (tau_draws.empty() || bins < 1) return "bin_left,bin_right,count,density,normal_density\n";
  const double sd = std::sqrt(V0);
  const auto [min_it, max_it] = std::minmax_element(tau_draws.begin(), tau_draws.end());
  double lo = std::min(*min_it, -3.5 * sd);
  double hi = std::max(*max_it, 3.5 * sd);
  if (hi <= lo) hi = lo + 1.0;
  const double width = (hi - lo) / bins;
  std::vector<long> counts(static_cast<std::size_t>(bins), 0);
  for (double v : tau_draws) {
    int b = static_cast<int>((v - lo) / width);
    b = std::clamp(b, 0, bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  std::string csv = "bin_left,bin_right,count,density,normal_density\n";
  const double total = static_cast<double>(tau_draws.size());
  for (int b = 0; b < bins; ++b) {
    const double left = lo + b * width;
    const double right = left + width;
    const double center = 0.5 * (left + right);
    const double density = counts[static_cast<std::size_t>(b)] / (total * width);
    const double normal =
        std::exp(-0.5 * center * center / V0 - 0.5 * (kLog2Pi + std::log(V0)));
    csv += format_number(left) + "," + format_number(right) + "," +
           std::to_string(counts[static_cast<std::size_t>(b)]) + "," + format_number(density) +
           "," + format_number(normal) + "\n";
  }
  return csv;
}

std::string tau_qq_csv(const std::vector<double>& tau_draws, double V0) {
  std::string csv = "theoretical,empirical\n";
  std::vector<double> sorted = tau_draws;
  std::sort(sorted.begin(), sorted.end());
  const double sd = std::sqrt(V0);
  const std::size_t m = sorted.size();
  for (std::size_t i = 0; i < m; ++i) {
    const double level = (static_cast<double>(i) + 0.5) / static_cast<double>(m);
    csv += format_number(sd * normal_quantile(level)) + "," + format_number(sorted[i]) + "\n";
  }
  return csv;
}

namespace {

// Maps data coordinates onto one SVG panel (y axis flipped).
struct PanelScale {
  double x0, x1, y0, y1;           // data ranges
  double px, py, width, height;    // panel rectangle in SVG units

  double sx(double x) const { return px + (x - x0) / (x1 - x0) * width; }
  double sy(double y) const { return py + height - (y - y0) / (y1 - y0) * height; }
};

void append_line(std::string& svg, double x1, double y1, double x2, double y2,
                 const char* stroke) {
  char buf[220];
  std::snprintf(buf, sizeof(buf),
                "<line x1='%.2f' y1='%.2f' x2='%.2f' y2='%.2f' stroke='%s' "
                "stroke-width='1'/>\n",
                x1, y1, x2, y2, stroke);
  svg += buf;
}

}  // namespace

std::string tau_svg(const std::vector<double>& tau_draws, double V0) {
  const int bins = 40;
  const double sd = std::sqrt(std::max(V0, 1e-300));
  std::vector<double> sorted = tau_draws;
  std::sort(sorted.begin(), sorted.end());

  double lo = -3.5 * sd;
  double hi = 3.5 * sd;
  if (!sorted.empty()) {
    lo = std::min(lo, sorted.front());
    hi = std::max(hi, sorted.back());
  }
  if (hi <= lo) hi = lo + 1.0;
  const double width = (hi - lo) / bins;
  std::vector<double> density(static_cast<std::size_t>(bins), 0.0);
  if (!sorted.empty()) {
    for (double v : sorted) {
      int b = std::clamp(static_cast<int>((v - lo) / width), 0, bins - 1);
      density[static_cast<std::size_t>(b)] += 1.0;
    }
    for (double& d : density) d /= static_cast<double>(sorted.size()) * width;
  }
  const double peak_normal = 1.0 / (sd * std::sqrt(2.0 * 3.14159265358979323846));
  double y_max = peak_normal;
  for (double d : density) y_max = std::max(y_max, d);
  y_max *= 1.1;

  std::string svg =
      "<svg xmlns='http://www.w3.org/2000/svg' width='920' height='420' "
      "viewBox='0 0 920 420' font-family='sans-serif' font-size='12'>\n"
      "<rect width='920' height='420' fill='white'/>\n";

  // left panel: histogram with the N(0, V0) density overlay
  const PanelScale hist{lo, hi, 0.0, y_max, 50.0, 40.0, 360.0, 320.0};
  svg += "<text x='230' y='22' text-anchor='middle'>centered draws vs N(0, V0)</text>\n";
  append_line(svg, hist.px, hist.py + hist.height, hist.px + hist.width, hist.py + hist.height,
              "black");
  append_line(svg, hist.px, hist.py, hist.px, hist.py + hist.height, "black");
  for (int b = 0; b < bins; ++b) {
    const double left = lo + b * width;
    const double d = density[static_cast<std::size_t>(b)];
    if (d <= 0.0) continue;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "<rect x='%.2f' y='%.2f' width='%.2f' height='%.2f' fill='#9ecae1'/>\n",
                  hist.sx(left), hist.sy(d), hist.sx(left + width) - hist.sx(left),
                  hist.sy(0.0) - hist.sy(d));
    svg += buf;
  }
  svg += "<polyline fill='none' stroke='#d62728' stroke-width='1.5' points='";
  for (int i = 0; i <= 200; ++i) {
    const double x = lo + (hi - lo) * i / 200.0;
    const double d = std::exp(-0.5 * x * x / (sd * sd)) * peak_normal;
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", hist.sx(x), hist.sy(d));
    svg += buf;
  }
  svg += "'/>\n";

  // right panel: QQ against N(0, V0)
  double q_lo = -3.0 * sd;
  double q_hi = 3.0 * sd;
  if (!sorted.empty()) {
    q_lo = std::min(q_lo, sorted.front());
    q_hi = std::max(q_hi, sorted.back());
  }
  if (q_hi <= q_lo) q_hi = q_lo + 1.0;
  const PanelScale qq{q_lo, q_hi, q_lo, q_hi, 510.0, 40.0, 360.0, 320.0};
  svg += "<text x='690' y='22' text-anchor='middle'>QQ against N(0, V0)</text>\n";
  append_line(svg, qq.px, qq.py + qq.height, qq.px + qq.width, qq.py + qq.height, "black");
  append_line(svg, qq.px, qq.py, qq.px, qq.py + qq.height, "black");
  append_line(svg, qq.sx(q_lo), qq.sy(q_lo), qq.sx(q_hi), qq.sy(q_hi), "#999999");
  const std::size_t m = sorted.size();
  const std::size_t step = std::max<std::size_t>(1, m / 400);
  for (std::size_t i = 0; i < m; i += step) {
    const double level = (static_cast<double>(i) + 0.5) / static_cast<double>(m);
    const double theo = sd * normal_quantile(level);
    char buf[120];
    std::snprintf(buf, sizeof(buf), "<circle cx='%.2f' cy='%.2f' r='1.6' fill='#1f77b4'/>\n",
                  qq.sx(theo), qq.sy(sorted[i]));
    svg += buf;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace treebvm
