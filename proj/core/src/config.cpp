#include "treebvm/config.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <optional>
#include <set>
#include <utility>

#include <json.hpp>

#include "treebvm/errors.hpp"

namespace treebvm {

namespace {

using nlohmann::json;

const json* child(const json& parent, const char* key) {
  const auto it = parent.find(key);
  return it == parent.end() ? nullptr : &*it;
}

bool is_int(const json& v) { return v.is_number_integer() || v.is_number_unsigned(); }

std::optional<long> get_int(const json* node, const std::string& path,
                            std::vector<std::string>& diags) {
  if (!node) return std::nullopt;
  if (!is_int(*node)) {
    diags.push_back(path + ": must be an integer");
    return std::nullopt;
  }
  return node->get<long>();
}

std::optional<std::uint64_t> get_seed(const json* node, const std::string& path,
                                      std::vector<std::string>& diags) {
  if (!node) return std::nullopt;
  if (!is_int(*node) || (node->is_number_integer() && node->get<long long>() < 0)) {
    diags.push_back(path + ": must be a nonnegative integer");
    return std::nullopt;
  }
  return node->get<std::uint64_t>();
}

std::optional<double> get_num(const json* node, const std::string& path,
                              std::vector<std::string>& diags) {
  if (!node) return std::nullopt;
  if (!node->is_number()) {
    diags.push_back(path + ": must be a number");
    return std::nullopt;
  }
  return node->get<double>();
}

std::optional<std::string> get_str(const json* node, const std::string& path,
                                   std::vector<std::string>& diags) {
  if (!node) return std::nullopt;
  if (!node->is_string()) {
    diags.push_back(path + ": must be a string");
    return std::nullopt;
  }
  return node->get<std::string>();
}

std::optional<bool> get_bool(const json* node, const std::string& path,
                             std::vector<std::string>& diags) {
  if (!node) return std::nullopt;
  if (!node->is_boolean()) {
    diags.push_back(path + ": must be a boolean");
    return std::nullopt;
  }
  return node->get<bool>();
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed,
                std::vector<std::string>& diags) {
  for (const auto& item : obj.items())
    if (!allowed.count(item.key())) diags.push_back(path + "." + item.key() + ": unrecognized field");
}

const json* group(const json& doc, const char* key, std::vector<std::string>& diags) {
  const json* node = child(doc, key);
  if (node && !node->is_object()) {
    diags.push_back(std::string(key) + ": must be an object");
    return nullptr;
  }
  return node;
}

bool perfect_root(long n, int p) {
  if (p <= 1) return true;
  const long m = std::lround(std::pow(static_cast<double>(n), 1.0 / p));
  for (long cand = std::max(1L, m - 1); cand <= m + 1; ++cand) {
    long power = 1;
    for (int i = 0; i < p; ++i) power *= cand;
    if (power == n) return true;
  }
  return false;
}

const std::set<std::string> kTruthFamilies{"f0_const", "f0_lipschitz", "f0_holder",
                                           "f0_flat_half"};
const std::set<std::string> kWeightFamilies{"one", "x1", "kink"};
const std::set<std::string> kModes{"generate",      "sample",  "bvm",       "coverage",
                                   "selfsim", "concentration", "regularity"};

std::vector<std::string> validate_doc(const json& doc) {
  std::vector<std::string> diags;
  if (!doc.is_object()) {
    diags.push_back("config: must be a JSON object");
    return diags;
  }
  check_keys(doc, "config", {"dataset", "weight", "prior", "sampler", "experiment", "output"},
             diags);

  long n = 256;
  int p = 1;

  if (const json* dataset = group(doc, "dataset", diags)) {
    check_keys(*dataset, "dataset", {"family", "n", "p", "alpha", "const_value", "seed"}, diags);
    if (auto v = get_str(child(*dataset, "family"), "dataset.family", diags))
      if (!kTruthFamilies.count(*v))
        diags.push_back(
            "dataset.family: must be one of f0_const, f0_lipschitz, f0_holder, f0_flat_half");
    if (auto v = get_int(child(*dataset, "p"), "dataset.p", diags)) {
      if (*v < 1)
        diags.push_back("dataset.p: must be at least 1");
      else
        p = static_cast<int>(*v);
    }
    if (auto v = get_int(child(*dataset, "n"), "dataset.n", diags)) {
      if (*v < 2)
        diags.push_back("dataset.n: must be at least 2");
      else
        n = *v;
    }
    if (auto v = get_num(child(*dataset, "alpha"), "dataset.alpha", diags))
      if (!(*v > 0.0)) diags.push_back("dataset.alpha: must be positive");
    get_num(child(*dataset, "const_value"), "dataset.const_value", diags);
    get_seed(child(*dataset, "seed"), "dataset.seed", diags);
  }
  if (!perfect_root(n, p))
    diags.push_back("dataset.n: must be a perfect p-th power for the tensor grid");

  if (const json* weight = group(doc, "weight", diags)) {
    check_keys(*weight, "weight", {"family", "gamma"}, diags);
    if (auto v = get_str(child(*weight, "family"), "weight.family", diags))
      if (!kWeightFamilies.count(*v))
        diags.push_back("weight.family: must be one of one, x1, kink");
    if (auto v = get_num(child(*weight, "gamma"), "weight.gamma", diags))
      if (!(*v > 0.0 && *v <= 1.0)) diags.push_back("weight.gamma: must lie in (0,1]");
  }

  if (const json* prior = group(doc, "prior", diags)) {
    check_keys(*prior, "prior", {"tree", "leaf", "n_trees"}, diags);
    if (auto v = get_int(child(*prior, "n_trees"), "prior.n_trees", diags))
      if (*v < 1) diags.push_back("prior.n_trees: must be at least 1");
    if (const json* tree = group(*prior, "tree", diags)) {
      check_keys(*tree, "prior.tree", {"family", "variant", "alpha", "delta", "lambda"}, diags);
      std::string family = "galton_watson";
      if (auto v = get_str(child(*tree, "family"), "prior.tree.family", diags)) {
        if (*v != "poisson_uniform" && *v != "galton_watson")
          diags.push_back("prior.tree.family: must be poisson_uniform or galton_watson");
        else
          family = *v;
      }
      std::string variant = "chipman";
      if (auto v = get_str(child(*tree, "variant"), "prior.tree.variant", diags)) {
        if (*v != "chipman" && *v != "geometric")
          diags.push_back("prior.tree.variant: must be chipman or geometric");
        else
          variant = *v;
      }
      if (auto v = get_num(child(*tree, "lambda"), "prior.tree.lambda", diags))
        if (!(*v > 0.0)) diags.push_back("prior.tree.lambda: must be positive");
      if (auto v = get_num(child(*tree, "delta"), "prior.tree.delta", diags))
        if (!(*v >= 0.0)) diags.push_back("prior.tree.delta: must be nonnegative");
      if (auto v = get_num(child(*tree, "alpha"), "prior.tree.alpha", diags)) {
        if (family == "galton_watson" && variant == "chipman" && !(*v > 0.0 && *v < 1.0))
          diags.push_back("prior.tree.alpha: must lie in (0,1) for the chipman variant");
        if (family == "galton_watson" && variant == "geometric") {
          if (!(*v > 0.0 && *v <= 1.0))
            diags.push_back("prior.tree.alpha: must lie in (0,1] for the geometric variant");
          else if (!(*v > 1.0 / static_cast<double>(n)))
            diags.push_back("prior.tree.alpha: must exceed 1/n for the geometric variant");
        }
      }
    }
    if (const json* leaf = group(*prior, "leaf", diags)) {
      check_keys(*leaf, "prior.leaf", {"kind", "sigma2", "lambda", "c_lambda"}, diags);
      if (auto v = get_str(child(*leaf, "kind"), "prior.leaf.kind", diags))
        if (*v != "gaussian" && *v != "gaussian_scaled" && *v != "laplace" &&
            *v != "laplace_scaled")
          diags.push_back(
              "prior.leaf.kind: must be gaussian, gaussian_scaled, laplace, or laplace_scaled");
      if (auto v = get_num(child(*leaf, "sigma2"), "prior.leaf.sigma2", diags))
        if (!(*v > 0.0)) diags.push_back("prior.leaf.sigma2: must be positive");
      if (auto v = get_num(child(*leaf, "lambda"), "prior.leaf.lambda", diags))
        if (!(*v > 0.0)) diags.push_back("prior.leaf.lambda: must be positive");
      if (auto v = get_num(child(*leaf, "c_lambda"), "prior.leaf.c_lambda", diags))
        if (!(*v > 0.0)) diags.push_back("prior.leaf.c_lambda: must be positive");
    }
  }

  long iterations = 1000;
  long burn_in = 100;
  if (const json* sampler = group(doc, "sampler", diags)) {
    check_keys(*sampler, "sampler",
               {"iterations", "burn_in", "thin", "max_depth", "seed", "move_weights"}, diags);
    if (auto v = get_int(child(*sampler, "iterations"), "sampler.iterations", diags)) {
      if (*v < 0)
        diags.push_back("sampler.iterations: must be nonnegative");
      else
        iterations = *v;
    }
    if (auto v = get_int(child(*sampler, "burn_in"), "sampler.burn_in", diags)) {
      if (*v < 0)
        diags.push_back("sampler.burn_in: must be nonnegative");
      else
        burn_in = *v;
    }
    if (auto v = get_int(child(*sampler, "thin"), "sampler.thin", diags))
      if (*v < 1) diags.push_back("sampler.thin: must be at least 1");
    if (auto v = get_int(child(*sampler, "max_depth"), "sampler.max_depth", diags))
      if (*v < 1) diags.push_back("sampler.max_depth: must be at least 1");
    get_seed(child(*sampler, "seed"), "sampler.seed", diags);
    if (const json* weights = group(*sampler, "move_weights", diags)) {
      check_keys(*weights, "sampler.move_weights", {"grow", "prune", "change"}, diags);
      double total = 0.0;
      bool bad = false;
      bool seen = false;
      double defaults[3] = {0.4, 0.4, 0.2};
      const char* names[3] = {"grow", "prune", "change"};
      for (int i = 0; i < 3; ++i) {
        double w = defaults[i];
        if (auto v = get_num(child(*weights, names[i]),
                             std::string("sampler.move_weights.") + names[i], diags)) {
          w = *v;
          seen = true;
        }
        if (w < 0.0) bad = true;
        total += w;
      }
      if (seen && (bad || std::abs(total - 1.0) > 1e-9))
        diags.push_back("sampler.move_weights: must be nonnegative and sum to 1");
    }
  }
  if (burn_in > iterations)
    diags.push_back("sampler.burn_in: must not exceed sampler.iterations");

  std::string mode = "sample";
  const json* experiment = group(doc, "experiment", diags);
  if (experiment) {
    check_keys(*experiment, "experiment",
               {"mode", "n_reps", "nominal_level", "centering", "M", "M_n", "M2", "D", "min_ess",
                "threads", "selfsim_budget", "regularity_max_s", "n_grid"},
               diags);
    if (auto v = get_str(child(*experiment, "mode"), "experiment.mode", diags)) {
      if (!kModes.count(*v))
        diags.push_back(
            "experiment.mode: must be one of generate, sample, bvm, coverage, selfsim, "
            "concentration, regularity");
      else
        mode = *v;
    }
    if (auto v = get_int(child(*experiment, "n_reps"), "experiment.n_reps", diags))
      if (*v < 1) diags.push_back("experiment.n_reps: must be at least 1");
    if (auto v = get_num(child(*experiment, "nominal_level"), "experiment.nominal_level", diags))
      if (!(*v > 0.0 && *v < 1.0)) diags.push_back("experiment.nominal_level: must lie in (0,1)");
    if (auto v = get_str(child(*experiment, "centering"), "experiment.centering", diags))
      if (*v != "per_partition_psi_hat_T" && *v != "global_psi_n" && *v != "posterior_mean")
        diags.push_back(
            "experiment.centering: must be per_partition_psi_hat_T, global_psi_n, or "
            "posterior_mean");
    if (auto v = get_num(child(*experiment, "M"), "experiment.M", diags))
      if (!(*v > 0.0)) diags.push_back("experiment.M: must be positive");
    if (auto v = get_num(child(*experiment, "M_n"), "experiment.M_n", diags))
      if (!(*v >= 0.0)) diags.push_back("experiment.M_n: must be nonnegative");
    if (auto v = get_num(child(*experiment, "M2"), "experiment.M2", diags))
      if (!(*v > 0.0)) diags.push_back("experiment.M2: must be positive");
    if (auto v = get_num(child(*experiment, "D"), "experiment.D", diags))
      if (!(*v > 0.0)) diags.push_back("experiment.D: must be positive");
    if (auto v = get_num(child(*experiment, "min_ess"), "experiment.min_ess", diags))
      if (!(*v >= 0.0)) diags.push_back("experiment.min_ess: must be nonnegative");
    if (auto v = get_int(child(*experiment, "threads"), "experiment.threads", diags))
      if (*v < 0) diags.push_back("experiment.threads: must be nonnegative");
    if (auto v = get_int(child(*experiment, "selfsim_budget"), "experiment.selfsim_budget", diags))
      if (*v < 0) diags.push_back("experiment.selfsim_budget: must be nonnegative");
    if (auto v =
            get_int(child(*experiment, "regularity_max_s"), "experiment.regularity_max_s", diags))
      if (*v < 1) diags.push_back("experiment.regularity_max_s: must be at least 1");
    if (const json* grid = child(*experiment, "n_grid")) {
      if (!grid->is_array())
        diags.push_back("experiment.n_grid: must be an array of integers");
      else
        for (std::size_t i = 0; i < grid->size(); ++i) {
          const json& entry = (*grid)[i];
          const std::string path = "experiment.n_grid[" + std::to_string(i) + "]";
          if (!is_int(entry))
            diags.push_back(path + ": must be an integer");
          else if (entry.get<long>() < 2)
            diags.push_back(path + ": must be at least 2");
          else if (!perfect_root(entry.get<long>(), p))
            diags.push_back(path + ": must be a perfect p-th power for the tensor grid");
        }
    }
  }

  // referential completeness per mode
  const auto require_field = [&](const char* key, const char* why) {
    if (!experiment || !child(*experiment, key))
      diags.push_back(std::string("experiment.") + key + ": required in " + why + " mode");
  };
  if (mode == "coverage") {
    require_field("nominal_level", "coverage");
    require_field("n_reps", "coverage");
  }
  if (mode == "concentration") {
    if (!experiment || !child(*experiment, "n_grid") ||
        (child(*experiment, "n_grid")->is_array() && child(*experiment, "n_grid")->empty()))
      diags.push_back("experiment.n_grid: required in concentration mode");
  }
  if (mode == "selfsim") {
    require_field("M", "selfsim");
    require_field("D", "selfsim");
  }
  if (mode == "regularity") require_field("M", "regularity");

  if (const json* output = group(doc, "output", diags)) {
    check_keys(*output, "output", {"dir", "write_forests", "write_svg"}, diags);
    if (auto v = get_str(child(*output, "dir"), "output.dir", diags))
      if (v->empty()) diags.push_back("output.dir: must not be empty");
    get_bool(child(*output, "write_forests"), "output.write_forests", diags);
    get_bool(child(*output, "write_svg"), "output.write_svg", diags);
  }

  return diags;
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigInvalid(std::string("config: not valid JSON: ") + e.what());
  }
}

template <typename T>
void take(const json* node, T& into) {
  if (node) into = node->get<T>();
}

}  // namespace

std::vector<std::string> validate_experiment_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    return {std::string("config: not valid JSON: ") + e.what()};
  }
  return validate_doc(doc);
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  const json doc = parse_text(text);
  const std::vector<std::string> diags = validate_doc(doc);
  if (!diags.empty()) throw ConfigInvalid(diags.front());

  ExperimentConfig config;
  if (const json* dataset = child(doc, "dataset")) {
    take(child(*dataset, "family"), config.dataset_family);
    long n = config.n;
    take(child(*dataset, "n"), n);
    config.n = static_cast<int>(n);
    long p = config.p;
    take(child(*dataset, "p"), p);
    config.p = static_cast<int>(p);
    take(child(*dataset, "alpha"), config.alpha);
    take(child(*dataset, "const_value"), config.const_value);
    take(child(*dataset, "seed"), config.dataset_seed);
  }
  if (const json* weight = child(doc, "weight")) {
    take(child(*weight, "family"), config.weight_family);
    take(child(*weight, "gamma"), config.gamma);
  }
  if (const json* prior = child(doc, "prior")) {
    long n_trees = config.n_trees;
    take(child(*prior, "n_trees"), n_trees);
    config.n_trees = static_cast<int>(n_trees);
    if (const json* tree = child(*prior, "tree")) {
      std::string family = "galton_watson";
      take(child(*tree, "family"), family);
      config.tree_prior.family = family == "poisson_uniform"
                                     ? TreePriorSpec::Family::poisson_uniform
                                     : TreePriorSpec::Family::galton_watson;
      std::string variant = "chipman";
      take(child(*tree, "variant"), variant);
      config.tree_prior.gw.variant = variant == "geometric" ? GaltonWatsonPrior::Variant::geometric
                                                            : GaltonWatsonPrior::Variant::chipman;
      take(child(*tree, "alpha"), config.tree_prior.gw.alpha);
      take(child(*tree, "delta"), config.tree_prior.gw.delta);
      take(child(*tree, "lambda"), config.tree_prior.size.lambda);
    }
    if (const json* leaf = child(*prior, "leaf")) {
      std::string kind = "gaussian";
      take(child(*leaf, "kind"), kind);
      double sigma2 = 1.0;
      double lambda = 1.0;
      double c_lambda = 1.0;
      take(child(*leaf, "sigma2"), sigma2);
      take(child(*leaf, "lambda"), lambda);
      take(child(*leaf, "c_lambda"), c_lambda);
      if (kind == "gaussian")
        config.leaf_prior = make_gaussian_leaf_prior(sigma2);
      else if (kind == "gaussian_scaled")
        config.leaf_prior = make_gaussian_scaled_leaf_prior();
      else if (kind == "laplace")
        config.leaf_prior = make_laplace_leaf_prior(lambda);
      else
        config.leaf_prior = make_laplace_scaled_leaf_prior(c_lambda);
    }
  }
  if (const json* sampler = child(doc, "sampler")) {
    take(child(*sampler, "iterations"), config.iterations);
    take(child(*sampler, "burn_in"), config.burn_in);
    long thin = config.thin;
    take(child(*sampler, "thin"), thin);
    config.thin = static_cast<int>(thin);
    long max_depth = config.max_depth;
    take(child(*sampler, "max_depth"), max_depth);
    config.max_depth = static_cast<int>(max_depth);
    take(child(*sampler, "seed"), config.chain_seed);
    if (const json* weights = child(*sampler, "move_weights")) {
      take(child(*weights, "grow"), config.move_weights.grow);
      take(child(*weights, "prune"), config.move_weights.prune);
      take(child(*weights, "change"), config.move_weights.change);
    }
  }
  if (const json* experiment = child(doc, "experiment")) {
    take(child(*experiment, "mode"), config.mode);
    long n_reps = config.n_reps;
    take(child(*experiment, "n_reps"), n_reps);
    config.n_reps = static_cast<int>(n_reps);
    take(child(*experiment, "nominal_level"), config.nominal_level);
    std::string centering = centering_mode_name(config.centering);
    take(child(*experiment, "centering"), centering);
    config.centering = centering_mode_from_name(centering);
    take(child(*experiment, "M"), config.M);
    take(child(*experiment, "M_n"), config.M_n);
    take(child(*experiment, "M2"), config.M2);
    take(child(*experiment, "D"), config.D);
    take(child(*experiment, "min_ess"), config.min_ess);
    long threads = config.threads;
    take(child(*experiment, "threads"), threads);
    config.threads = static_cast<int>(threads);
    long budget = config.selfsim_budget;
    take(child(*experiment, "selfsim_budget"), budget);
    config.selfsim_budget = static_cast<int>(budget);
    long max_s = config.regularity_max_s;
    take(child(*experiment, "regularity_max_s"), max_s);
    config.regularity_max_s = static_cast<int>(max_s);
    if (const json* grid = child(*experiment, "n_grid")) {
      config.n_grid.clear();
      for (const json& entry : *grid) config.n_grid.push_back(entry.get<int>());
    }
  }
  if (const json* output = child(doc, "output")) {
    take(child(*output, "dir"), config.out_dir);
    take(child(*output, "write_forests"), config.write_forests);
    take(child(*output, "write_svg"), config.write_svg);
  }
  return config;
}

std::string apply_overrides(const std::string& text, const std::vector<std::string>& sets) {
  json doc = parse_text(text);
  for (const std::string& set : sets) {
    const std::size_t eq = set.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigInvalid("override must look like path.to.field=value: " + set);
    const std::string path = set.substr(0, eq);
    const std::string value = set.substr(eq + 1);

    json* cur = &doc;
    std::size_t start = 0;
    while (true) {
      const std::size_t dot = path.find('.', start);
      const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
      if (key.empty()) throw ConfigInvalid("override has an empty path segment: " + set);
      if (!cur->is_object() && !cur->is_null())
        throw ConfigInvalid("override path crosses a non-object field: " + set);
      if (dot == std::string::npos) {
        json parsed;
        try {
          parsed = json::parse(value);
        } catch (const json::parse_error&) {
          parsed = value;  // unquoted strings are taken literally
        }
        (*cur)[key] = parsed;
        break;
      }
      cur = &(*cur)[key];
      start = dot + 1;
    }
  }
  return doc.dump(2) + "\n";
}

std::string experiment_config_to_json(const ExperimentConfig& config) {
  json doc;
  doc["dataset"] = {{"family", config.dataset_family}, {"n", config.n},
                    {"p", config.p},                   {"alpha", config.alpha},
                    {"const_value", config.const_value}, {"seed", config.dataset_seed}};
  doc["weight"] = {{"family", config.weight_family}, {"gamma", config.gamma}};
  const char* tree_family = config.tree_prior.family == TreePriorSpec::Family::poisson_uniform
                                ? "poisson_uniform"
                                : "galton_watson";
  const char* variant = config.tree_prior.gw.variant == GaltonWatsonPrior::Variant::geometric
                            ? "geometric"
                            : "chipman";
  const char* kind = "gaussian";
  switch (config.leaf_prior.kind) {
    case LeafPrior::Kind::gaussian:
      kind = "gaussian";
      break;
    case LeafPrior::Kind::gaussian_scaled:
      kind = "gaussian_scaled";
      break;
    case LeafPrior::Kind::laplace:
      kind = "laplace";
      break;
    case LeafPrior::Kind::laplace_scaled:
      kind = "laplace_scaled";
      break;
  }
  doc["prior"] = {
      {"tree",
       {{"family", tree_family},
        {"variant", variant},
        {"alpha", config.tree_prior.gw.alpha},
        {"delta", config.tree_prior.gw.delta},
        {"lambda", config.tree_prior.size.lambda}}},
      {"leaf",
       {{"kind", kind},
        {"sigma2", config.leaf_prior.sigma2},
        {"lambda", config.leaf_prior.lambda_leaf},
        {"c_lambda", config.leaf_prior.c_lambda}}},
      {"n_trees", config.n_trees}};
  doc["sampler"] = {{"iterations", config.iterations},
                    {"burn_in", config.burn_in},
                    {"thin", config.thin},
                    {"max_depth", config.max_depth},
                    {"seed", config.chain_seed},
                    {"move_weights",
                     {{"grow", config.move_weights.grow},
                      {"prune", config.move_weights.prune},
                      {"change", config.move_weights.change}}}};
  doc["experiment"] = {{"mode", config.mode},
                       {"n_reps", config.n_reps},
                       {"nominal_level", config.nominal_level},
                       {"centering", centering_mode_name(config.centering)},
                       {"M", config.M},
                       {"M_n", config.M_n},
                       {"M2", config.M2},
                       {"D", config.D},
                       {"min_ess", config.min_ess},
                       {"threads", config.threads},
                       {"selfsim_budget", config.selfsim_budget},
                       {"regularity_max_s", config.regularity_max_s},
                       {"n_grid", config.n_grid}};
  doc["output"] = {{"dir", config.out_dir},
                   {"write_forests", config.write_forests},
                   {"write_svg", config.write_svg}};
  return doc.dump(2) + "\n";
}

std::string git_blob_sha1(const std::string& bytes) {
  std::string framed = "blob " + std::to_string(bytes.size());
  framed.push_back('\0');
  framed += bytes;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(framed.data(), framed.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    throw IoError("git_blob_sha1: digest failed");
  std::string hex(static_cast<std::size_t>(len) * 2, '0');
  static const char* alphabet = "0123456789abcdef";
  for (unsigned int i = 0; i < len; ++i) {
    hex[2 * i] = alphabet[digest[i] >> 4];
    hex[2 * i + 1] = alphabet[digest[i] & 0x0f];
  }
  return hex;
}

SamplerConfig sampler_from(const ExperimentConfig& config) {
  SamplerConfig sampler;
  sampler.tree_prior = config.tree_prior;
  sampler.leaf_prior = config.leaf_prior;
  sampler.n_trees = config.n_trees;
  sampler.move_weights = config.move_weights;
  sampler.iterations = config.iterations;
  sampler.burn_in = config.burn_in;
  sampler.thin = config.thin;
  sampler.seed = config.chain_seed;
  sampler.max_depth = config.max_depth;
  return sampler;
}

BvmExperimentConfig bvm_config_from(const ExperimentConfig& config) {
  BvmExperimentConfig bvm;
  bvm.truth_family = config.dataset_family;
  bvm.alpha = config.alpha;
  bvm.const_value = config.const_value;
  bvm.n = config.n;
  bvm.p = config.p;
  bvm.data_seed = config.dataset_seed;
  bvm.weight_family = config.weight_family;
  bvm.gamma = config.gamma;
  bvm.sampler = sampler_from(config);
  bvm.centering = config.centering;
  bvm.M = config.M;
  bvm.M_n = config.M_n;
  bvm.M2 = config.M2;
  bvm.min_ess = config.min_ess;
  return bvm;
}

CoverageConfig coverage_config_from(const ExperimentConfig& config) {
  CoverageConfig coverage;
  coverage.truth_family = config.dataset_family;
  coverage.alpha = config.alpha;
  coverage.const_value = config.const_value;
  coverage.n = config.n;
  coverage.p = config.p;
  coverage.weight_family = config.weight_family;
  coverage.gamma = config.gamma;
  coverage.sampler = sampler_from(config);
  coverage.nominal_level = config.nominal_level;
  coverage.n_reps = config.n_reps;
  coverage.seed = config.chain_seed;
  coverage.threads = config.threads;
  return coverage;
}

ConcentrationConfig concentration_config_from(const ExperimentConfig& config) {
  ConcentrationConfig concentration;
  concentration.truth_family = config.dataset_family;
  concentration.alpha = config.alpha;
  concentration.const_value = config.const_value;
  concentration.p = config.p;
  concentration.sampler = sampler_from(config);
  concentration.seed = config.chain_seed;
  return concentration;
}

}  // namespace treebvm
