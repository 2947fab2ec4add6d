#pragma once

#include <vector>

#include "treebvm/rng.hpp"

namespace treebvm {

double normal_pdf(double x);
double log_normal_pdf(double x);
double normal_cdf(double x);
// log Φ(x), stable far into the left tail.
double log_normal_cdf(double x);
// Φ^{-1}(p) via the Wichura AS 241 rational approximations.
double normal_quantile(double p);

double logsumexp(double a, double b);
double logsumexp(const std::vector<double>& terms);
// log(e^x - 1) for x > 0.
double log_expm1(double x);

// Linear-interpolation sample quantile on sorted data (R type 7).
double quantile_sorted(const std::vector<double>& sorted, double q);

// sup |F_emp - F| against N(0, sd^2); draws are copied and sorted.
double ks_distance_gaussian(std::vector<double> draws, double sd);

// Integral of |F_emp - F| against N(0, sd^2), computed exactly piecewise
// between sorted draws. Equals the Wasserstein-1 distance on the line.
double w1_distance_gaussian(std::vector<double> draws, double sd);

// Effective sample size via Geyer's initial monotone positive sequence.
double effective_sample_size(const std::vector<double>& series);

// Draw from the standard normal conditioned on [lower, inf). Uses plain
// rejection for low bounds and Robert's shifted-exponential envelope for
// bounds deep in the upper tail.
double sample_normal_lower_truncated(Rng& rng, double lower);

}  // namespace treebvm
