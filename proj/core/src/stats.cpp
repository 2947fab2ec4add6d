#include "treebvm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "treebvm/errors.hpp"

namespace treebvm {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112353;
constexpr double kSqrt2 = 1.4142135623730950488016887242096981;
}  // namespace

double normal_pdf(double x) { return std::exp(-0.5 * x * x - 0.5 * kLog2Pi); }

double log_normal_pdf(double x) { return -0.5 * x * x - 0.5 * kLog2Pi; }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double log_normal_cdf(double x) {
  if (x > -30.0) return std::log(0.5 * std::erfc(-x / kSqrt2));
  // Asymptotic expansion of Mills' ratio; erfc underflows near x = -37.5.
  const double inv_x2 = 1.0 / (x * x);
  const double series =
      1.0 - inv_x2 * (1.0 - 3.0 * inv_x2 * (1.0 - 5.0 * inv_x2 * (1.0 - 7.0 * inv_x2)));
  return -0.5 * x * x - 0.5 * kLog2Pi - std::log(-x) + std::log(series);
}

// AS 241 algorithm PPND16 (Wichura 1988), double-precision constants.
double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw NumericalFailure("normal_quantile: p outside [0,1]");
  }
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        q * (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                   6.7265770927008700853e4) *
                      r +
                  4.5921953931549871457e4) *
                     r +
                 1.3731693765509461125e4) *
                    r +
                1.9715909503065514427e3) *
                   r +
               1.3314166789178437745e2) *
                  r +
              3.3871328727963666080e0);
    const double den =
        (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
              3.9307895800092710610e4) *
                 r +
             2.1213794301586595867e4) *
                r +
            5.3941960214247511077e3) *
               r +
           6.8718700749205790830e2) *
              r +
          4.2313330701600911252e1) *
             r +
         1.0);
    return num / den;
  }
  double r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) *
                 r +
             1.27045825245236838258e0) *
                r +
            3.64784832476320460504e0) *
               r +
           5.76949722146069140550e0) *
              r +
          4.63033784615654529590e0) *
             r +
         1.42343711074968357734e0);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) *
                 r +
             1.48103976427480074590e-1) *
                r +
            6.89767334985100004550e-1) *
               r +
           1.67638483018380384940e0) *
              r +
          2.05319162663775882187e0) *
             r +
         1.0);
    val = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) *
                 r +
             2.65321895265761230930e-2) *
                r +
            2.96560571828504891230e-1) *
               r +
           1.78482653991729133580e0) *
              r +
          5.46378491116411436990e0) *
             r +
         6.65790464350110377720e0);
    const double den =
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) *
                 r +
             7.86869131145613259100e-4) *
                r +
            1.48753612908506148525e-2) *
               r +
           1.36929880922735805310e-1) *
              r +
          5.99832206555887937690e-1) *
             r +
         1.0);
    val = num / den;
  }
  return (q < 0.0) ? -val : val;
}

double logsumexp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

double logsumexp(const std::vector<double>& terms) {
  double m = -std::numeric_limits<double>::infinity();
  for (double t : terms) m = std::max(m, t);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

double log_expm1(double x) {
  if (x <= 0.0) throw NumericalFailure("log_expm1: requires x > 0");
  if (x > 36.0) return x;  // e^{-x} below double epsilon
  return std::log(std::expm1(x));
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw TooFewDraws("quantile_sorted: empty sample");
  if (q <= 0.0) return sorted.front();
  if (q >= 1.0) return sorted.back();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double ks_distance_gaussian(std::vector<double> draws, double sd) {
  if (draws.size() < 2) throw TooFewDraws("ks_distance_gaussian: need >= 2 draws");
  std::sort(draws.begin(), draws.end());
  const double m = static_cast<double>(draws.size());
  double ks = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double f = normal_cdf(draws[i] / sd);
    const double hi = (static_cast<double>(i) + 1.0) / m - f;
    const double lo = f - static_cast<double>(i) / m;
    ks = std::max(ks, std::max(hi, lo));
  }
  return ks;
}

namespace {

// Antiderivative of Φ(x/sd): G'(x) = Φ(x/sd), G(-inf) = 0.
double phi_antideriv(double x, double sd) {
  return x * normal_cdf(x / sd) + sd * normal_pdf(x / sd);
}

// Integral of |c - Φ(x/sd)| over [a, b] for a constant level c in [0,1].
double segment_l1(double a, double b, double c, double sd) {
  if (b <= a) return 0.0;
  auto below = [&](double x1, double x2) {
    // Φ <= c on [x1,x2]: integral of (c - Φ)
    return c * (x2 - x1) - (phi_antideriv(x2, sd) - phi_antideriv(x1, sd));
  };
  auto above = [&](double x1, double x2) {
    return (phi_antideriv(x2, sd) - phi_antideriv(x1, sd)) - c * (x2 - x1);
  };
  if (c <= 0.0) return above(a, b);
  if (c >= 1.0) return below(a, b);
  const double crossing = sd * normal_quantile(c);
  if (crossing <= a) return above(a, b);
  if (crossing >= b) return below(a, b);
  return below(a, crossing) + above(crossing, b);
}

}  // namespace

double w1_distance_gaussian(std::vector<double> draws, double sd) {
  if (draws.size() < 2) throw TooFewDraws("w1_distance_gaussian: need >= 2 draws");
  std::sort(draws.begin(), draws.end());
  const double m = static_cast<double>(draws.size());
  double total = phi_antideriv(draws.front(), sd);  // left tail, level 0
  for (std::size_t i = 0; i + 1 < draws.size(); ++i) {
    const double level = (static_cast<double>(i) + 1.0) / m;
    total += segment_l1(draws[i], draws[i + 1], level, sd);
  }
  total += phi_antideriv(draws.back(), sd) - draws.back();  // right tail, level 1
  return total;
}

double effective_sample_size(const std::vector<double>& series) {
  const std::size_t m = series.size();
  if (m < 4) throw TooFewDraws("effective_sample_size: need >= 4 draws");
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(m);
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = lag; i < m; ++i)
      s += (series[i] - mean) * (series[i - lag] - mean);
    return s / static_cast<double>(m);
  };
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  const double gamma0 = autocov(0);
  if (*lo == *hi || gamma0 <= 0.0) return static_cast<double>(m);  // constant series
  // Geyer: sum pair autocovariances while positive, enforce monotonicity.
  double sum_pairs = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < m; k += 2) {
    double pair = autocov(k) + autocov(k + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    sum_pairs += pair;
    prev_pair = pair;
  }
  const double iact = std::max(2.0 * sum_pairs / gamma0 - 1.0, 1e-12);
  return static_cast<double>(m) / iact;
}

double sample_normal_lower_truncated(Rng& rng, double lower) {
  if (lower < 0.5) {
    for (;;) {
      const double z = rng.normal();
      if (z >= lower) return z;
    }
  }
  // Robert (1995): exponential envelope in the upper tail.
  const double rate = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
  for (;;) {
    const double z = lower + rng.exponential(rate);
    const double diff = z - rate;
    if (std::log(rng.uniform()) <= -0.5 * diff * diff) return z;
  }
}

}  // namespace treebvm
