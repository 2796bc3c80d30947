// stats.hpp
//
// Rank-based tests used by the analysis pipeline.
//
// Mann-Whitney U: ranks are midranks, U1 = R1 - n1(n1+1)/2 counts the pairs
// (a_i, b_j) with a_i > b_j (ties count one half). The reported U is
// min(U1, U2). Small tie-free samples get an exact p from the null
// distribution of U1, counted with the recurrence
//
//   c(u; i, j) = c(u - j; i - 1, j) + c(u; i, j - 1)
//
// (condition on whether the largest observation belongs to the first
// sample). Otherwise p comes from the normal approximation with
// tie-corrected variance
//
//   var = n1 n2 / 12 * ((N + 1) - sum(t^3 - t) / (N (N - 1)))
//
// and an optional 0.5 continuity correction. z is reported as a positive
// magnitude.
//
// Spearman: rho is the Pearson correlation of midranks. p uses the
// t-approximation t = rho sqrt((n - 2) / (1 - rho^2)) with n - 2 degrees of
// freedom, or full permutation enumeration for n <= 9.

#pragma once

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jatrain/error.hpp"

namespace jatrain::stats {

enum class Alternative { two_tailed, one_tailed_greater, one_tailed_less };

constexpr std::string_view to_string(Alternative a) {
  switch (a) {
    case Alternative::two_tailed: return "two_tailed";
    case Alternative::one_tailed_greater: return "one_tailed_greater";
    case Alternative::one_tailed_less: return "one_tailed_less";
  }
  return "?";
}

enum class Method { exact, normal_approx, t_approx };

constexpr std::string_view to_string(Method m) {
  switch (m) {
    case Method::exact: return "exact";
    case Method::normal_approx: return "normal_approx";
    case Method::t_approx: return "t_approx";
  }
  return "?";
}

struct StatTestResult {
  std::string test_name;
  // Mann-Whitney
  std::optional<double> u;   // min(U1, U2)
  std::optional<double> u1;  // statistic of the first sample
  std::optional<double> u2;
  std::optional<double> z;   // positive magnitude
  // Spearman
  std::optional<double> rho;
  std::optional<double> t;

  double p_value = 1.0;
  Alternative alternative = Alternative::two_tailed;
  Method method = Method::normal_approx;
  std::size_t n1 = 0;
  std::size_t n2 = 0;  // equals n1 for Spearman
  bool tie_correction_applied = false;
  bool continuity_correction = false;
  bool degenerate = false;
};

// ---------------------------------------------------------------------------
// Ranks

/// 1-based midranks of `values`, in input order.
inline std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

/// sum over tie groups of (t^3 - t).
inline double tie_term(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  double term = 0.0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i + 1;
    while (j < v.size() && v[j] == v[i]) ++j;
    const double t = static_cast<double>(j - i);
    term += t * t * t - t;
    i = j;
  }
  return term;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

namespace detail {

inline void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw InputError(std::string(what) + " contains a non-finite value");
}

inline double clamp_p(double p) { return std::clamp(p, 0.0, 1.0); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Mann-Whitney U

/// Number of orderings of n1 + n2 distinct values that give U1 = u, for
/// u = 0..n1*n2. Counts fit exactly in a double for n1 + n2 <= 60.
inline std::vector<double> mann_whitney_null_counts(std::size_t n1, std::size_t n2) {
  // table[i][j] is the count vector for sizes (i, j); rows are rebuilt in place.
  std::vector<std::vector<std::vector<double>>> table(n1 + 1, std::vector<std::vector<double>>(n2 + 1));
  for (std::size_t i = 0; i <= n1; ++i) {
    for (std::size_t j = 0; j <= n2; ++j) {
      auto& cell = table[i][j];
      cell.assign(i * j + 1, 0.0);
      if (i == 0 || j == 0) {
        cell[0] = 1.0;
        continue;
      }
      const auto& largest_in_a = table[i - 1][j];  // shifts U1 by j
      const auto& largest_in_b = table[i][j - 1];
      for (std::size_t u = 0; u < largest_in_a.size(); ++u) cell[u + j] += largest_in_a[u];
      for (std::size_t u = 0; u < largest_in_b.size(); ++u) cell[u] += largest_in_b[u];
    }
  }
  return table[n1][n2];
}

enum class MannWhitneyMethod { automatic, exact, normal_approx };

struct MannWhitneyOptions {
  MannWhitneyMethod method = MannWhitneyMethod::automatic;
  bool continuity_correction = true;
  bool tie_correction = true;
  /// Largest n1 + n2 for which `automatic` picks the exact distribution.
  std::size_t exact_max_total = 20;
};

/// One-tailed alternatives refer to the first sample: `one_tailed_less`
/// means a tends to be smaller than b.
inline StatTestResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                     Alternative alternative = Alternative::two_tailed,
                                     const MannWhitneyOptions& opt = {}) {
  if (a.empty() || b.empty()) throw InputError("Mann-Whitney U needs two non-empty samples");
  detail::require_finite(a, "first sample");
  detail::require_finite(b, "second sample");

  const std::size_t n1 = a.size(), n2 = b.size(), total = n1 + n2;
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = midranks(pooled);
  const double r1 = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(n1), 0.0);
  const double nn = static_cast<double>(n1) * static_cast<double>(n2);
  const double u1 = r1 - static_cast<double>(n1) * static_cast<double>(n1 + 1) / 2.0;
  const double u2 = nn - u1;
  const double ties = tie_term(pooled);

  StatTestResult res;
  res.test_name = "mann_whitney_u";
  res.u = std::min(u1, u2);
  res.u1 = u1;
  res.u2 = u2;
  res.alternative = alternative;
  res.n1 = n1;
  res.n2 = n2;

  const bool all_equal = std::all_of(pooled.begin(), pooled.end(),
                                     [&](double v) { return v == pooled.front(); });
  if (all_equal) {
    res.p_value = 1.0;
    res.z = 0.0;
    res.degenerate = true;
    res.method = Method::normal_approx;
    res.tie_correction_applied = opt.tie_correction;
    return res;
  }

  // Identical multisets carry no evidence either way; p is still computed.
  {
    std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    res.degenerate = sa == sb;
  }

  const bool has_ties = ties > 0.0;
  bool use_exact = false;
  switch (opt.method) {
    case MannWhitneyMethod::automatic: use_exact = !has_ties && total <= opt.exact_max_total; break;
    case MannWhitneyMethod::exact:
      if (has_ties) throw InputError("exact Mann-Whitney p requires tie-free samples");
      if (total > 60) throw InputError("exact Mann-Whitney p limited to n1 + n2 <= 60");
      use_exact = true;
      break;
    case MannWhitneyMethod::normal_approx: use_exact = false; break;
  }

  const double mu = nn / 2.0;
  const double n = static_cast<double>(total);
  double var = nn / 12.0 * (n + 1.0);
  if (opt.tie_correction && has_ties) var = nn / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
  const double sigma = std::sqrt(var);
  const double cc = opt.continuity_correction ? 0.5 : 0.0;
  res.z = std::max(0.0, std::abs(u1 - mu) - cc) / sigma;

  if (use_exact) {
    const auto counts = mann_whitney_null_counts(n1, n2);
    const double all = std::accumulate(counts.begin(), counts.end(), 0.0);
    const auto k = static_cast<std::size_t>(std::llround(u1));
    const double le = std::accumulate(counts.begin(), counts.begin() + static_cast<std::ptrdiff_t>(k + 1), 0.0);
    const double ge = std::accumulate(counts.begin() + static_cast<std::ptrdiff_t>(k), counts.end(), 0.0);
    const double p_less = le / all, p_greater = ge / all;
    res.method = Method::exact;
    switch (alternative) {
      case Alternative::one_tailed_less: res.p_value = p_less; break;
      case Alternative::one_tailed_greater: res.p_value = p_greater; break;
      case Alternative::two_tailed: res.p_value = std::min(1.0, 2.0 * std::min(p_less, p_greater)); break;
    }
    return res;
  }

  res.method = Method::normal_approx;
  res.tie_correction_applied = opt.tie_correction && has_ties;
  res.continuity_correction = opt.continuity_correction;
  switch (alternative) {
    case Alternative::one_tailed_less: res.p_value = normal_cdf((u1 - mu + cc) / sigma); break;
    case Alternative::one_tailed_greater: res.p_value = normal_sf((u1 - mu - cc) / sigma); break;
    case Alternative::two_tailed: res.p_value = std::min(1.0, 2.0 * normal_sf(*res.z)); break;
  }
  res.p_value = detail::clamp_p(res.p_value);
  return res;
}

/// z implied by a reported U under the normal approximation without ties.
inline double mann_whitney_z_from_u(double u, std::size_t n1, std::size_t n2, bool continuity_correction) {
  const double nn = static_cast<double>(n1) * static_cast<double>(n2);
  const double sigma = std::sqrt(nn * static_cast<double>(n1 + n2 + 1) / 12.0);
  const double cc = continuity_correction ? 0.5 : 0.0;
  return std::max(0.0, std::abs(u - nn / 2.0) - cc) / sigma;
}

// ---------------------------------------------------------------------------
// Spearman

enum class SpearmanMethod { t_approx, exact };

struct SpearmanOptions {
  SpearmanMethod method = SpearmanMethod::t_approx;
  Alternative alternative = Alternative::two_tailed;
};

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return sxy / std::sqrt(sxx * syy);
}

/// p of a Spearman rho under the t-approximation with n - 2 dof.
inline double spearman_t_p(double rho, std::size_t n, Alternative alt = Alternative::two_tailed) {
  if (n < 3) throw InputError("t-approximation needs n >= 3");
  const double dof = static_cast<double>(n - 2);
  if (std::abs(rho) >= 1.0) {
    switch (alt) {
      case Alternative::two_tailed: return 0.0;
      case Alternative::one_tailed_greater: return rho > 0 ? 0.0 : 1.0;
      case Alternative::one_tailed_less: return rho < 0 ? 0.0 : 1.0;
    }
  }
  const double t = rho * std::sqrt(dof / ((1.0 + rho) * (1.0 - rho)));
  const boost::math::students_t_distribution<double> dist(dof);
  switch (alt) {
    case Alternative::two_tailed: return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
    case Alternative::one_tailed_greater: return boost::math::cdf(boost::math::complement(dist, t));
    case Alternative::one_tailed_less: return boost::math::cdf(dist, t);
  }
  return 1.0;
}

inline StatTestResult spearman(std::span<const double> x, std::span<const double> y,
                               const SpearmanOptions& opt = {}) {
  if (x.size() != y.size())
    throw InputError("Spearman needs equal-length samples (" + std::to_string(x.size()) + " vs " +
                     std::to_string(y.size()) + ")");
  if (x.size() < 3) throw InputError("Spearman needs n >= 3");
  detail::require_finite(x, "x");
  detail::require_finite(y, "y");

  const std::size_t n = x.size();
  StatTestResult res;
  res.test_name = "spearman";
  res.alternative = opt.alternative;
  res.n1 = res.n2 = n;
  res.tie_correction_applied = tie_term(x) > 0.0 || tie_term(y) > 0.0;

  const auto rx = midranks(x);
  const auto ry = midranks(y);
  auto constant = [](const std::vector<double>& r) {
    return std::all_of(r.begin(), r.end(), [&](double v) { return v == r.front(); });
  };
  if (constant(rx) || constant(ry)) {
    res.degenerate = true;
    res.p_value = 1.0;
    res.method = opt.method == SpearmanMethod::exact ? Method::exact : Method::t_approx;
    return res;
  }

  const double rho = std::clamp(pearson(rx, ry), -1.0, 1.0);
  res.rho = rho;

  if (opt.method == SpearmanMethod::t_approx) {
    res.method = Method::t_approx;
    if (std::abs(rho) < 1.0) res.t = rho * std::sqrt((n - 2.0) / ((1.0 + rho) * (1.0 - rho)));
    res.p_value = spearman_t_p(rho, n, opt.alternative);
    return res;
  }

  if (n > 9) throw InputError("exact Spearman permutation p limited to n <= 9");
  res.method = Method::exact;
  constexpr double kEps = 1e-12;
  std::vector<double> perm = ry;
  std::sort(perm.begin(), perm.end());
  std::size_t hits = 0, count = 0;
  do {
    const double r = pearson(rx, perm);
    ++count;
    switch (opt.alternative) {
      case Alternative::two_tailed:
        if (std::abs(r) >= std::abs(rho) - kEps) ++hits;
        break;
      case Alternative::one_tailed_greater:
        if (r >= rho - kEps) ++hits;
        break;
      case Alternative::one_tailed_less:
        if (r <= rho + kEps) ++hits;
        break;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  // next_permutation skips duplicate arrangements of tied ranks; each
  // distinct arrangement stands for the same number of raw permutations, so
  // the ratio is unchanged.
  res.p_value = static_cast<double>(hits) / static_cast<double>(count);
  return res;
}

}  // namespace jatrain::stats
