#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "eegalign/error.hpp"

namespace eegalign {

enum class WilcoxonMode { kExact, kApprox, kAuto };

struct WilcoxonResult {
  double w = 0.0;            // min(W+, W-)
  double w_plus = 0.0;       // rank sum of positive differences (b - a)
  double w_minus = 0.0;      // rank sum of negative differences
  double p_two_sided = 1.0;
  int n = 0;                 // pairs surviving zero-difference removal
  bool exact = false;
};

namespace detail {

// Mid-ranks of |d| (average rank across ties). Returned ranks are
// multiples of 0.5.
inline std::vector<double> midranks(const std::vector<double>& abs_d) {
  const std::size_t n = abs_d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return abs_d[a] < abs_d[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && abs_d[order[j + 1]] == abs_d[order[i]]) ++j;
    const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

// Exact null distribution of W+ by dynamic programming over doubled ranks
// (mid-ranks are half-integers, so 2*rank is integral). counts[s] is the
// number of sign assignments with doubled rank sum s; all 2^n assignments
// are equally likely under H0.
inline double exact_p_le(const std::vector<double>& ranks, double w) {
  std::int64_t total = 0;
  std::vector<std::int64_t> doubled;
  doubled.reserve(ranks.size());
  for (double r : ranks) {
    const auto d = static_cast<std::int64_t>(std::llround(2.0 * r));
    doubled.push_back(d);
    total += d;
  }
  std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
  counts[0] = 1.0;
  std::int64_t reach = 0;
  for (std::int64_t d : doubled) {
    reach += d;
    for (std::int64_t s = reach; s >= d; --s) {
      counts[static_cast<std::size_t>(s)] +=
          counts[static_cast<std::size_t>(s - d)];
    }
  }
  const auto cutoff = static_cast<std::int64_t>(std::floor(2.0 * w + 1e-9));
  double below = 0.0;
  for (std::int64_t s = 0; s <= std::min(cutoff, total); ++s) {
    below += counts[static_cast<std::size_t>(s)];
  }
  return below / std::ldexp(1.0, static_cast<int>(ranks.size()));
}

inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / 1.4142135623730951);
}

}  // namespace detail

// Paired two-sided Wilcoxon signed-rank test on differences b - a. Zero
// differences are dropped before ranking; tied |differences| get
// mid-ranks. Exact p-values enumerate the full sign-assignment
// distribution (auto mode: n <= 25); otherwise a normal approximation with
// continuity and tie corrections is used.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                           const std::vector<double>& b,
                                           WilcoxonMode mode = WilcoxonMode::kAuto) {
  require(a.size() == b.size(), ErrorKind::kValidation,
          "paired samples differ in length");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = b[i] - a[i];
    if (d != 0.0) diffs.push_back(d);
  }
  require(!diffs.empty(), ErrorKind::kDegenerateInput,
          "all paired differences are zero");
  require(diffs.size() >= 4, ErrorKind::kValidation,
          "need at least four non-zero differences");

  std::vector<double> abs_d(diffs.size());
  for (std::size_t i = 0; i < diffs.size(); ++i) abs_d[i] = std::abs(diffs[i]);
  const std::vector<double> ranks = detail::midranks(abs_d);

  WilcoxonResult res;
  res.n = static_cast<int>(diffs.size());
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    if (diffs[i] > 0.0) {
      res.w_plus += ranks[i];
    } else {
      res.w_minus += ranks[i];
    }
  }
  res.w = std::min(res.w_plus, res.w_minus);

  const bool exact = mode == WilcoxonMode::kExact ||
                     (mode == WilcoxonMode::kAuto && res.n <= 25);
  if (exact) {
    res.exact = true;
    res.p_two_sided = std::min(1.0, 2.0 * detail::exact_p_le(ranks, res.w));
  } else {
    const double n = res.n;
    const double mean = n * (n + 1.0) / 4.0;
    double tie_term = 0.0;
    {
      std::vector<double> sorted = abs_d;
      std::sort(sorted.begin(), sorted.end());
      std::size_t i = 0;
      while (i < sorted.size()) {
        std::size_t j = i;
        while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
      }
    }
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    require(var > 0.0, ErrorKind::kDegenerateInput,
            "zero variance in the rank distribution");
    const double z = (res.w_plus - mean - 0.5 * ((res.w_plus > mean) -
                                                 (res.w_plus < mean))) /
                     std::sqrt(var);
    res.p_two_sided =
        std::min(1.0, 2.0 * (1.0 - detail::normal_cdf(std::abs(z))));
  }
  return res;
}

// Sample Pearson correlation coefficient.
inline double pearson_r(const std::vector<double>& x,
                        const std::vector<double>& y) {
  require(x.size() == y.size(), ErrorKind::kValidation,
          "samples differ in length");
  require(x.size() >= 3, ErrorKind::kValidation, "need at least three points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  require(sxx > 0.0 && syy > 0.0, ErrorKind::kDegenerateInput,
          "zero variance in at least one sample");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

}  // namespace eegalign
