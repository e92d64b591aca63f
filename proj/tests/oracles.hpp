#pragma once
// Brute-force reference implementations used only by tests. They work from
// expanded (gold, pred) samples or raw definitions rather than from the
// confusion-matrix shortcuts the library uses.
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

using Pairs = std::vector<std::pair<int, int>>;  // (gold, pred)

inline Pairs expand(const std::vector<std::vector<std::int64_t>>& rows) {
  Pairs out;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      for (std::int64_t n = 0; n < rows[i][j]; ++n)
        out.emplace_back(static_cast<int>(i), static_cast<int>(j));
  return out;
}

// Multiclass MCC as the correlation of one-hot gold and prediction vectors.
inline double mcc(const Pairs& s, int k) {
  const long double n = static_cast<long double>(s.size());
  std::vector<long double> mx(k, 0), my(k, 0);
  for (auto [g, p] : s) {
    mx[g] += 1;
    my[p] += 1;
  }
  for (int c = 0; c < k; ++c) {
    mx[c] /= n;
    my[c] /= n;
  }
  long double cxy = 0, cxx = 0, cyy = 0;
  for (auto [g, p] : s)
    for (int c = 0; c < k; ++c) {
      const long double x = (g == c) - mx[c];
      const long double y = (p == c) - my[c];
      cxy += x * y;
      cxx += x * x;
      cyy += y * y;
    }
  if (cxx == 0 || cyy == 0) return 0.0;
  return static_cast<double>(cxy / std::sqrt(cxx * cyy));
}

struct Counts {
  std::vector<long double> tp, fp, fn, support;
};

inline Counts counts(const Pairs& s, int k) {
  Counts c{std::vector<long double>(k, 0), std::vector<long double>(k, 0),
           std::vector<long double>(k, 0), std::vector<long double>(k, 0)};
  for (auto [g, p] : s) {
    c.support[g] += 1;
    if (g == p) {
      c.tp[g] += 1;
    } else {
      c.fp[p] += 1;
      c.fn[g] += 1;
    }
  }
  return c;
}

inline long double ratio(long double a, long double b) { return b == 0 ? 0 : a / b; }
inline long double harmonic(long double p, long double r) { return p + r == 0 ? 0 : 2 * p * r / (p + r); }

struct PRF {
  double p, r, f1;
};

inline PRF macro(const Pairs& s, int k) {
  const Counts c = counts(s, k);
  long double p = 0, r = 0;
  for (int i = 0; i < k; ++i) {
    p += ratio(c.tp[i], c.tp[i] + c.fp[i]);
    r += ratio(c.tp[i], c.tp[i] + c.fn[i]);
  }
  p /= k;
  r /= k;
  return {static_cast<double>(p), static_cast<double>(r), static_cast<double>(harmonic(p, r))};
}

inline PRF paper_micro(const Pairs& s, int k) {
  const Counts c = counts(s, k);
  long double pn = 0, pd = 0, rd = 0;
  for (int i = 0; i < k; ++i) {
    pn += c.tp[i] * c.support[i];
    pd += (c.tp[i] + c.fp[i]) * c.support[i];
    rd += (c.tp[i] + c.fn[i]) * c.support[i];
  }
  const long double p = ratio(pn, pd), r = ratio(pn, rd);
  return {static_cast<double>(p), static_cast<double>(r), static_cast<double>(harmonic(p, r))};
}

// ECE with bins ((i-1)/M, i/M], scanning every bin for each record.
inline double ece(const std::vector<std::pair<double, bool>>& recs, int m) {
  std::vector<long double> conf(m, 0), acc(m, 0), count(m, 0);
  for (auto [p, ok] : recs) {
    int bin = 0;
    for (int i = 0; i < m; ++i) {
      const double lo = static_cast<double>(i) / m, hi = static_cast<double>(i + 1) / m;
      if (p > lo && p <= hi) bin = i;
    }
    conf[bin] += p;
    acc[bin] += ok;
    count[bin] += 1;
  }
  long double e = 0;
  for (int i = 0; i < m; ++i)
    if (count[i] > 0) e += count[i] / recs.size() * std::fabs(acc[i] / count[i] - conf[i] / count[i]);
  return static_cast<double>(e);
}

// Fleiss' kappa with per-item agreement counted over annotator pairs.
inline double fleiss(const std::vector<std::vector<std::string>>& items) {
  const std::size_t n = items.front().size();
  long double pbar = 0;
  std::map<std::string, long double> total;
  for (const auto& item : items) {
    std::size_t agree = 0;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        if (a != b && item[a] == item[b]) ++agree;
    pbar += static_cast<long double>(agree) / (n * (n - 1));
    for (const auto& r : item) total[r] += 1;
  }
  pbar /= items.size();
  long double pe = 0;
  for (const auto& [cat, cnt] : total) {
    const long double pj = cnt / (items.size() * n);
    pe += pj * pj;
  }
  if (pe >= 1) return 1.0;
  return static_cast<double>((pbar - pe) / (1 - pe));
}

}  // namespace oracle
