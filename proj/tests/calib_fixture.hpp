#pragma once
// Records whose gold labels are sampled from softmax(z_true) while the stored
// logits are scale * z_true. scale = 1 is calibrated by construction; scale = 5
// is the "5x overconfident" fixture.
#include <cmath>
#include <string>
#include <vector>

#include "kiresh/records.hpp"
#include "kiresh/rng.hpp"

namespace fixture {

template <std::size_t K>
int sample_softmax(const std::array<double, K>& z, kiresh::Rng& rng) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  std::array<double, K> p{};
  double sum = 0;
  for (std::size_t i = 0; i < K; ++i) sum += p[i] = std::exp(z[i] - m);
  double u = rng.uniform() * sum;
  for (std::size_t i = 0; i < K; ++i) {
    u -= p[i];
    if (u < 0) return static_cast<int>(i);
  }
  return static_cast<int>(K - 1);
}

inline std::vector<kiresh::ProbRecord> scaled_records(std::size_t n, double scale, std::uint64_t seed,
                                                      double spread = 1.5) {
  kiresh::Rng rng(seed);
  std::vector<kiresh::ProbRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    kiresh::ProbRecord r;
    r.id = "r" + std::to_string(i);
    std::array<double, kiresh::kNumPresence> zp{};
    std::array<double, kiresh::kNumPeriod> zq{};
    for (auto& v : zp) v = spread * rng.normal();
    for (auto& v : zq) v = spread * rng.normal();
    r.gold.presence = static_cast<kiresh::Presence>(sample_softmax(zp, rng));
    r.gold.period = static_cast<kiresh::Period>(sample_softmax(zq, rng));
    for (std::size_t k = 0; k < zp.size(); ++k) r.presence_logits[k] = scale * zp[k];
    for (std::size_t k = 0; k < zq.size(); ++k) r.period_logits[k] = scale * zq[k];
    out.push_back(r);
  }
  return out;
}

}  // namespace fixture
