#include "kiresh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "kiresh/error.hpp"

namespace kiresh {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : k_(classes), counts_(classes * classes, 0) {
  if (classes < 2) throw InputError("a confusion matrix needs at least 2 classes");
}

ConfusionMatrix ConfusionMatrix::from_rows(const std::vector<std::vector<std::int64_t>>& rows) {
  ConfusionMatrix c(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size()) throw InputError("confusion matrix must be square");
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (rows[i][j] < 0) throw InputError("confusion counts must be non-negative");
      c.counts_[i * c.k_ + j] = rows[i][j];
    }
  }
  return c;
}

void ConfusionMatrix::add(std::size_t gold, std::size_t pred, std::int64_t n) {
  counts_[gold * k_ + pred] += n;
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t s = 0;
  for (auto v : counts_) s += v;
  return s;
}

std::int64_t ConfusionMatrix::correct() const {
  std::int64_t s = 0;
  for (std::size_t k = 0; k < k_; ++k) s += at(k, k);
  return s;
}

std::int64_t ConfusionMatrix::row_sum(std::size_t k) const {
  std::int64_t s = 0;
  for (std::size_t j = 0; j < k_; ++j) s += at(k, j);
  return s;
}

std::int64_t ConfusionMatrix::col_sum(std::size_t k) const {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < k_; ++i) s += at(i, k);
  return s;
}

ConfusionMatrix ConfusionMatrix::transposed() const {
  ConfusionMatrix t(k_);
  for (std::size_t i = 0; i < k_; ++i)
    for (std::size_t j = 0; j < k_; ++j) t.counts_[j * k_ + i] = at(i, j);
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw InputError("confusion matrices differ in size");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> golds, std::size_t k) {
  if (preds.size() != golds.size())
    throw InputError("prediction and gold sequences differ in length");
  if (preds.empty()) throw InputError("no examples to score");
  ConfusionMatrix c(k);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || golds[i] < 0 || static_cast<std::size_t>(preds[i]) >= k ||
        static_cast<std::size_t>(golds[i]) >= k)
      throw InputError("label outside [0, " + std::to_string(k) + ") at position " +
                       std::to_string(i));
    c.add(static_cast<std::size_t>(golds[i]), static_cast<std::size_t>(preds[i]));
  }
  return c;
}

namespace {

double ratio(double num, double den, std::size_t& undefined) {
  if (den == 0) {
    ++undefined;
    return 0.0;
  }
  return num / den;
}

double harmonic(double p, double r) { return p + r == 0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

PRF macro_prf(const ConfusionMatrix& c) {
  PRF out;
  const auto k = c.classes();
  for (std::size_t i = 0; i < k; ++i) {
    const auto tp = static_cast<double>(c.tp(i));
    out.precision += ratio(tp, tp + static_cast<double>(c.fp(i)), out.undefined);
    out.recall += ratio(tp, tp + static_cast<double>(c.fn(i)), out.undefined);
  }
  out.precision /= static_cast<double>(k);
  out.recall /= static_cast<double>(k);
  out.f1 = harmonic(out.precision, out.recall);
  return out;
}

PRF paper_micro_prf(const ConfusionMatrix& c, std::span<const double> supports) {
  if (supports.size() != c.classes()) throw InputError("support vector has the wrong length");
  double tp_n = 0, p_den = 0, r_den = 0;
  for (std::size_t i = 0; i < c.classes(); ++i) {
    const double n = supports[i];
    const auto tp = static_cast<double>(c.tp(i));
    tp_n += tp * n;
    p_den += (tp + static_cast<double>(c.fp(i))) * n;
    r_den += (tp + static_cast<double>(c.fn(i))) * n;
  }
  PRF out;
  out.precision = ratio(tp_n, p_den, out.undefined);
  out.recall = ratio(tp_n, r_den, out.undefined);
  out.f1 = harmonic(out.precision, out.recall);
  return out;
}

PRF paper_micro_prf(const ConfusionMatrix& c) {
  std::vector<double> n(c.classes());
  for (std::size_t i = 0; i < n.size(); ++i) n[i] = static_cast<double>(c.row_sum(i));
  return paper_micro_prf(c, n);
}

double standard_micro_f1(const ConfusionMatrix& c) {
  std::int64_t tp = 0, tp_fp = 0;
  for (std::size_t i = 0; i < c.classes(); ++i) {
    tp += c.tp(i);
    tp_fp += c.tp(i) + c.fp(i);
  }
  return tp_fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp_fp);
}

double accuracy(const ConfusionMatrix& c) {
  const auto s = c.total();
  return s == 0 ? 0.0 : static_cast<double>(c.correct()) / static_cast<double>(s);
}

std::vector<double> per_class_f1(const ConfusionMatrix& c) {
  std::vector<double> out(c.classes());
  std::size_t ignored = 0;
  for (std::size_t i = 0; i < c.classes(); ++i) {
    const auto tp = static_cast<double>(c.tp(i));
    const double p = ratio(tp, tp + static_cast<double>(c.fp(i)), ignored);
    const double r = ratio(tp, tp + static_cast<double>(c.fn(i)), ignored);
    out[i] = harmonic(p, r);
  }
  return out;
}

double mcc(const ConfusionMatrix& c) {
  // Integer arithmetic is exact for any realistic corpus size.
  const std::int64_t s = c.total();
  const std::int64_t correct = c.correct();
  std::int64_t pt = 0, pp = 0, tt = 0;
  for (std::size_t k = 0; k < c.classes(); ++k) {
    const std::int64_t t = c.row_sum(k), p = c.col_sum(k);
    pt += p * t;
    pp += p * p;
    tt += t * t;
  }
  const std::int64_t num = correct * s - pt;
  const std::int64_t den_p = s * s - pp, den_t = s * s - tt;
  if (den_p == 0 || den_t == 0) return 0.0;
  return static_cast<double>(num) /
         std::sqrt(static_cast<double>(den_p) * static_cast<double>(den_t));
}

ConfidenceRecord confidence_record(std::span<const double> probs, int gold) {
  if (probs.empty()) throw InputError("empty probability vector");
  const auto it = std::max_element(probs.begin(), probs.end());
  return {*it, static_cast<int>(it - probs.begin()) == gold};
}

std::size_t ece_bin(double confidence, std::size_t bins) {
  const double m = static_cast<double>(bins);
  auto b = static_cast<std::int64_t>(std::ceil(confidence * m)) - 1;
  b = std::clamp<std::int64_t>(b, 0, static_cast<std::int64_t>(bins) - 1);
  // Align with the boundaries i/M exactly as they round in double.
  while (b > 0 && confidence <= static_cast<double>(b) / m) --b;
  while (b + 1 < static_cast<std::int64_t>(bins) && confidence > static_cast<double>(b + 1) / m) ++b;
  return static_cast<std::size_t>(b);
}

std::vector<ReliabilityBin> reliability_bins(std::span<const ConfidenceRecord> records,
                                             std::size_t bins) {
  if (bins == 0) throw InputError("ECE needs at least one bin");
  std::vector<ReliabilityBin> out(bins);
  std::vector<double> conf_sum(bins, 0.0);
  std::vector<std::size_t> correct(bins, 0);
  for (std::size_t i = 0; i < bins; ++i) {
    out[i].lower = static_cast<double>(i) / static_cast<double>(bins);
    out[i].upper = static_cast<double>(i + 1) / static_cast<double>(bins);
  }
  for (const auto& r : records) {
    const auto b = ece_bin(r.confidence, bins);
    ++out[b].count;
    conf_sum[b] += r.confidence;
    correct[b] += r.correct ? 1 : 0;
  }
  for (std::size_t i = 0; i < bins; ++i) {
    if (out[i].count == 0) continue;
    const auto n = static_cast<double>(out[i].count);
    out[i].accuracy = static_cast<double>(correct[i]) / n;
    out[i].confidence = conf_sum[i] / n;
  }
  return out;
}

double ece(std::span<const ConfidenceRecord> records, std::size_t bins) {
  const auto table = reliability_bins(records, bins);
  if (records.empty()) return 0.0;
  const auto n = static_cast<double>(records.size());
  double total = 0;
  for (const auto& b : table)
    if (b.count > 0)
      total += static_cast<double>(b.count) / n * std::abs(b.accuracy - b.confidence);
  return total;
}

double ece(const std::vector<std::vector<double>>& probs, std::span<const int> golds,
           std::size_t bins) {
  if (probs.size() != golds.size()) throw InputError("probability and gold counts differ");
  std::vector<ConfidenceRecord> records;
  records.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    records.push_back(confidence_record(probs[i], golds[i]));
  return ece(records, bins);
}

double fleiss_kappa(const std::vector<std::vector<std::string>>& ratings) {
  if (ratings.size() < 2) throw InputError("Fleiss' kappa needs at least 2 items");
  const std::size_t raters = ratings.front().size();
  if (raters < 2) throw InputError("Fleiss' kappa needs at least 2 annotators per item");
  std::map<std::string, std::size_t> category_index;
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    if (ratings[i].size() != raters)
      throw InputError("item " + std::to_string(i) + " has " + std::to_string(ratings[i].size()) +
                       " ratings, expected " + std::to_string(raters));
    for (const auto& c : ratings[i]) category_index.emplace(c, category_index.size());
  }
  const std::size_t items = ratings.size();
  const auto n = static_cast<double>(raters);
  std::vector<double> category_total(category_index.size(), 0.0);
  double p_bar = 0;
  for (const auto& row : ratings) {
    std::vector<double> counts(category_index.size(), 0.0);
    for (const auto& c : row) counts[category_index.at(c)] += 1.0;
    double sq = 0;
    for (std::size_t j = 0; j < counts.size(); ++j) {
      sq += counts[j] * counts[j];
      category_total[j] += counts[j];
    }
    p_bar += (sq - n) / (n * (n - 1.0));
  }
  p_bar /= static_cast<double>(items);
  double p_e = 0;
  for (double t : category_total) {
    const double pj = t / (static_cast<double>(items) * n);
    p_e += pj * pj;
  }
  if (p_e >= 1.0) return 1.0;
  return (p_bar - p_e) / (1.0 - p_e);
}

TaskMetrics task_metrics(const ConfusionMatrix& c) {
  TaskMetrics m;
  m.mcc = mcc(c);
  m.macro = macro_prf(c);
  m.paper_micro = paper_micro_prf(c);
  m.standard_micro_f1 = standard_micro_f1(c);
  m.accuracy = accuracy(c);
  m.per_class_f1 = per_class_f1(c);
  for (std::size_t k = 0; k < c.classes(); ++k) m.support.push_back(c.row_sum(k));
  m.undefined_ratios = m.macro.undefined + m.paper_micro.undefined;
  return m;
}

nlohmann::json to_json(const TaskMetrics& m) {
  return {
      {"mcc", m.mcc},
      {"macro_precision", m.macro.precision},
      {"macro_recall", m.macro.recall},
      {"macro_f1", m.macro.f1},
      {"paper_micro_precision", m.paper_micro.precision},
      {"paper_micro_recall", m.paper_micro.recall},
      {"paper_micro_f1", m.paper_micro.f1},
      {"standard_micro_f1", m.standard_micro_f1},
      {"accuracy", m.accuracy},
      {"per_class_f1", m.per_class_f1},
      {"support", m.support},
      {"undefined_ratios", m.undefined_ratios},
  };
}

}  // namespace kiresh
