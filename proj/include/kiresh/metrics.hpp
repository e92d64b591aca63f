#pragma once

// Confusion-matrix metrics, expected calibration error and Fleiss' kappa.
//
// Conventions: a per-class ratio with a zero denominator counts as 0 and is
// tallied in `undefined`; an MCC with a zero denominator is 0.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace kiresh {

// C[i][j] counts gold class i predicted as class j.
class ConfusionMatrix {
public:
  explicit ConfusionMatrix(std::size_t classes);
  static ConfusionMatrix from_rows(const std::vector<std::vector<std::int64_t>>& rows);

  std::size_t classes() const { return k_; }
  std::int64_t at(std::size_t gold, std::size_t pred) const { return counts_[gold * k_ + pred]; }
  void add(std::size_t gold, std::size_t pred, std::int64_t n = 1);

  std::int64_t total() const;
  std::int64_t correct() const;
  std::int64_t row_sum(std::size_t k) const;  // gold support
  std::int64_t col_sum(std::size_t k) const;  // predicted count
  std::int64_t tp(std::size_t k) const { return at(k, k); }
  std::int64_t fp(std::size_t k) const { return col_sum(k) - tp(k); }
  std::int64_t fn(std::size_t k) const { return row_sum(k) - tp(k); }

  ConfusionMatrix transposed() const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
  std::size_t k_;
  std::vector<std::int64_t> counts_;
};

// Throws InputError on length mismatch, empty input or labels outside [0, K).
ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> golds, std::size_t k);

struct PRF {
  double precision = 0, recall = 0, f1 = 0;
  std::size_t undefined = 0;
};

// Macro P and R are class means of TP/(TP+FP) and TP/(TP+FN); F1 is the
// harmonic mean of those two means.
PRF macro_prf(const ConfusionMatrix& c);

// Support-weighted micro averages:
//   P = sum TP_i n_i / sum (TP_i + FP_i) n_i,  R likewise with FN_i,
// F1 the harmonic mean. `supports` defaults to the gold row sums.
PRF paper_micro_prf(const ConfusionMatrix& c, std::span<const double> supports);
PRF paper_micro_prf(const ConfusionMatrix& c);

// Pooled TP / (TP + FP); equals accuracy for single-label classification.
double standard_micro_f1(const ConfusionMatrix& c);
double accuracy(const ConfusionMatrix& c);
std::vector<double> per_class_f1(const ConfusionMatrix& c);

// (c s - sum p_k t_k) / sqrt((s^2 - sum p_k^2)(s^2 - sum t_k^2)), with c the
// trace, s the total, t_k the gold and p_k the predicted counts.
double mcc(const ConfusionMatrix& c);

struct ConfidenceRecord {
  double confidence = 0;
  bool correct = false;
};

// Confidence is the largest probability; the prediction is its (first)
// index.
ConfidenceRecord confidence_record(std::span<const double> probs, int gold);

// Bin of confidence p among M equal-width bins of (0, 1]: bin i (0-based)
// holds (i/M, (i+1)/M]. p = 0 lands in bin 0.
std::size_t ece_bin(double confidence, std::size_t bins);

struct ReliabilityBin {
  double lower = 0, upper = 0;
  std::size_t count = 0;
  double accuracy = 0, confidence = 0;
};

std::vector<ReliabilityBin> reliability_bins(std::span<const ConfidenceRecord> records,
                                             std::size_t bins);
double ece(std::span<const ConfidenceRecord> records, std::size_t bins = 10);
double ece(const std::vector<std::vector<double>>& probs, std::span<const int> golds,
           std::size_t bins = 10);

// ratings[item][annotator] = category. Every item needs the same number of
// annotators (>= 2), and there must be >= 2 items. Returns 1 when expected
// agreement is 1.
double fleiss_kappa(const std::vector<std::vector<std::string>>& ratings);

struct TaskMetrics {
  double mcc = 0;
  PRF macro;
  PRF paper_micro;
  double standard_micro_f1 = 0;
  double accuracy = 0;
  std::vector<double> per_class_f1;
  std::vector<std::int64_t> support;
  std::size_t undefined_ratios = 0;
};

TaskMetrics task_metrics(const ConfusionMatrix& c);
nlohmann::json to_json(const TaskMetrics& m);

}  // namespace kiresh
