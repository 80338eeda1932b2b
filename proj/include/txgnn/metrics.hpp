#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace txgnn {

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  // Zero-denominator ratios are reported as 0 with the matching flag set.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
  bool has_auc = false;

  std::string csv_header() const;
  std::string csv_row() const;
  std::string pretty() const;
};

// Threshold rule: predicted positive iff prob >= threshold. Positive class is
// illicit (label 1).
EvalReport classification_metrics(const std::vector<double>& probs,
                                  const std::vector<int>& labels,
                                  double threshold = 0.5);

// Probability that a random positive outranks a random negative, ties worth
// 1/2 (computed from average ranks). Throws on single-class input.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// classification_metrics plus auc when both classes are present.
EvalReport evaluate(const std::vector<double>& probs,
                    const std::vector<int>& labels, double threshold = 0.5);

}  // namespace txgnn
