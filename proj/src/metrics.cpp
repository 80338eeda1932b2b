#include "txgnn/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "txgnn/common.hpp"

namespace txgnn {

std::string EvalReport::csv_header() const {
  return "precision,recall,f1,auc,tp,fp,tn,fn";
}

std::string EvalReport::csv_row() const {
  std::ostringstream o;
  o.precision(10);
  o << precision << ',' << recall << ',' << f1 << ',';
  if (has_auc) o << auc;
  o << ',' << tp << ',' << fp << ',' << tn << ',' << fn;
  return o.str();
}

std::string EvalReport::pretty() const {
  std::ostringstream o;
  o.precision(4);
  o << std::fixed;
  o << "precision " << precision << (precision_undefined ? " (undefined)" : "")
    << "  recall " << recall << (recall_undefined ? " (undefined)" : "")
    << "  f1 " << f1 << (f1_undefined ? " (undefined)" : "");
  if (has_auc) o << "  auc " << auc;
  o << "  [tp " << tp << " fp " << fp << " tn " << tn << " fn " << fn << "]";
  return o.str();
}

EvalReport classification_metrics(const std::vector<double>& probs,
                                  const std::vector<int>& labels,
                                  double threshold) {
  if (probs.size() != labels.size()) {
    throw ArgumentError("metrics: " + std::to_string(probs.size()) +
                        " probabilities vs " + std::to_string(labels.size()) +
                        " labels");
  }
  if (probs.empty()) throw ArgumentError("metrics: empty input");
  EvalReport r;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    bool pred = probs[i] >= threshold;
    bool pos = labels[i] == 1;
    if (pred && pos) ++r.tp;
    else if (pred && !pos) ++r.fp;
    else if (!pred && pos) ++r.fn;
    else ++r.tn;
  }
  if (r.tp + r.fp > 0) r.precision = double(r.tp) / double(r.tp + r.fp);
  else r.precision_undefined = true;
  if (r.tp + r.fn > 0) r.recall = double(r.tp) / double(r.tp + r.fn);
  else r.recall_undefined = true;
  if (r.precision + r.recall > 0.0) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  } else {
    r.f1_undefined = true;
  }
  return r;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw ArgumentError("auc: input size mismatch or empty");
  }
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += (y == 1);
  std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw ArgumentError("auc: needs at least one positive and one negative");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Average ranks over tie groups, then the Mann-Whitney identity.
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    double avg_rank = 0.5 * double(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
    }
    i = j;
  }
  return (pos_rank_sum - 0.5 * double(n_pos) * double(n_pos + 1)) /
         (double(n_pos) * double(n_neg));
}

EvalReport evaluate(const std::vector<double>& probs,
                    const std::vector<int>& labels, double threshold) {
  EvalReport r = classification_metrics(probs, labels, threshold);
  std::size_t n_pos = r.tp + r.fn;
  if (n_pos > 0 && n_pos < labels.size()) {
    r.auc = auc(probs, labels);
    r.has_auc = true;
  }
  return r;
}

}  // namespace txgnn
