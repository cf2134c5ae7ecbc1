#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "spikedisc/core/ops.hpp"
#include "spikedisc/core/tensor.hpp"

namespace spikedisc {

// Target firing rates as fractions of T: the true class should emit
// T*correct spikes, every other class T*incorrect.
struct RateTargets {
  double correct = 0.9;
  double incorrect = 0.1;

  void validate() const {
    if (!(incorrect >= 0.0 && correct <= 1.0 && correct > incorrect))
      throw ContractError("rate targets need 0 <= incorrect < correct <= 1");
  }
};

inline Tensor spike_targets(const std::vector<int>& labels, int classes, int T, const RateTargets& rates) {
  rates.validate();
  if (T <= 0) throw ContractError("spike_targets needs T >= 1");
  if (classes <= 0) throw ContractError("spike_targets needs at least one class");
  int B = static_cast<int>(labels.size());
  Tensor out(Shape{B, classes});
  double* p = out.data();
  for (int i = 0; i < B; ++i) {
    int y = labels[i];
    if (y < 0 || y >= classes)
      throw ContractError("label " + std::to_string(y) + " out of range for " + std::to_string(classes) + " classes");
    for (int j = 0; j < classes; ++j) p[static_cast<long>(i) * classes + j] = T * (j == y ? rates.correct : rates.incorrect);
  }
  return out;
}

// Mean squared error between spike counts and targets, averaged over classes
// then over the batch: (1/B) sum_i (1/N) sum_j (S_ij - T_ij)^2.
inline Tensor mse_count_loss(const Tensor& counts, const Tensor& targets, Tape* tape = nullptr) {
  if (counts.ndim() != 2 || counts.shape() != targets.shape())
    throw DimensionError("mse_count_loss: counts " + shape_str(counts.shape()) + " vs targets " +
                         shape_str(targets.shape()));
  int B = counts.dim(0), N = counts.dim(1);
  if (B == 0 || N == 0) throw ContractError("mse_count_loss needs a non-empty batch");
  const double* s = counts.data();
  const double* t = targets.data();
  double total = 0.0;
  for (int i = 0; i < B; ++i) {
    double row = 0.0;
    for (int j = 0; j < N; ++j) {
      double d = s[static_cast<long>(i) * N + j] - t[static_cast<long>(i) * N + j];
      row += d * d;
    }
    total += row / N;
  }
  Tensor out = Tensor::scalar(total / B);
  if (tape && counts.requires_grad()) {
    out.set_requires_grad(true);
    tape->record({counts.id()}, out.id(), [counts, targets, out, B, N]() mutable {
      double g = out.grad()[0];
      double* gc = counts.grad_data();
      const double* s2 = counts.data();
      const double* t2 = targets.data();
      double c = 2.0 * g / (static_cast<double>(B) * N);
      for (std::size_t i = 0; i < counts.numel(); ++i) gc[i] += c * (s2[i] - t2[i]);
    });
  }
  return out;
}

struct EvalStats {
  double accuracy = 0.0;
  int classes = 0;
  std::vector<int> predictions;
  std::vector<double> confusion;  // [classes x classes], rows = true class, row-normalized
};

// Argmax decision per row (ties go to the lowest class index), accuracy, and
// a row-normalized confusion matrix. An unseen true class leaves a zero row.
inline EvalStats accuracy_and_confusion(const Tensor& scores, const std::vector<int>& labels) {
  if (scores.ndim() != 2 || scores.dim(0) != static_cast<int>(labels.size()))
    throw DimensionError("accuracy_and_confusion: scores " + shape_str(scores.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  int B = scores.dim(0), C = scores.dim(1);
  EvalStats st;
  st.classes = C;
  st.predictions.resize(B);
  std::vector<long> count(static_cast<std::size_t>(C) * C, 0);
  std::vector<long> row_total(C, 0);
  int correct = 0;
  for (int i = 0; i < B; ++i) {
    const double* row = scores.data() + static_cast<long>(i) * C;
    int best = 0;
    for (int j = 1; j < C; ++j)
      if (row[j] > row[best]) best = j;
    st.predictions[i] = best;
    int y = labels[i];
    if (y < 0 || y >= C) throw ContractError("label " + std::to_string(y) + " out of range");
    count[static_cast<std::size_t>(y) * C + best]++;
    row_total[y]++;
    if (best == y) ++correct;
  }
  st.accuracy = B > 0 ? static_cast<double>(correct) / B : 0.0;
  st.confusion.assign(static_cast<std::size_t>(C) * C, 0.0);
  for (int y = 0; y < C; ++y)
    if (row_total[y] > 0)
      for (int j = 0; j < C; ++j)
        st.confusion[static_cast<std::size_t>(y) * C + j] =
            static_cast<double>(count[static_cast<std::size_t>(y) * C + j]) / row_total[y];
  return st;
}

// One row per true class: label, then C comma-separated rates.
inline std::string confusion_csv(const EvalStats& st) {
  std::ostringstream os;
  os.precision(17);
  for (int y = 0; y < st.classes; ++y) {
    os << "class_" << y;
    for (int j = 0; j < st.classes; ++j) os << "," << st.confusion[static_cast<std::size_t>(y) * st.classes + j];
    os << "\n";
  }
  return os.str();
}

}  // namespace spikedisc
