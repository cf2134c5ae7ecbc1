#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikedisc/core/ops.hpp"
#include "spikedisc/core/parallel.hpp"
#include "spikedisc/io/tensor_file.hpp"
#include "spikedisc/layers/heads.hpp"
#include "spikedisc/neurons/lif.hpp"

namespace spikedisc::analysis {

// A labeled set of row vectors, typically embeddings captured after the
// trunk. Meta records where they came from (modality, head kind, split).
struct FeatureBank {
  Tensor features;  // [n, d]
  std::vector<int> labels;
  nlohmann::json meta = nlohmann::json::object();

  int size() const { return features.shape()[0]; }
  int dim() const { return features.shape()[1]; }
  int classes() const {
    int c = 0;
    for (int l : labels) c = std::max(c, l + 1);
    return c;
  }
  void validate() const {
    if (features.shape().size() != 2) throw DimensionError("feature bank must be 2-D, got " + shape_str(features.shape()));
    if (static_cast<int>(labels.size()) != size())
      throw DimensionError("feature bank has " + std::to_string(size()) + " rows but " +
                           std::to_string(labels.size()) + " labels");
    for (int l : labels)
      if (l < 0) throw ContractError("feature bank labels must be non-negative");
  }
};

// Row indices whose feature vector has zero L2 norm. Such rows are legal to
// store but must be flagged, because every direction-based statistic refuses
// them downstream.
inline std::vector<int> zero_norm_rows(const Tensor& feats) {
  std::vector<int> out;
  const int n = feats.shape()[0], d = feats.shape()[1];
  for (int i = 0; i < n; ++i) {
    const double* row = feats.data() + static_cast<std::size_t>(i) * d;
    double s = 0;
    for (int j = 0; j < d; ++j) s += row[j] * row[j];
    if (s == 0.0) out.push_back(i);
  }
  return out;
}

inline void save_bank(const std::string& path, const FeatureBank& bank) {
  bank.validate();
  io::TensorFile tf;
  tf.meta = bank.meta;
  tf.meta["zero_norm_rows"] = zero_norm_rows(bank.features);
  tf.put("features", bank.features.clone());
  std::vector<double> lab(bank.labels.begin(), bank.labels.end());
  tf.put("labels", Tensor::from({bank.size()}, std::move(lab)));
  io::write_container(path, io::kTensorMagic, tf);
}

inline FeatureBank load_bank(const std::string& path) {
  io::TensorFile tf = io::read_container(path, io::kTensorMagic);
  FeatureBank bank;
  bank.meta = tf.meta;
  bank.features = tf.get("features").clone();
  const Tensor& lab = tf.get("labels");
  bank.labels.reserve(lab.numel());
  for (std::size_t i = 0; i < lab.numel(); ++i) {
    double v = lab.data()[i];
    if (v != std::floor(v) || v < 0) throw ConfigError(path + ": labels must be non-negative integers");
    bank.labels.push_back(static_cast<int>(v));
  }
  bank.validate();
  return bank;
}

// Stable permutation grouping samples by class; within a class the original
// order is kept so repeated runs produce identical heatmaps.
inline std::vector<int> class_sorted_order(const std::vector<int>& labels) {
  std::vector<int> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return labels[a] < labels[b]; });
  return order;
}

// Pairwise cosine distance, 1 - cos(x_i, x_j), over rows taken in the given
// order. A zero-norm row has no direction, so its presence is an error that
// names the offending sample ids rather than a silently patched entry.
//
// Rows are filled in parallel; every worker computes its rows in full, and
// since dot(i,j) sums the same elementwise products in the same index order
// as dot(j,i), the matrix is bitwise symmetric no matter the thread count.
inline Tensor cosine_distance_matrix(const Tensor& feats, const std::vector<int>& order) {
  if (feats.shape().size() != 2) throw DimensionError("expected [n, d] features, got " + shape_str(feats.shape()));
  const int n = static_cast<int>(order.size());
  const int d = feats.shape()[1];
  const double* x = feats.data();
  std::vector<double> norms(n);
  std::string bad;
  for (int i = 0; i < n; ++i) {
    const double* row = x + static_cast<std::size_t>(order[i]) * d;
    double s = 0;
    for (int j = 0; j < d; ++j) s += row[j] * row[j];
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0) bad += (bad.empty() ? "" : ", ") + std::to_string(order[i]);
  }
  if (!bad.empty())
    throw DegenerateEmbedding("cosine distance undefined: zero-norm feature vector for sample(s) " + bad);
  Tensor dist = Tensor::zeros({n, n});
  double* dm = dist.data();
  parallel_for(n, 8, [&](long lo, long hi) {
    for (int i = static_cast<int>(lo); i < hi; ++i) {
      const double* ri = x + static_cast<std::size_t>(order[i]) * d;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double* rj = x + static_cast<std::size_t>(order[j]) * d;
        double dot = 0;
        for (int k = 0; k < d; ++k) dot += ri[k] * rj[k];
        double dv = 1.0 - dot / (norms[i] * norms[j]);
        dm[static_cast<std::size_t>(i) * n + j] = std::min(2.0, std::max(0.0, dv));
      }
    }
  });
  return dist;
}

struct PairStats {
  long intra_pairs = 0;
  long inter_pairs = 0;
  double mean_intra = 0.0;
  double mean_inter = 0.0;
  double separability = 0.0;          // mean_inter / mean_intra; +inf when intra is 0
  std::vector<int> singleton_classes; // contributed no intra pairs; flagged, not fatal
};

// Averages the distance matrix over same-class and cross-class unordered
// pairs. labels must be aligned with the matrix rows (i.e. already permuted
// when the matrix was built from a sorted order). Needs at least two classes;
// a class with a single sample is excluded from the intra mean (it has no
// same-class pair to offer) and reported in singleton_classes.
inline PairStats intra_inter_stats(const Tensor& dist, const std::vector<int>& labels) {
  const int n = static_cast<int>(labels.size());
  if (dist.shape() != Shape{n, n})
    throw DimensionError("distance matrix is " + shape_str(dist.shape()) + " for " + std::to_string(n) + " labels");
  std::map<int, int> counts;
  for (int l : labels) counts[l]++;
  if (counts.size() < 2)
    throw ContractError("intra/inter statistics need at least two classes, got " + std::to_string(counts.size()));
  PairStats st;
  for (const auto& [cls, cnt] : counts)
    if (cnt == 1) st.singleton_classes.push_back(cls);
  double sum_intra = 0, sum_inter = 0;
  const double* dm = dist.data();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double v = dm[static_cast<std::size_t>(i) * n + j];
      if (labels[i] == labels[j]) {
        sum_intra += v;
        ++st.intra_pairs;
      } else {
        sum_inter += v;
        ++st.inter_pairs;
      }
    }
  st.mean_intra = st.intra_pairs ? sum_intra / static_cast<double>(st.intra_pairs) : 0.0;
  st.mean_inter = st.inter_pairs ? sum_inter / static_cast<double>(st.inter_pairs) : 0.0;
  st.separability =
      st.mean_intra > 0 ? st.mean_inter / st.mean_intra : std::numeric_limits<double>::infinity();
  return st;
}

inline nlohmann::json pair_stats_json(const PairStats& st) {
  nlohmann::json j;
  j["intra_pairs"] = st.intra_pairs;
  j["inter_pairs"] = st.inter_pairs;
  j["mean_intra"] = st.mean_intra;
  j["mean_inter"] = st.mean_inter;
  if (std::isinf(st.separability))
    j["separability"] = "inf";
  else
    j["separability"] = st.separability;
  if (!st.singleton_classes.empty()) j["singleton_classes"] = st.singleton_classes;
  return j;
}

// Writes the matrix as plain CSV (full double precision) and a sidecar
// `<path>.json` describing where each class block starts in the sorted order.
inline void write_heatmap_csv(const std::string& path, const Tensor& dist, const std::vector<int>& sorted_labels) {
  const int n = dist.shape()[0];
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path);
  char buf[40];
  const double* dm = dist.data();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", dm[static_cast<std::size_t>(i) * n + j]);
      f << (j ? "," : "") << buf;
    }
    f << "\n";
  }
  if (!f) throw ConfigError("short write to " + path);

  // The sidecar gives the class of each block and the cumulative sample
  // count at its end, which is exactly where to draw the boundary lines.
  nlohmann::json side;
  side["samples"] = n;
  std::vector<int> order_classes;
  std::vector<int> cumulative;
  for (int i = 0; i < n; ++i) {
    if (i == 0 || sorted_labels[i] != sorted_labels[i - 1]) {
      order_classes.push_back(sorted_labels[i]);
      cumulative.push_back(0);
    }
    cumulative.back() = i + 1;
  }
  side["class_order"] = order_classes;
  side["cumulative_sizes"] = cumulative;
  std::ofstream sf(path + ".json");
  if (!sf) throw ConfigError("cannot write " + path + ".json");
  sf << side.dump(2) << "\n";
}

struct ReadoutAgreement {
  int n = 0;
  int ties = 0;        // top-2 logit gap within tolerance, excluded from the check
  int agree = 0;       // logit argmax is among the count argmaxes
  int mismatch = 0;
  double min_margin = std::numeric_limits<double>::infinity();  // smallest checked top-2 gap
  bool consistent() const { return mismatch == 0; }
};

// Confirms that reading the class off spike counts matches reading it off the
// logits that drove the output neurons: count is monotone in drive current,
// so the best logit can never end up with strictly fewer spikes. Samples
// whose top two logits are closer than tie_tol are reported as ties and not
// judged either way.
inline ReadoutAgreement readout_agreement(const Tensor& logits, int steps, const HeadSpikeConfig& cfg,
                                          double tie_tol = 1e-12) {
  if (logits.shape().size() != 2) throw DimensionError("expected [batch, classes] logits");
  Tensor counts = head_to_spikes(logits, steps, cfg, nullptr, false);
  const int b = logits.shape()[0], c = logits.shape()[1];
  const double* lg = logits.data();
  const double* ct = counts.data();
  ReadoutAgreement rep;
  rep.n = b;
  for (int i = 0; i < b; ++i) {
    const double* lrow = lg + static_cast<std::size_t>(i) * c;
    const double* crow = ct + static_cast<std::size_t>(i) * c;
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (lrow[j] > lrow[best]) best = j;
    double runner = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j)
      if (j != best) runner = std::max(runner, lrow[j]);
    double margin = lrow[best] - runner;
    if (c > 1 && margin <= tie_tol) {
      ++rep.ties;
      continue;
    }
    double cmax = *std::max_element(crow, crow + c);
    if (crow[best] == cmax)
      ++rep.agree;
    else
      ++rep.mismatch;
    rep.min_margin = std::min(rep.min_margin, margin);
  }
  return rep;
}

struct Lemma1Report {
  int considered = 0;   // correctly classified samples fed to the check
  int checked = 0;      // considered minus ties
  int ties = 0;         // best-vs-runner-up gap within tolerance, not judged
  int violations = 0;   // some wrong class projected at least as strongly
  double violation_rate = 0.0;
  std::vector<double> margins;          // score gap true - best other, per checked sample
  std::vector<double> angular_margins;  // acos gap, only for samples whose scores are cosines
};

// First-step dominance: when the network classifies a sample correctly, the
// very first feature vector should already project more strongly onto the
// true class direction than onto any other. Samples the network got wrong
// are skipped (the claim is conditional on correctness); gaps inside tie_tol
// are counted as ties rather than judged either way.
inline Lemma1Report lemma1_check(const Tensor& first_step_features, const Tensor& weights,
                                 const std::vector<int>& labels, const std::vector<int>& predictions,
                                 double tie_tol = 1e-12) {
  if (first_step_features.ndim() != 2 || weights.ndim() != 2)
    throw DimensionError("lemma1_check wants [n, d] features and [d, c] weights");
  if (first_step_features.dim(1) != weights.dim(0))
    throw DimensionError("feature dim " + std::to_string(first_step_features.dim(1)) + " vs weight rows " +
                         std::to_string(weights.dim(0)));
  const int n = first_step_features.dim(0);
  if (static_cast<int>(labels.size()) != n || static_cast<int>(predictions.size()) != n)
    throw DimensionError("labels/predictions must match the feature rows");
  const int c = weights.dim(1);
  Tensor scores = ops::matmul(first_step_features, weights);
  const double* s = scores.data();
  Lemma1Report rep;
  for (int i = 0; i < n; ++i) {
    if (labels[i] != predictions[i]) continue;
    int y = labels[i];
    if (y < 0 || y >= c) throw ContractError("label " + std::to_string(y) + " out of range");
    ++rep.considered;
    const double* row = s + static_cast<std::size_t>(i) * c;
    double best_other = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j)
      if (j != y) best_other = std::max(best_other, row[j]);
    double margin = row[y] - best_other;
    if (std::fabs(margin) <= tie_tol) {
      ++rep.ties;
      continue;
    }
    ++rep.checked;
    rep.margins.push_back(margin);
    if (margin < 0) ++rep.violations;
    if (std::fabs(row[y]) <= 1.0 && std::fabs(best_other) <= 1.0)
      rep.angular_margins.push_back(std::acos(best_other) - std::acos(row[y]));
  }
  rep.violation_rate = rep.checked ? static_cast<double>(rep.violations) / rep.checked : 0.0;
  return rep;
}

inline nlohmann::json lemma1_json(const Lemma1Report& rep) {
  nlohmann::json j;
  j["considered"] = rep.considered;
  j["checked"] = rep.checked;
  j["ties"] = rep.ties;
  j["violations"] = rep.violations;
  j["violation_rate"] = rep.violation_rate;
  auto dist = [](const std::vector<double>& v) {
    nlohmann::json d;
    d["count"] = v.size();
    if (!v.empty()) {
      d["min"] = *std::min_element(v.begin(), v.end());
      d["max"] = *std::max_element(v.begin(), v.end());
      d["mean"] = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    }
    return d;
  };
  j["margin"] = dist(rep.margins);
  if (!rep.angular_margins.empty()) j["angular_margin"] = dist(rep.angular_margins);
  return j;
}

// Checks the closed form of the leaky integration: with no reset, the
// membrane at step t equals sum_{k=0}^{t-1} beta^(t-1-k) * i[k]. Returns the
// largest absolute gap between the recurrence and the series.
inline double integration_series_gap(const Tensor& inputs, double beta) {
  if (inputs.shape().size() < 2) throw DimensionError("expected [steps, ...] inputs");
  LIFConfig cfg;
  cfg.beta = beta;
  cfg.v_th = 1.0;
  cfg.reset = ResetMode::none;
  Tensor potentials;
  lif_sequence(inputs, cfg, nullptr, false, &potentials);
  const int steps = inputs.shape()[0];
  const std::size_t per = inputs.numel() / static_cast<std::size_t>(steps);
  const double* in = inputs.data();
  const double* vp = potentials.data();
  double worst = 0.0;
  for (int t = 0; t < steps; ++t)
    for (std::size_t e = 0; e < per; ++e) {
      double series = 0.0;
      for (int k = 0; k <= t; ++k) series += std::pow(beta, t - k) * in[static_cast<std::size_t>(k) * per + e];
      worst = std::max(worst, std::abs(series - vp[static_cast<std::size_t>(t) * per + e]));
    }
  return worst;
}

// Probe for the series identity on realistic drive: per-step features pushed
// through class weights become the input currents of the output neurons.
struct LemmaProbe {
  std::vector<Tensor> features;  // per step, [n, d]
  Tensor weights;                // [d, c]
  double beta = 0.9;
};

inline double lemma2_series_check(const LemmaProbe& probe) {
  if (probe.features.empty()) throw ContractError("series probe needs at least one step");
  std::vector<Tensor> currents;
  currents.reserve(probe.features.size());
  for (const Tensor& f : probe.features) currents.push_back(ops::matmul(f, probe.weights));
  return integration_series_gap(ops::stack_axis0(currents), probe.beta);
}

}  // namespace spikedisc::analysis
