// Copyright 2026 The bifas Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bifas {

struct MetricsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A scored sample: higher score means more live-like. Classification at
// threshold t calls a sample live iff score >= t.
struct ScoredSample {
  double score = 0.0;
  bool attack = false;
  std::string attack_type;  // optional PAI species tag
};

struct ThresholdPoint {
  double threshold = 0.0;
  double apcer = 0.0;  // attacks classified live
  double bpcer = 0.0;  // bona fide classified attack
  double acer = 0.0;   // (apcer + bpcer) / 2
};

struct ThresholdPolicy {
  enum class Kind { dev_eer, test_eer, fixed } kind = Kind::test_eer;
  double fixed_threshold = 0.0;

  static ThresholdPolicy dev_eer() { return {Kind::dev_eer, 0.0}; }
  static ThresholdPolicy test_eer() { return {Kind::test_eer, 0.0}; }
  static ThresholdPolicy fixed(double t) { return {Kind::fixed, t}; }
};

// Threshold sweep plus headline biometric error rates. threshold_flagged
// marks reports whose operating threshold was chosen on the test set itself
// (no dev split given).
struct EvalReport {
  std::vector<ThresholdPoint> sweep;
  double threshold = 0.0;
  std::string threshold_policy;
  bool threshold_flagged = false;
  double apcer = 0.0, bpcer = 0.0, acer = 0.0;
  double eer = 0.0, eer_threshold = 0.0;
  bool eer_defined = false;
  double auc = 0.0;
  bool auc_defined = false;
  std::optional<double> hter;
  std::map<std::string, double> apcer_per_type;
  std::optional<double> apcer_max_over_types;  // ISO worst-PAI variant
  std::size_t n_live = 0, n_attack = 0;
};

namespace detail {

inline void rates_at(const std::vector<ScoredSample>& samples, double threshold,
                     double& apcer, double& bpcer) {
  std::size_t fa = 0, fr = 0, n_attack = 0, n_live = 0;
  for (const auto& s : samples) {
    if (s.attack) {
      ++n_attack;
      if (s.score >= threshold) ++fa;
    } else {
      ++n_live;
      if (s.score < threshold) ++fr;
    }
  }
  apcer = n_attack ? static_cast<double>(fa) / static_cast<double>(n_attack) : 0.0;
  bpcer = n_live ? static_cast<double>(fr) / static_cast<double>(n_live) : 0.0;
}

inline std::vector<double> sweep_thresholds(const std::vector<ScoredSample>& samples) {
  std::vector<double> t;
  t.reserve(samples.size() + 1);
  for (const auto& s : samples) t.push_back(s.score);
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  t.push_back(t.back() + 1.0);  // everything classified attack
  return t;
}

}  // namespace detail

// Sweeps every distinct score (plus a sentinel above the max) and records
// APCER/BPCER/ACER at each threshold.
inline std::vector<ThresholdPoint> threshold_sweep(const std::vector<ScoredSample>& samples) {
  if (samples.empty()) throw MetricsError("threshold_sweep: no samples");
  std::vector<ThresholdPoint> out;
  for (double t : detail::sweep_thresholds(samples)) {
    ThresholdPoint p;
    p.threshold = t;
    detail::rates_at(samples, t, p.apcer, p.bpcer);
    p.acer = 0.5 * (p.apcer + p.bpcer);
    out.push_back(p);
  }
  return out;
}

// EER over the sweep: the threshold minimizing |APCER - BPCER|, rate taken
// as the mean of the two at that point. Requires both classes.
inline double compute_eer(const std::vector<ScoredSample>& samples,
                          double* threshold_out = nullptr) {
  std::size_t n_attack = 0, n_live = 0;
  for (const auto& s : samples) (s.attack ? n_attack : n_live)++;
  if (n_attack == 0 || n_live == 0)
    throw MetricsError("compute_eer: needs both live and attack samples");
  double best_gap = std::numeric_limits<double>::infinity();
  double eer = 1.0, thr = 0.0;
  for (const auto& p : threshold_sweep(samples)) {
    const double gap = std::abs(p.apcer - p.bpcer);
    if (gap < best_gap) {
      best_gap = gap;
      eer = 0.5 * (p.apcer + p.bpcer);
      thr = p.threshold;
    }
  }
  if (threshold_out) *threshold_out = thr;
  return eer;
}

// AUC by the rank statistic (Mann-Whitney U), ties counted half.
inline double compute_auc(const std::vector<ScoredSample>& samples) {
  std::size_t n_attack = 0, n_live = 0;
  for (const auto& s : samples) (s.attack ? n_attack : n_live)++;
  if (n_attack == 0 || n_live == 0)
    throw MetricsError("compute_auc: needs both live and attack samples");

  std::vector<std::size_t> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return samples[a].score < samples[b].score;
  });
  // average ranks over tied groups
  std::vector<double> rank(samples.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && samples[idx[j + 1]].score == samples[idx[i]].score) ++j;
    const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = avg;
    i = j + 1;
  }
  double live_rank_sum = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k)
    if (!samples[k].attack) live_rank_sum += rank[k];
  const double nl = static_cast<double>(n_live), na = static_cast<double>(n_attack);
  return (live_rank_sum - nl * (nl + 1.0) / 2.0) / (nl * na);
}

// Full report. dev_samples feed the dev_eer policy (threshold fixed there,
// HTER reported on the evaluated set at that threshold).
inline EvalReport evaluate_scores(const std::vector<ScoredSample>& samples,
                                  const ThresholdPolicy& policy,
                                  const std::vector<ScoredSample>* dev_samples = nullptr) {
  if (samples.empty()) throw MetricsError("evaluate_scores: no samples");
  EvalReport r;
  for (const auto& s : samples) (s.attack ? r.n_attack : r.n_live)++;
  r.sweep = threshold_sweep(samples);

  if (r.n_attack > 0 && r.n_live > 0) {
    r.eer = compute_eer(samples, &r.eer_threshold);
    r.eer_defined = true;
    r.auc = compute_auc(samples);
    r.auc_defined = true;
  }

  switch (policy.kind) {
    case ThresholdPolicy::Kind::fixed:
      r.threshold = policy.fixed_threshold;
      r.threshold_policy = "fixed";
      break;
    case ThresholdPolicy::Kind::dev_eer: {
      if (!dev_samples || dev_samples->empty())
        throw MetricsError("evaluate_scores: dev_eer policy needs a dev split");
      double thr = 0.0;
      compute_eer(*dev_samples, &thr);
      r.threshold = thr;
      r.threshold_policy = "dev_eer";
      break;
    }
    case ThresholdPolicy::Kind::test_eer:
      if (!r.eer_defined)
        throw MetricsError("evaluate_scores: test_eer policy needs both classes");
      r.threshold = r.eer_threshold;
      r.threshold_policy = "test_eer";
      r.threshold_flagged = true;  // threshold chosen on the evaluated set
      break;
  }

  detail::rates_at(samples, r.threshold, r.apcer, r.bpcer);
  r.acer = 0.5 * (r.apcer + r.bpcer);
  if (policy.kind != ThresholdPolicy::Kind::test_eer)
    r.hter = r.acer;  // same quantity at an externally fixed threshold

  // per-PAI-species APCER when tags exist
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_type;
  for (const auto& s : samples) {
    if (!s.attack || s.attack_type.empty()) continue;
    auto& [total, live_called] = per_type[s.attack_type];
    ++total;
    if (s.score >= r.threshold) ++live_called;
  }
  for (const auto& [type, counts] : per_type) {
    const double v = static_cast<double>(counts.second) / static_cast<double>(counts.first);
    r.apcer_per_type[type] = v;
    if (!r.apcer_max_over_types || v > *r.apcer_max_over_types) r.apcer_max_over_types = v;
  }
  return r;
}

}  // namespace bifas
