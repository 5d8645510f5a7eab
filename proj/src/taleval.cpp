// Copyright 2026 The tzal Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tzal/taleval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "tzal/error.hpp"

namespace tzal {

double tiou(const TimeSegment& a, const TimeSegment& b) {
  if (!(a.start < a.end) || !(b.start < b.end)) {
    throw DataError("tiou of a malformed segment");
  }
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  if (inter <= 0.0) return 0.0;
  const double uni = (a.end - a.start) + (b.end - b.start) - inter;
  return std::min(1.0, inter / uni);
}

std::optional<double> average_precision(std::span<const ScoredSegment> preds,
                                        std::span<const GtInstance> gts, double iou_threshold) {
  if (gts.empty()) {
    if (preds.empty()) return std::nullopt;
    return 0.0;
  }
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (preds[a].score != preds[b].score) return preds[a].score > preds[b].score;
    return preds[a].segment.start < preds[b].segment.start;
  });

  std::vector<bool> matched(gts.size(), false);
  std::vector<double> precision, recall;
  precision.reserve(preds.size());
  recall.reserve(preds.size());
  double tp = 0.0, fp = 0.0;
  const double npos = static_cast<double>(gts.size());
  for (std::size_t idx : order) {
    const ScoredSegment& p = preds[idx];
    double best_iou = -1.0;
    std::size_t best = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (matched[g] || gts[g].video != p.video) continue;
      const double o = tiou(p.segment, gts[g].segment);
      if (o >= iou_threshold && o > best_iou) {
        best_iou = o;
        best = g;
      }
    }
    if (best < gts.size()) {
      matched[best] = true;
      tp += 1.0;
    } else {
      fp += 1.0;
    }
    precision.push_back(tp / (tp + fp));
    recall.push_back(tp / npos);
  }

  // Precision envelope, then area under the step curve.
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

IoUGrid IoUGrid::thumos() { return {{0.3, 0.4, 0.5, 0.6, 0.7}}; }

IoUGrid IoUGrid::activitynet() {
  IoUGrid g;
  for (int i = 0; i < 10; ++i) g.thresholds.push_back((50 + 5 * i) / 100.0);
  return g;
}

IoUGrid IoUGrid::parse(const std::string& spec) {
  if (spec == "thumos") return thumos();
  if (spec == "anet" || spec == "activitynet") return activitynet();
  IoUGrid g;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw UsageError("cannot parse tIoU threshold \"" + item + "\"");
    }
    if (item.find_first_not_of(" \t", used) != std::string::npos) {
      throw UsageError("cannot parse tIoU threshold \"" + item + "\"");
    }
    g.thresholds.push_back(v);
  }
  g.validate();
  return g;
}

void IoUGrid::validate() const {
  if (thresholds.empty()) throw UsageError("empty tIoU grid");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0 && thresholds[i] < 1.0)) {
      throw UsageError("tIoU thresholds must lie in (0, 1)");
    }
    if (i > 0 && !(thresholds[i] > thresholds[i - 1])) {
      throw UsageError("tIoU thresholds must be strictly increasing");
    }
  }
}

EvalReport evaluate(const PredictionSet& preds, const AnnotationSet& gts, const IoUGrid& grid) {
  grid.validate();
  std::map<std::string, std::vector<GtInstance>> gt_by_label;
  for (const auto& [video, ann] : gts) {
    for (const auto& s : ann.segments) gt_by_label[s.label].push_back({video, {s.start_s, s.end_s}});
  }

  EvalReport report;
  report.thresholds = grid.thresholds;
  std::map<std::string, std::vector<ScoredSegment>> pred_by_label;
  std::set<std::string> unknown_labels, unknown_videos;
  for (const auto& v : preds.videos) {
    if (!gts.contains(v.id)) unknown_videos.insert(v.id);
    for (const auto& p : v.proposals) {
      if (!gt_by_label.contains(p.label)) {
        unknown_labels.insert(p.label);
        continue;
      }
      pred_by_label[p.label].push_back({v.id, {p.start_s, p.end_s}, p.score});
    }
  }
  for (const auto& l : unknown_labels) {
    report.warnings.push_back("prediction label \"" + l + "\" has no ground truth; left unmatched");
  }
  for (const auto& v : unknown_videos) {
    report.warnings.push_back("predictions for unannotated video \"" + v + "\" count as false positives");
  }

  report.map.assign(grid.thresholds.size(), 0.0);
  for (const auto& [label, instances] : gt_by_label) {
    const auto& label_preds = pred_by_label[label];
    auto& row = report.per_class[label];
    for (std::size_t t = 0; t < grid.thresholds.size(); ++t) {
      const double ap = average_precision(label_preds, instances, grid.thresholds[t]).value_or(0.0);
      row.push_back(ap);
      report.map[t] += ap;
    }
  }
  if (!gt_by_label.empty()) {
    for (double& m : report.map) m /= static_cast<double>(gt_by_label.size());
  }
  report.average = std::accumulate(report.map.begin(), report.map.end(), 0.0) /
                   static_cast<double>(report.map.size());
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [label, aps] : per_class) per[label] = aps;
  return {{"grid", thresholds}, {"mAP", map}, {"average", average}, {"per_class", per}};
}

std::string EvalReport::to_table() const {
  auto cell = [](const char* fmt, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), fmt, v);
    return std::string(buf);
  };
  std::string head = "tIoU ", row = "mAP  ";
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    head += cell("%7g", thresholds[i]);
    row += cell("%7.1f", 100.0 * map[i]);
  }
  head += "   Avg.";
  row += cell("%7.1f", 100.0 * average);
  return head + "\n" + row + "\n";
}

}  // namespace tzal
