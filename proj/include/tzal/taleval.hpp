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

#pragma once

// Temporal action localization scoring: tIoU, per-category average precision
// with greedy score-ordered matching, and mAP over a tIoU threshold grid.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tzal/featio.hpp"

namespace tzal {

struct TimeSegment {
  double start = 0.0;
  double end = 0.0;
};

// Intersection over union of two segments; 0 when disjoint. Throws DataError
// unless start < end for both.
double tiou(const TimeSegment& a, const TimeSegment& b);

struct ScoredSegment {
  std::string video;
  TimeSegment segment;
  double score = 0.0;
};

struct GtInstance {
  std::string video;
  TimeSegment segment;
};

// All-point interpolated AP of one category's predictions at one threshold.
// Predictions are ranked by score (descending), then earlier start, then
// input order; each takes the unmatched ground truth of the same video with
// the highest tIoU >= iou_threshold. Returns nullopt when both inputs are
// empty and 0 when only the ground truth is.
std::optional<double> average_precision(std::span<const ScoredSegment> preds,
                                        std::span<const GtInstance> gts, double iou_threshold);

struct IoUGrid {
  std::vector<double> thresholds;

  static IoUGrid thumos();        // 0.3:0.1:0.7
  static IoUGrid activitynet();   // 0.5:0.05:0.95
  // "thumos", "anet", or a comma-separated list of thresholds in (0, 1).
  static IoUGrid parse(const std::string& spec);
  void validate() const;
};

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<double> map;  // per threshold, in [0, 1]
  double average = 0.0;
  std::map<std::string, std::vector<double>> per_class;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  // Percentages with one decimal, one column per threshold plus "Avg.".
  std::string to_table() const;
};

EvalReport evaluate(const PredictionSet& preds, const AnnotationSet& gts, const IoUGrid& grid);

}  // namespace tzal
