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

#include "tzal/featio.hpp"
#include "tzal/numcore.hpp"

namespace tzal::detail {

inline constexpr double kMinNorm = 1e-12;

inline MatrixXd frames_f64(const FeatureTrack& track) { return track.frames.cast<double>(); }

// Rows of `frames` (N x D_v) mapped through w_v.
inline MatrixXd project_frames(const AdapterState& state, const MatrixXd& frames) {
  return frames * state.w_v;
}

// Rows of the bank's text matrix mapped through w_l (|C| x D).
inline MatrixXd project_texts(const AdapterState& state, const LabelBank& bank) {
  return bank.texts * state.w_l;
}

// argmax_c cos(v, texts.row(c)), lowest index on ties.
struct BestLabel {
  int index = 0;
  double cosine = -2.0;
};
BestLabel best_label(const VectorXd& v, const MatrixXd& projected_texts);

// Mean of rows [first, last] of `m`.
inline VectorXd row_mean(const MatrixXd& m, int first, int last) {
  return m.middleRows(first, last - first + 1).colwise().mean().transpose();
}

}  // namespace tzal::detail
