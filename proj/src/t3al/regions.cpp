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

#include <algorithm>
#include <numeric>
#include <string>

#include "internal.hpp"
#include "tzal/error.hpp"
#include "tzal/t3al.hpp"

namespace tzal {

VectorXd smooth_scores(const VectorXd& scores, int window) {
  if (window < 1 || window % 2 == 0) {
    throw UsageError("smoothing window must be a positive odd number, got " + std::to_string(window));
  }
  const Eigen::Index n = scores.size();
  const Eigen::Index half = window / 2;
  VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - half);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, i + half);
    const auto slice = scores.segment(lo, hi - lo + 1);
    // Clamped so constant slices come back exactly; summation round-off
    // would otherwise break the strict threshold below.
    out(i) = std::clamp(slice.mean(), slice.minCoeff(), slice.maxCoeff());
  }
  return out;
}

std::vector<Proposal> extract_regions(const VectorXd& smoothed, const FeatureTrack& track,
                                      const LabelBank& bank, const AdapterState& state) {
  const Eigen::Index n = smoothed.size();
  if (n < 1) throw DataError(track.video_id + ": no scores to threshold");
  if (n != track.num_frames()) throw DataError(track.video_id + ": score count differs from frame count");
  const double gamma = std::clamp(smoothed.mean(), smoothed.minCoeff(), smoothed.maxCoeff());
  const MatrixXd z = detail::project_frames(state, detail::frames_f64(track));
  const MatrixXd texts = detail::project_texts(state, bank);

  std::vector<Proposal> out;
  for (Eigen::Index i = 0; i < n;) {
    if (!(smoothed(i) > gamma)) {
      ++i;
      continue;
    }
    Eigen::Index j = i;
    while (j + 1 < n && smoothed(j + 1) > gamma) ++j;
    const VectorXd region = detail::row_mean(z, static_cast<int>(i), static_cast<int>(j));
    if (region.norm() < detail::kMinNorm) {
      throw NumericError(track.video_id + ": region [" + std::to_string(i) + ", " +
                         std::to_string(j) + "] has a zero-norm mean embedding");
    }
    const auto best = detail::best_label(region, texts);
    Proposal p;
    p.label_index = best.index;
    p.score = best.cosine;
    p.first_frame = static_cast<int>(i);
    p.last_frame = static_cast<int>(j);
    p.start_s = static_cast<double>(i) / track.fps;
    p.end_s = static_cast<double>(j + 1) / track.fps;
    out.push_back(p);
    i = j + 1;
  }
  return out;
}

SuppressResult suppress(const std::vector<Proposal>& proposals, const FeatureTrack& track,
                        const LabelBank& /*bank*/, const AdapterState& state, double alpha,
                        double beta) {
  SuppressResult out;
  if (!track.has_captions()) {
    out.kept = proposals;
    out.skipped = true;
    return out;
  }
  const std::size_t m = proposals.size();
  if (m == 0) return out;

  const MatrixXd captions = track.captions->cast<double>();
  std::vector<VectorXd> d(m);
  for (std::size_t i = 0; i < m; ++i) {
    const VectorXd mean = detail::row_mean(captions, proposals[i].first_frame, proposals[i].last_frame);
    d[i] = project_text(state, mean);
    if (d[i].norm() < detail::kMinNorm) {
      throw NumericError(track.video_id + ": proposal " + std::to_string(i) +
                         " has a zero-norm caption mean");
    }
  }
  // Column sums of the binarized pairwise cosine matrix.
  std::vector<int> support(m, 0);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      if (i == j || cosine(d[i], d[j]) >= beta) ++support[j];
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double frac = static_cast<double>(support[i]) / static_cast<double>(m);
    out.support.push_back(frac);
    if (!(frac < alpha)) out.kept.push_back(proposals[i]);
  }
  return out;
}

std::vector<Proposal> oracle_count(const std::vector<Proposal>& proposals,
                                   const FeatureTrack& track, const LabelBank& bank,
                                   const AdapterState& state, const PseudoLabel& pseudo,
                                   std::size_t m) {
  if (m >= proposals.size()) return proposals;
  const MatrixXd z = detail::project_frames(state, detail::frames_f64(track));
  const VectorXd q = project_text(state, bank.texts.row(pseudo.label_index).transpose());
  std::vector<double> sim(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    sim[i] = cosine(detail::row_mean(z, proposals[i].first_frame, proposals[i].last_frame), q);
  }
  std::vector<std::size_t> order(proposals.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
  order.resize(m);
  std::sort(order.begin(), order.end());
  std::vector<Proposal> out;
  for (std::size_t i : order) out.push_back(proposals[i]);
  return out;
}

}  // namespace tzal
