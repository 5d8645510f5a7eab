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
#include <limits>
#include <string>

#include "internal.hpp"
#include "tzal/error.hpp"
#include "tzal/t3al.hpp"

namespace tzal {
namespace detail {

BestLabel best_label(const VectorXd& v, const MatrixXd& projected_texts) {
  BestLabel best;
  for (Eigen::Index c = 0; c < projected_texts.rows(); ++c) {
    const double cs = cosine(v, projected_texts.row(c).transpose());
    if (cs > best.cosine) best = {static_cast<int>(c), cs};
  }
  return best;
}

}  // namespace detail

AdapterState initial_state(const LabelBank& bank, Eigen::Index frame_dim) {
  if (bank.has_projections()) {
    if (bank.proj_v->rows() != frame_dim) {
      throw DataError("proj_v has " + std::to_string(bank.proj_v->rows()) +
                      " rows but frames have dimension " + std::to_string(frame_dim));
    }
    return AdapterState::from_projections(*bank.proj_v, *bank.proj_l);
  }
  if (bank.text_dim() != frame_dim) {
    throw DataError("without projections, frame dim " + std::to_string(frame_dim) +
                    " must equal text dim " + std::to_string(bank.text_dim()));
  }
  return AdapterState::identity(frame_dim);
}

std::uint64_t video_seed_hash(const std::string& video_id) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : video_id) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

PseudoLabel pseudo_label(const FeatureTrack& track, const LabelBank& bank,
                         const AdapterState& state) {
  if (track.num_frames() < 1) throw DataError(track.video_id + ": no frames");
  if (bank.size() < 1) throw DataError("empty label bank");
  const MatrixXd z = detail::project_frames(state, detail::frames_f64(track));
  PseudoLabel out;
  out.mean_embedding = z.colwise().mean().transpose();
  if (out.mean_embedding.norm() < detail::kMinNorm) {
    throw NumericError(track.video_id + ": mean projected frame has zero norm");
  }
  const auto best = detail::best_label(out.mean_embedding, detail::project_texts(state, bank));
  out.label_index = best.index;
  out.similarity = best.cosine;
  return out;
}

BackgroundAdjusted subtract_background(const FeatureTrack& track, const PseudoLabel& pseudo,
                                       const LabelBank& bank, const AdapterState& state) {
  const VectorXd q = project_text(state, bank.texts.row(pseudo.label_index).transpose());
  BackgroundAdjusted out;
  out.vectors = detail::project_frames(state, detail::frames_f64(track));
  out.vectors.rowwise() -= q.transpose();
  out.degenerate.resize(static_cast<std::size_t>(out.vectors.rows()));
  // Cancellation is judged relative to the text's own scale.
  const double tol = 1e-9 * std::max(1.0, q.norm());
  for (Eigen::Index i = 0; i < out.vectors.rows(); ++i) {
    out.degenerate[static_cast<std::size_t>(i)] = out.vectors.row(i).norm() <= tol;
  }
  return out;
}

VectorXd frame_scores(const FeatureTrack& track, const VectorXd& text_vec,
                      const AdapterState& state, const ScoreOptions& options,
                      std::vector<bool>* degenerate) {
  const VectorXd q = project_text(state, text_vec);
  if (q.norm() < detail::kMinNorm) throw NumericError("zero-norm projected text");
  MatrixXd z = detail::project_frames(state, detail::frames_f64(track));
  const Eigen::Index n = z.rows();
  std::vector<bool> flagged(static_cast<std::size_t>(n), false);
  if (options.subtract_text) {
    z.rowwise() -= q.transpose();
    const double tol = 1e-9 * std::max(1.0, q.norm());
    for (Eigen::Index i = 0; i < n; ++i) flagged[static_cast<std::size_t>(i)] = z.row(i).norm() <= tol;
  }

  VectorXd s(n);
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (flagged[static_cast<std::size_t>(i)]) continue;
    if (z.row(i).norm() < detail::kMinNorm) {
      throw NumericError(track.video_id + ": zero-norm projected frame " + std::to_string(i));
    }
    s(i) = score_from_cosine(cosine(z.row(i).transpose(), q), state.tau, options.tau_sigmoid);
    best = std::max(best, s(i));
  }
  if (std::find(flagged.begin(), flagged.end(), true) != flagged.end()) {
    if (!std::isfinite(best)) {
      throw NumericError(track.video_id + ": every frame cancels against the pseudo-label text");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (flagged[static_cast<std::size_t>(i)]) s(i) = best;
    }
  }
  if (degenerate) *degenerate = std::move(flagged);
  return s;
}

}  // namespace tzal
