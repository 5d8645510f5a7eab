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

#include <cmath>
#include <limits>
#include <string>

#include "internal.hpp"
#include "tzal/error.hpp"
#include "tzal/t3al.hpp"

namespace tzal {
namespace {

constexpr double kImprovement = 1e-12;

std::vector<PositivePair> draw_pairs(int k, int count, std::mt19937_64& rng) {
  std::vector<PositivePair> pairs;
  if (k < 2) return pairs;
  const double weight = 1.0 / count;
  for (int p = 0; p < count; ++p) {
    const int i = std::uniform_int_distribution<int>(0, k - 1)(rng);
    int j = std::uniform_int_distribution<int>(0, k - 2)(rng);
    if (j >= i) ++j;
    pairs.push_back({i, j, weight});
  }
  return pairs;
}

MatrixXd gather_rows(const MatrixXd& frames, const std::vector<FrameSample>& samples) {
  MatrixXd out(static_cast<Eigen::Index>(samples.size()), frames.cols());
  for (std::size_t r = 0; r < samples.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = frames.row(samples[r].frame_index);
  }
  return out;
}

}  // namespace

AdaptResult adapt(const FeatureTrack& track, const LabelBank& bank, const PseudoLabel& pseudo,
                  const RunConfig& config, const AdapterState& state, std::mt19937_64& rng,
                  const std::vector<bool>* oracle_mask) {
  if (config.max_steps < 0) throw UsageError("max_steps must be >= 0");
  AdaptResult result;
  result.state = state;
  if (config.max_steps == 0) return result;

  const Eigen::Index n = track.num_frames();
  const int k = effective_k(config.k, n);
  if (k < config.k) {
    result.warnings.push_back(track.video_id + ": N=" + std::to_string(n) + " < 2K, K clamped from " +
                              std::to_string(config.k) + " to " + std::to_string(k));
  }
  if (k < 1) {
    result.warnings.push_back(track.video_id + ": too few frames to adapt, skipping adaptation");
    return result;
  }
  const int jitter = effective_jitter(config, n, k);
  const ScoreOptions options = config.score_options();
  const VectorXd text = bank.texts.row(pseudo.label_index).transpose();
  const MatrixXd frames = detail::frames_f64(track);
  const AdamOptions adam{.lr = config.lr};

  double best = std::numeric_limits<double>::infinity();
  for (int step = 1; step <= config.max_steps; ++step) {
    std::vector<bool> degenerate;
    const VectorXd scores = frame_scores(track, text, result.state, options, &degenerate);
    SampleSets samples = oracle_mask ? oracle_selection(*oracle_mask, k, rng)
                                     : select_samples(scores, k, jitter, rng, degenerate);
    const auto pairs = draw_pairs(k, config.num_pairs, rng);

    LossAndGrad lg;
    try {
      lg = loss_and_grad(result.state, gather_rows(frames, samples.positives),
                         gather_rows(frames, samples.negatives), text, pairs, options);
    } catch (const NumericError& e) {
      throw NumericError(track.video_id + ": adaptation step " + std::to_string(step) + ": " +
                         e.what());
    }
    result.trace.push_back(lg.loss);
    result.state = adam_step(std::move(result.state), lg.grads, adam);

    if (lg.loss.total < best - kImprovement) {
      best = lg.loss.total;
      result.best_step = step;
    } else if (step - result.best_step >= config.patience) {
      result.stopped_early = step < config.max_steps;
      break;
    }
  }
  return result;
}

}  // namespace tzal
