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

// Per-video test-time adaptation for temporal action localization.
//
// A video is localized in isolation: the adapter starts from the caller's
// initial state, is tuned on self-supervised losses computed from the video's
// own frames, produces proposals, and is then thrown away.
//
//   pseudo_label -> [subtract_background] -> adapt -> frame_scores
//     -> smooth_scores -> extract_regions -> suppress
//
// adapt() with max_steps == 0 gives the unadapted ("T = 0") baseline.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "tzal/featio.hpp"
#include "tzal/numcore.hpp"

namespace tzal {

struct RunConfig {
  int max_steps = 50;
  int k = 4;
  double lr = 1e-5;
  double alpha = 0.5;
  double beta = 0.75;
  int jitter = -1;  // frames; negative selects max(1, round(0.05 * N / K))
  int smooth_window = 5;
  int patience = 5;
  int num_pairs = 1;  // positive pairs per step for the representation loss
  bool subtract_pseudo_label = false;
  bool tau_sigmoid = false;
  bool oracle_class = false;
  bool oracle_count = false;
  bool oracle_selection = false;
  std::uint64_t seed = 0;

  bool any_oracle() const { return oracle_class || oracle_count || oracle_selection; }
  ScoreOptions score_options() const { return {tau_sigmoid, subtract_pseudo_label}; }

  // Throws UsageError naming the offending field.
  void validate() const;

  nlohmann::json to_json() const;
  // Fields present in `doc` override those of `base`; unknown keys are
  // rejected.
  static RunConfig from_json(const nlohmann::json& doc, RunConfig base);
  static RunConfig from_json(const nlohmann::json& doc);
};

struct PseudoLabel {
  int label_index = 0;
  VectorXd mean_embedding;  // projected mean frame
  double similarity = 0.0;
};

struct FrameSample {
  int frame_index = 0;
  double score = 0.0;
};

struct SampleSets {
  std::vector<FrameSample> positives;
  std::vector<FrameSample> negatives;
};

struct Proposal {
  int label_index = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  double score = 0.0;
  int first_frame = 0;  // inclusive
  int last_frame = 0;   // inclusive

  friend bool operator==(const Proposal&, const Proposal&) = default;
};

// Projected frames with the pseudo-label text removed. Frames that cancel to
// (numerically) zero are flagged and kept out of sample selection.
struct BackgroundAdjusted {
  MatrixXd vectors;  // N x D
  std::vector<bool> degenerate;
};

struct AdaptResult {
  AdapterState state;
  std::vector<LossBreakdown> trace;
  int best_step = 0;  // 1-based; 0 when no step ran
  bool stopped_early = false;
  std::vector<std::string> warnings;
};

struct SuppressResult {
  std::vector<Proposal> kept;
  // d_i / M for every input proposal; empty when the stage was skipped.
  std::vector<double> support;
  bool skipped = false;
};

struct VideoResult {
  std::string video_id;
  PseudoLabel pseudo;
  std::vector<Proposal> proposals;
  std::vector<LossBreakdown> trace;
  std::vector<std::string> warnings;
};

// Adapter initialized from the bank's projections, or identity in the shared
// space when the bank has none.
AdapterState initial_state(const LabelBank& bank, Eigen::Index frame_dim);

// 64-bit FNV-1a; per-video RNG seed is config.seed ^ video_seed_hash(id).
std::uint64_t video_seed_hash(const std::string& video_id);

// Effective K and jitter for an N-frame video.
int effective_k(int requested_k, Eigen::Index num_frames);
int effective_jitter(const RunConfig& config, Eigen::Index num_frames, int k);

PseudoLabel pseudo_label(const FeatureTrack& track, const LabelBank& bank,
                         const AdapterState& state);

BackgroundAdjusted subtract_background(const FeatureTrack& track, const PseudoLabel& pseudo,
                                       const LabelBank& bank, const AdapterState& state);

// Per-frame score of every frame against `text_vec`. With subtract_text the
// frames are background-adjusted first; degenerate frames then take the
// highest non-degenerate score and are reported through `degenerate`.
VectorXd frame_scores(const FeatureTrack& track, const VectorXd& text_vec,
                      const AdapterState& state, const ScoreOptions& options = {},
                      std::vector<bool>* degenerate = nullptr);

// One positive (bin argmax) and one negative (bin argmin) per each of K equal
// temporal bins, each moved by a uniform integer offset in [-jitter, jitter]
// and kept inside its bin. A perturbed pair that would rank the negative
// above the positive falls back to the unperturbed pair. K is clamped to N/2.
SampleSets select_samples(const VectorXd& scores, int k, int jitter, std::mt19937_64& rng,
                          const std::vector<bool>& excluded = {});

AdaptResult adapt(const FeatureTrack& track, const LabelBank& bank, const PseudoLabel& pseudo,
                  const RunConfig& config, const AdapterState& state, std::mt19937_64& rng,
                  const std::vector<bool>* oracle_mask = nullptr);

// Centered moving average; the window shrinks to the in-range slice at the
// boundaries. `window` must be odd.
VectorXd smooth_scores(const VectorXd& scores, int window);

// Maximal runs of frames strictly above the mean score, each relabeled by the
// category closest to its mean projected frame.
std::vector<Proposal> extract_regions(const VectorXd& smoothed, const FeatureTrack& track,
                                      const LabelBank& bank, const AdapterState& state);

SuppressResult suppress(const std::vector<Proposal>& proposals, const FeatureTrack& track,
                        const LabelBank& bank, const AdapterState& state, double alpha,
                        double beta);

// Full pipeline with oracle flags off; annotations are deliberately not an
// input. The caller's `initial` is never modified.
VideoResult localize_video(const FeatureTrack& track, const LabelBank& bank,
                           const RunConfig& config, const AdapterState& initial);

// Same pipeline with ground truth available to the enabled oracle stages.
VideoResult localize_video_with_oracle(const FeatureTrack& track, const LabelBank& bank,
                                       const RunConfig& config, const AdapterState& initial,
                                       const VideoAnnotation& gt);

// Frame-wise softmax over category cosines; frames whose top probability
// exceeds `threshold` form proposals by consecutive equal argmax.
std::vector<Proposal> naive_baseline(const FeatureTrack& track, const LabelBank& bank,
                                     const AdapterState& state, double threshold = 0.8,
                                     double scale = 100.0);

// -- oracle stages ----------------------------------------------------------

// Label with the largest annotated duration (ties: lowest bank index).
PseudoLabel oracle_class(const FeatureTrack& track, const LabelBank& bank,
                         const AdapterState& state, const VideoAnnotation& gt);

// Keeps the m proposals whose mean projected frame is most similar to the
// pseudo-label text, in their original temporal order.
std::vector<Proposal> oracle_count(const std::vector<Proposal>& proposals,
                                   const FeatureTrack& track, const LabelBank& bank,
                                   const AdapterState& state, const PseudoLabel& pseudo,
                                   std::size_t m);

// Frames whose center time falls inside an annotated segment. With a label,
// only segments of that label count.
std::vector<bool> frames_inside(const VideoAnnotation& gt, float fps, Eigen::Index num_frames,
                                const std::string* label = nullptr);

SampleSets oracle_selection(const std::vector<bool>& inside, int k, std::mt19937_64& rng);

PredictedSegment to_prediction(const Proposal& p, const LabelBank& bank);

}  // namespace tzal
