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
#include <cmath>
#include <map>
#include <string>

#include "internal.hpp"
#include "tzal/error.hpp"
#include "tzal/t3al.hpp"

namespace tzal {
using nlohmann::json;

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw UsageError("invalid config: " + what); };
  if (max_steps < 0) fail("steps must be >= 0");
  if (k < 1) fail("k must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must lie in [0, 1]");
  if (!(beta >= -1.0 && beta <= 1.0)) fail("beta must lie in [-1, 1]");
  if (jitter < -1) fail("jitter must be >= 0 (or auto)");
  if (smooth_window < 1 || smooth_window % 2 == 0) fail("window must be a positive odd number");
  if (patience < 1) fail("patience must be >= 1");
  if (num_pairs < 1) fail("pairs must be >= 1");
}

json RunConfig::to_json() const {
  return {{"steps", max_steps},
          {"k", k},
          {"lr", lr},
          {"alpha", alpha},
          {"beta", beta},
          {"jitter", jitter < 0 ? json("auto") : json(jitter)},
          {"window", smooth_window},
          {"patience", patience},
          {"pairs", num_pairs},
          {"subtract_pseudo_label", subtract_pseudo_label},
          {"tau_sigmoid", tau_sigmoid},
          {"oracle_class", oracle_class},
          {"oracle_count", oracle_count},
          {"oracle_selection", oracle_selection},
          {"seed", seed}};
}

RunConfig RunConfig::from_json(const json& doc) { return from_json(doc, RunConfig{}); }

RunConfig RunConfig::from_json(const json& doc, RunConfig c) {
  if (doc.is_null()) return c;
  if (!doc.is_object()) throw UsageError("config must be a JSON object");
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "steps") c.max_steps = v.get<int>();
      else if (key == "k") c.k = v.get<int>();
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "alpha") c.alpha = v.get<double>();
      else if (key == "beta") c.beta = v.get<double>();
      else if (key == "jitter") c.jitter = v.is_string() && v.get<std::string>() == "auto" ? -1 : v.get<int>();
      else if (key == "window") c.smooth_window = v.get<int>();
      else if (key == "patience") c.patience = v.get<int>();
      else if (key == "pairs") c.num_pairs = v.get<int>();
      else if (key == "subtract_pseudo_label") c.subtract_pseudo_label = v.get<bool>();
      else if (key == "tau_sigmoid") c.tau_sigmoid = v.get<bool>();
      else if (key == "oracle_class") c.oracle_class = v.get<bool>();
      else if (key == "oracle_count") c.oracle_count = v.get<bool>();
      else if (key == "oracle_selection") c.oracle_selection = v.get<bool>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else throw UsageError("unknown config key \"" + key + "\"");
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

PseudoLabel oracle_class(const FeatureTrack& track, const LabelBank& bank,
                         const AdapterState& state, const VideoAnnotation& gt) {
  if (gt.segments.empty()) throw DataError(track.video_id + ": oracle class needs annotated segments");
  std::map<int, double> duration;
  for (const auto& s : gt.segments) {
    const int idx = bank.index_of(s.label);
    if (idx < 0) throw DataError(track.video_id + ": unknown label \"" + s.label + "\"");
    duration[idx] += s.end_s - s.start_s;
  }
  int best = -1;
  for (const auto& [idx, d] : duration) {
    if (best < 0 || d > duration[best]) best = idx;
  }
  PseudoLabel out;
  const MatrixXd z = detail::project_frames(state, detail::frames_f64(track));
  out.mean_embedding = z.colwise().mean().transpose();
  out.label_index = best;
  out.similarity = cosine(out.mean_embedding, project_text(state, bank.texts.row(best).transpose()));
  return out;
}

namespace {

VideoResult run_pipeline(const FeatureTrack& track, const LabelBank& bank, const RunConfig& config,
                         const AdapterState& initial, const VideoAnnotation* gt) {
  config.validate();
  track.validate();
  if (config.any_oracle() && gt == nullptr) {
    throw DataError(track.video_id + ": oracle mode requested but the video has no annotations");
  }
  std::mt19937_64 rng(config.seed ^ video_seed_hash(track.video_id));

  VideoResult out;
  out.video_id = track.video_id;
  out.pseudo = config.oracle_class ? oracle_class(track, bank, initial, *gt)
                                   : pseudo_label(track, bank, initial);

  std::vector<bool> mask;
  if (config.oracle_selection) {
    mask = frames_inside(*gt, track.fps, track.num_frames(), &bank.names[static_cast<std::size_t>(out.pseudo.label_index)]);
    const bool any_in = std::find(mask.begin(), mask.end(), true) != mask.end();
    if (!any_in) mask = frames_inside(*gt, track.fps, track.num_frames());
  }

  // Working copy; `initial` stays untouched and the adapted state dies with
  // this frame.
  AdaptResult adapted = adapt(track, bank, out.pseudo, config, initial, rng,
                              config.oracle_selection ? &mask : nullptr);
  out.trace = std::move(adapted.trace);
  out.warnings = std::move(adapted.warnings);
  const AdapterState& state = adapted.state;

  const VectorXd scores = frame_scores(track, bank.texts.row(out.pseudo.label_index).transpose(),
                                       state, config.score_options());
  const VectorXd smoothed = smooth_scores(scores, config.smooth_window);
  std::vector<Proposal> regions = extract_regions(smoothed, track, bank, state);

  if (config.oracle_count) {
    out.proposals = oracle_count(regions, track, bank, state, out.pseudo, gt->segments.size());
  } else {
    SuppressResult s = suppress(regions, track, bank, state, config.alpha, config.beta);
    if (s.skipped) out.warnings.push_back(track.video_id + ": no caption embeddings, suppression skipped");
    out.proposals = std::move(s.kept);
  }
  return out;
}

}  // namespace

VideoResult localize_video(const FeatureTrack& track, const LabelBank& bank,
                           const RunConfig& config, const AdapterState& initial) {
  if (config.any_oracle()) {
    throw UsageError(track.video_id + ": oracle flags need ground truth; use localize_video_with_oracle");
  }
  return run_pipeline(track, bank, config, initial, nullptr);
}

VideoResult localize_video_with_oracle(const FeatureTrack& track, const LabelBank& bank,
                                       const RunConfig& config, const AdapterState& initial,
                                       const VideoAnnotation& gt) {
  return run_pipeline(track, bank, config, initial, &gt);
}

std::vector<Proposal> naive_baseline(const FeatureTrack& track, const LabelBank& bank,
                                     const AdapterState& state, double threshold, double scale) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw UsageError("baseline threshold must lie in [0, 1], got " + std::to_string(threshold));
  }
  const MatrixXd z = detail::project_frames(state, detail::frames_f64(track));
  const MatrixXd texts = detail::project_texts(state, bank);
  const Eigen::Index n = z.rows();

  std::vector<int> label(static_cast<std::size_t>(n), -1);  // -1: background
  std::vector<double> prob(static_cast<std::size_t>(n), 0.0);
  VectorXd cos(texts.rows());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < texts.rows(); ++c) {
      cos(c) = cosine(z.row(i).transpose(), texts.row(c).transpose());
    }
    const VectorXd p = softmax(cos, scale);
    Eigen::Index arg = 0;
    const double top = p.maxCoeff(&arg);
    if (top > threshold) {
      label[static_cast<std::size_t>(i)] = static_cast<int>(arg);
      prob[static_cast<std::size_t>(i)] = top;
    }
  }

  std::vector<Proposal> out;
  for (Eigen::Index i = 0; i < n;) {
    const int l = label[static_cast<std::size_t>(i)];
    if (l < 0) {
      ++i;
      continue;
    }
    Eigen::Index j = i;
    double sum = prob[static_cast<std::size_t>(i)];
    while (j + 1 < n && label[static_cast<std::size_t>(j + 1)] == l) sum += prob[static_cast<std::size_t>(++j)];
    Proposal p;
    p.label_index = l;
    p.first_frame = static_cast<int>(i);
    p.last_frame = static_cast<int>(j);
    p.start_s = static_cast<double>(i) / track.fps;
    p.end_s = static_cast<double>(j + 1) / track.fps;
    p.score = sum / static_cast<double>(j - i + 1);
    out.push_back(p);
    i = j + 1;
  }
  return out;
}

PredictedSegment to_prediction(const Proposal& p, const LabelBank& bank) {
  return {bank.names.at(static_cast<std::size_t>(p.label_index)), p.start_s, p.end_s, p.score};
}

}  // namespace tzal
