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

// Synthetic embedding datasets with planted action segments. Category texts
// are orthonormal; action frames are noisy copies of their category's text;
// background frames are either random directions or a per-video distractor
// that partially resembles the action ("near-miss").

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "tzal/featio.hpp"

namespace tzal {

enum class BackgroundMode { kRandom, kNearMiss };

struct SynthSpec {
  int num_categories = 10;
  int dim = 64;
  int videos = 50;
  int frames = 200;
  int min_segments = 1;
  int max_segments = 3;
  int min_segment_frames = 10;
  int max_segment_frames = 40;
  int min_gap_frames = 10;  // background frames between planted segments
  float fps = 1.0f;
  double noise_sigma = 0.1;
  double caption_noise_sigma = 0.1;
  BackgroundMode background = BackgroundMode::kNearMiss;
  double distractor_similarity = 0.5;  // cos(distractor, action text)
  std::uint64_t seed = 0;
  // Run-config defaults written into the generated manifest; null for none.
  nlohmann::json run_config;

  void validate() const;
  nlohmann::json to_json() const;
  // Missing fields keep their defaults; unknown fields are rejected.
  static SynthSpec from_json(const nlohmann::json& doc);
};

struct SynthSummary {
  int videos = 0;
  int frames_per_video = 0;
  int categories = 0;
  double expected_foreground_fraction = 0.0;
  double min_foreground_fraction = 0.0;
  double max_foreground_fraction = 0.0;
};

SynthSummary describe(const SynthSpec& spec);

struct PlantedSegment {
  int first_frame = 0;
  int last_frame = 0;  // inclusive
};

struct SynthVideo {
  FeatureTrack track;
  int category = 0;
  std::vector<PlantedSegment> segments;
};

struct SynthDataset {
  std::vector<std::string> labels;
  Eigen::MatrixXd texts;  // |C| x D, orthonormal rows
  std::vector<SynthVideo> videos;
  AnnotationSet annotations;
};

// Pure function of the spec.
SynthDataset generate_dataset(const SynthSpec& spec);

// Writes texts, one feature file per video, annotations.json and
// manifest.json into `out_dir` (created if needed). Returns the manifest path.
std::filesystem::path generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace tzal
