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

// File formats shared by the extractor, the localization engine and the
// evaluator:
//
//   * TZAL binary embedding files (frame features, optional caption block,
//     and plain matrices such as label texts and projections),
//   * the JSON manifest tying a label bank to a list of videos,
//   * annotation and prediction JSON documents.
//
// All binary payloads are little-endian f32. Everything is upcast to f64 when
// it enters the numeric code.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace tzal {

using RowMatrixF =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr char kFeatureMagic[4] = {'T', 'Z', 'A', 'L'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::uint32_t kFlagHasCaptions = 1u << 0;
// magic + version + N + D + fps + flags
inline constexpr std::size_t kFeatureHeaderBytes = 24;
// N + D_c
inline constexpr std::size_t kCaptionHeaderBytes = 8;

inline constexpr char kDefaultPromptTemplate[] = "a video of action {CLS}";

struct FeatureTrack {
  std::string video_id;
  float fps = 1.0f;
  RowMatrixF frames;                   // N x D_v, raw vision-encoder outputs
  std::optional<RowMatrixF> captions;  // N x D_c, language-encoder outputs

  Eigen::Index num_frames() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }
  bool has_captions() const { return captions.has_value(); }

  // Throws DataError when an invariant does not hold.
  void validate() const;
};

// Byte-level equality of the payloads, fps and id.
bool bitwise_equal(const FeatureTrack& a, const FeatureTrack& b);

struct LabelBank {
  std::vector<std::string> names;
  Eigen::MatrixXd texts;                 // |C| x D_l
  std::optional<Eigen::MatrixXd> proj_v;  // D_v x D
  std::optional<Eigen::MatrixXd> proj_l;  // D_l x D
  std::string prompt_template = kDefaultPromptTemplate;

  std::size_t size() const { return names.size(); }
  Eigen::Index text_dim() const { return texts.cols(); }
  bool has_projections() const { return proj_v.has_value(); }
  // Index of a category name, or -1.
  int index_of(const std::string& name) const;

  void validate() const;
};

struct GtSegment {
  std::string label;
  double start_s = 0.0;
  double end_s = 0.0;

  friend bool operator==(const GtSegment&, const GtSegment&) = default;
};

struct VideoAnnotation {
  double duration_s = 0.0;
  std::vector<GtSegment> segments;

  friend bool operator==(const VideoAnnotation&,
                         const VideoAnnotation&) = default;
};

using AnnotationSet = std::map<std::string, VideoAnnotation>;

struct PredictedSegment {
  std::string label;
  double start_s = 0.0;
  double end_s = 0.0;
  double score = 0.0;

  friend bool operator==(const PredictedSegment&,
                         const PredictedSegment&) = default;
};

struct VideoPredictions {
  std::string id;
  std::vector<PredictedSegment> proposals;

  friend bool operator==(const VideoPredictions&,
                         const VideoPredictions&) = default;
};

struct PredictionSet {
  std::vector<VideoPredictions> videos;
  // Effective configuration echoed for provenance; null when absent.
  nlohmann::json config;

  friend bool operator==(const PredictionSet& a, const PredictionSet& b) {
    return a.videos == b.videos && a.config == b.config;
  }
};

struct VideoRef {
  std::string id;
  std::filesystem::path feature_file;  // resolved against the manifest dir
};

struct Manifest {
  std::filesystem::path directory;
  LabelBank bank;
  std::vector<VideoRef> videos;
  std::optional<std::filesystem::path> annotations_file;
  std::optional<AnnotationSet> annotations;
  // Run-config defaults supplied by the manifest ("config" object); null when
  // absent.
  nlohmann::json config;
};

// -- binary embedding files ------------------------------------------------

void write_feature_file(const FeatureTrack& track,
                        const std::filesystem::path& path);
// The returned track's video_id is the file stem; manifests override it.
FeatureTrack read_feature_file(const std::filesystem::path& path);

// A bare matrix in the same container (fps field 0, no caption block).
void write_matrix_file(const Eigen::MatrixXd& m,
                       const std::filesystem::path& path);
Eigen::MatrixXd read_matrix_file(const std::filesystem::path& path);

// -- JSON documents --------------------------------------------------------

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest,
                    const std::filesystem::path& path);

AnnotationSet read_annotations(const std::filesystem::path& path);
void write_annotations(const AnnotationSet& annotations,
                       const std::filesystem::path& path);

nlohmann::json predictions_to_json(const PredictionSet& preds);
PredictionSet predictions_from_json(const nlohmann::json& doc);
void write_predictions(const PredictionSet& preds,
                       const std::filesystem::path& path);
PredictionSet read_predictions(const std::filesystem::path& path);

// Writes `doc` followed by a newline; throws DataError on I/O failure.
void write_json_file(const nlohmann::json& doc,
                     const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace tzal
