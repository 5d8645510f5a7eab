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

#include "tzal/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

#include "tzal/error.hpp"
#include "tzal/t3al.hpp"

namespace tzal {
namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : rng_(seed) {}

  VectorXd vector(Eigen::Index n) {
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal_(rng_);
    return v;
  }

  VectorXd unit(Eigen::Index n) {
    for (;;) {
      VectorXd v = vector(n);
      const double norm = v.norm();
      if (norm > 1e-6) return v / norm;
    }
  }

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

VectorXd normalized(const VectorXd& v) {
  const double n = v.norm();
  return n > 0.0 ? VectorXd(v / n) : v;
}

std::string video_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "video_%04d", i);
  return buf;
}

std::string label_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "class_%02d", i);
  return buf;
}

std::vector<PlantedSegment> place_segments(const SynthSpec& spec, Gaussian& g) {
  const int count = g.uniform(spec.min_segments, spec.max_segments);
  std::vector<int> lengths(static_cast<std::size_t>(count));
  int used = (count - 1) * spec.min_gap_frames;
  for (int& len : lengths) {
    len = g.uniform(spec.min_segment_frames, spec.max_segment_frames);
    used += len;
  }
  // Spread the leftover background over the count + 1 gaps.
  const int slack = spec.frames - used;
  std::vector<int> cuts(static_cast<std::size_t>(count));
  for (int& c : cuts) c = g.uniform(0, slack);
  std::sort(cuts.begin(), cuts.end());

  std::vector<PlantedSegment> out;
  int cursor = 0, prev_cut = 0;
  for (int s = 0; s < count; ++s) {
    cursor += cuts[static_cast<std::size_t>(s)] - prev_cut;
    prev_cut = cuts[static_cast<std::size_t>(s)];
    out.push_back({cursor, cursor + lengths[static_cast<std::size_t>(s)] - 1});
    cursor += lengths[static_cast<std::size_t>(s)] + spec.min_gap_frames;
  }
  return out;
}

}  // namespace

void SynthSpec::validate() const {
  auto fail = [](const std::string& what) { throw UsageError("invalid synth spec: " + what); };
  if (num_categories < 1 || dim < 1 || videos < 1 || frames < 1) fail("counts must be >= 1");
  if (num_categories > dim) fail("num_categories must not exceed dim (texts are orthonormal)");
  if (min_segments < 1 || max_segments < min_segments) fail("bad segment count range");
  if (min_segment_frames < 1 || max_segment_frames < min_segment_frames) fail("bad segment length range");
  if (min_gap_frames < 0) fail("min_gap_frames must be >= 0");
  if (max_segments * max_segment_frames + (max_segments - 1) * min_gap_frames > frames) {
    fail("segments do not fit in the video");
  }
  if (!(fps > 0.0f)) fail("fps must be positive");
  if (!(noise_sigma >= 0.0) || !(caption_noise_sigma >= 0.0)) fail("sigmas must be >= 0");
  if (!(distractor_similarity >= -1.0 && distractor_similarity <= 1.0)) {
    fail("distractor_similarity must lie in [-1, 1]");
  }
}

json SynthSpec::to_json() const {
  json doc = {{"num_categories", num_categories},
              {"dim", dim},
              {"videos", videos},
              {"frames", frames},
              {"segments", {min_segments, max_segments}},
              {"segment_frames", {min_segment_frames, max_segment_frames}},
              {"min_gap_frames", min_gap_frames},
              {"fps", fps},
              {"noise_sigma", noise_sigma},
              {"caption_noise_sigma", caption_noise_sigma},
              {"background", background == BackgroundMode::kRandom ? "random" : "near-miss"},
              {"distractor_similarity", distractor_similarity},
              {"seed", seed}};
  if (!run_config.is_null()) doc["run_config"] = run_config;
  return doc;
}

SynthSpec SynthSpec::from_json(const json& doc) {
  SynthSpec s;
  if (!doc.is_object()) throw UsageError("synth spec must be a JSON object");
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "num_categories") s.num_categories = v.get<int>();
      else if (key == "dim") s.dim = v.get<int>();
      else if (key == "videos") s.videos = v.get<int>();
      else if (key == "frames") s.frames = v.get<int>();
      else if (key == "segments") {
        s.min_segments = v.at(0).get<int>();
        s.max_segments = v.at(1).get<int>();
      } else if (key == "segment_frames") {
        s.min_segment_frames = v.at(0).get<int>();
        s.max_segment_frames = v.at(1).get<int>();
      } else if (key == "min_gap_frames") s.min_gap_frames = v.get<int>();
      else if (key == "fps") s.fps = v.get<float>();
      else if (key == "noise_sigma") s.noise_sigma = v.get<double>();
      else if (key == "caption_noise_sigma") s.caption_noise_sigma = v.get<double>();
      else if (key == "background") {
        const auto mode = v.get<std::string>();
        if (mode == "random") s.background = BackgroundMode::kRandom;
        else if (mode == "near-miss") s.background = BackgroundMode::kNearMiss;
        else throw UsageError("unknown background mode \"" + mode + "\"");
      } else if (key == "distractor_similarity") s.distractor_similarity = v.get<double>();
      else if (key == "seed") s.seed = v.get<std::uint64_t>();
      else if (key == "run_config") s.run_config = v;
      else throw UsageError("unknown synth spec field \"" + key + "\"");
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad synth spec value: ") + e.what());
  }
  s.validate();
  return s;
}

SynthSummary describe(const SynthSpec& spec) {
  spec.validate();
  SynthSummary out;
  out.videos = spec.videos;
  out.frames_per_video = spec.frames;
  out.categories = spec.num_categories;
  const double n = spec.frames;
  const double mean_count = 0.5 * (spec.min_segments + spec.max_segments);
  const double mean_len = 0.5 * (spec.min_segment_frames + spec.max_segment_frames);
  out.expected_foreground_fraction = mean_count * mean_len / n;
  out.min_foreground_fraction = spec.min_segments * spec.min_segment_frames / n;
  out.max_foreground_fraction = spec.max_segments * spec.max_segment_frames / n;
  return out;
}

SynthDataset generate_dataset(const SynthSpec& spec) {
  spec.validate();
  const Eigen::Index d = spec.dim;
  SynthDataset out;

  Gaussian global(spec.seed);
  MatrixXd raw(d, spec.num_categories);
  for (int c = 0; c < spec.num_categories; ++c) raw.col(c) = global.vector(d);
  const MatrixXd q = Eigen::HouseholderQR<MatrixXd>(raw).householderQ() *
                     MatrixXd::Identity(d, spec.num_categories);
  // Round through f32 so the in-memory dataset matches what lands on disk.
  out.texts = q.transpose().cast<float>().cast<double>();
  for (int c = 0; c < spec.num_categories; ++c) out.labels.push_back(label_name(c));

  for (int v = 0; v < spec.videos; ++v) {
    SynthVideo video;
    const std::string id = video_name(v);
    Gaussian g(spec.seed ^ video_seed_hash(id));
    video.category = g.uniform(0, spec.num_categories - 1);
    video.segments = place_segments(spec, g);
    const VectorXd text = out.texts.row(video.category).transpose();

    VectorXd distractor = text;
    if (spec.background == BackgroundMode::kNearMiss) {
      VectorXd u = g.unit(d);
      u -= u.dot(text) * text;
      u = normalized(u);
      const double rho = spec.distractor_similarity;
      distractor = rho * text + std::sqrt(std::max(0.0, 1.0 - rho * rho)) * u;
    }

    std::vector<bool> action(static_cast<std::size_t>(spec.frames), false);
    for (const auto& s : video.segments) {
      for (int i = s.first_frame; i <= s.last_frame; ++i) action[static_cast<std::size_t>(i)] = true;
    }

    RowMatrixF frames(spec.frames, d);
    RowMatrixF captions(spec.frames, d);
    for (int i = 0; i < spec.frames; ++i) {
      VectorXd center;
      if (action[static_cast<std::size_t>(i)]) {
        center = text;
      } else if (spec.background == BackgroundMode::kNearMiss) {
        center = distractor;
      } else {
        center = g.unit(d);
      }
      const bool random_bg = !action[static_cast<std::size_t>(i)] &&
                             spec.background == BackgroundMode::kRandom;
      const VectorXd frame = random_bg ? center : normalized(center + spec.noise_sigma * g.vector(d));
      frames.row(i) = frame.cast<float>().transpose();
      captions.row(i) =
          normalized(center + spec.caption_noise_sigma * g.vector(d)).cast<float>().transpose();
    }

    video.track.video_id = id;
    video.track.fps = spec.fps;
    video.track.frames = std::move(frames);
    video.track.captions = std::move(captions);

    VideoAnnotation ann;
    ann.duration_s = spec.frames / static_cast<double>(spec.fps);
    for (const auto& s : video.segments) {
      ann.segments.push_back({out.labels[static_cast<std::size_t>(video.category)],
                              s.first_frame / static_cast<double>(spec.fps),
                              (s.last_frame + 1) / static_cast<double>(spec.fps)});
    }
    out.annotations.emplace(id, std::move(ann));
    out.videos.push_back(std::move(video));
  }
  return out;
}

fs::path generate(const SynthSpec& spec, const fs::path& out_dir) {
  const SynthDataset data = generate_dataset(spec);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());

  Manifest m;
  m.directory = out_dir;
  m.bank.names = data.labels;
  m.bank.texts = data.texts;
  for (const auto& v : data.videos) {
    const fs::path file = v.track.video_id + ".tzal";
    write_feature_file(v.track, out_dir / file);
    m.videos.push_back({v.track.video_id, file});
  }
  write_annotations(data.annotations, out_dir / "annotations.json");
  m.annotations_file = "annotations.json";
  m.config = spec.run_config;
  const fs::path manifest = out_dir / "manifest.json";
  write_manifest(m, manifest);
  return manifest;
}

}  // namespace tzal
