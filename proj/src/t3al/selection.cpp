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
#include <string>

#include "tzal/error.hpp"
#include "tzal/t3al.hpp"

namespace tzal {
namespace {

constexpr int kNegativeRedraws = 8;

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace

int effective_k(int requested_k, Eigen::Index num_frames) {
  return static_cast<int>(std::min<Eigen::Index>(requested_k, num_frames / 2));
}

int effective_jitter(const RunConfig& config, Eigen::Index num_frames, int k) {
  if (config.jitter >= 0) return config.jitter;
  if (k < 1) return 0;
  const double per_bin = static_cast<double>(num_frames) / k;
  return std::max(1, static_cast<int>(std::lround(0.05 * per_bin)));
}

SampleSets select_samples(const VectorXd& scores, int k, int jitter, std::mt19937_64& rng,
                          const std::vector<bool>& excluded) {
  const int n = static_cast<int>(scores.size());
  if (n < 2) throw DataError("sample selection needs at least 2 frames, got " + std::to_string(n));
  if (k < 1) throw UsageError("sample selection needs K >= 1");
  if (jitter < 0) throw UsageError("jitter must be non-negative");
  k = effective_k(k, n);
  auto usable = [&](int i) { return excluded.empty() || !excluded[static_cast<std::size_t>(i)]; };

  SampleSets out;
  for (int b = 0; b < k; ++b) {
    const int lo = static_cast<int>(static_cast<long long>(b) * n / k);
    const int hi = static_cast<int>(static_cast<long long>(b + 1) * n / k);  // exclusive
    int amax = -1, amin = -1;
    for (int i = lo; i < hi; ++i) {
      if (!usable(i)) continue;
      if (amax < 0 || scores(i) > scores(amax)) amax = i;
      if (amin < 0 || scores(i) < scores(amin)) amin = i;
    }
    if (amax >= 0 && amax == amin) {
      // Constant bin: any other usable frame will do as the negative.
      for (int i = lo; i < hi; ++i) {
        if (usable(i) && i != amax) {
          amin = i;
          break;
        }
      }
    }
    if (amax < 0 || amax == amin) {
      throw NumericError("bin [" + std::to_string(lo) + ", " + std::to_string(hi) +
                         ") has fewer than two usable frames");
    }

    auto jittered = [&](int center) {
      return std::clamp(center + uniform_int(rng, -jitter, jitter), lo, hi - 1);
    };
    int pos = jittered(amax);
    int neg = jittered(amin);
    if (!usable(pos)) pos = amax;
    if (!usable(neg)) neg = amin;
    for (int attempt = 0; neg == pos && attempt < kNegativeRedraws; ++attempt) {
      neg = jittered(amin);
      if (!usable(neg)) neg = amin;
    }
    if (neg == pos) {
      // Nearest usable index to the argmin that is not the positive.
      int best = -1;
      for (int i = lo; i < hi; ++i) {
        if (!usable(i) || i == pos) continue;
        if (best < 0 || std::abs(i - amin) < std::abs(best - amin)) best = i;
      }
      neg = best;
    }
    if (scores(pos) < scores(neg)) {
      pos = amax;
      neg = amin;
    }
    out.positives.push_back({pos, scores(pos)});
    out.negatives.push_back({neg, scores(neg)});
  }
  return out;
}

std::vector<bool> frames_inside(const VideoAnnotation& gt, float fps, Eigen::Index num_frames,
                                const std::string* label) {
  std::vector<bool> inside(static_cast<std::size_t>(num_frames), false);
  for (const auto& seg : gt.segments) {
    if (label && seg.label != *label) continue;
    for (Eigen::Index i = 0; i < num_frames; ++i) {
      const double center = (static_cast<double>(i) + 0.5) / fps;
      if (center >= seg.start_s && center < seg.end_s) inside[static_cast<std::size_t>(i)] = true;
    }
  }
  return inside;
}

SampleSets oracle_selection(const std::vector<bool>& inside, int k, std::mt19937_64& rng) {
  std::vector<int> in, out;
  for (std::size_t i = 0; i < inside.size(); ++i) (inside[i] ? in : out).push_back(static_cast<int>(i));
  if (in.empty() || out.empty()) {
    throw DataError("oracle selection needs frames both inside and outside the annotations");
  }
  if (k < 1) throw UsageError("oracle selection needs K >= 1");
  // Without replacement while the pool lasts, then with replacement.
  auto draw = [&](std::vector<int> pool) {
    std::vector<FrameSample> picked;
    for (int r = 0; r < k; ++r) {
      if (pool.empty()) {
        const int idx = uniform_int(rng, 0, static_cast<int>(picked.size()) - 1);
        picked.push_back(picked[static_cast<std::size_t>(idx)]);
        continue;
      }
      const int idx = uniform_int(rng, 0, static_cast<int>(pool.size()) - 1);
      picked.push_back({pool[static_cast<std::size_t>(idx)], 0.0});
      pool.erase(pool.begin() + idx);
    }
    return picked;
  };
  SampleSets s;
  s.positives = draw(in);
  s.negatives = draw(out);
  return s;
}

}  // namespace tzal
