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

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace tzal {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Trainable parameters of the adapter: linear (bias-free) vision and language
// projections into a shared D-dimensional space, a temperature, and the Adam
// moment buffers for each of them.
struct AdapterState {
  MatrixXd w_v;  // D_v x D
  MatrixXd w_l;  // D_l x D
  double tau = 1.0;

  MatrixXd m_w_v, v_w_v;
  MatrixXd m_w_l, v_w_l;
  double m_tau = 0.0, v_tau = 0.0;
  std::int64_t step_count = 0;

  static AdapterState identity(Eigen::Index dim);
  static AdapterState from_projections(const MatrixXd& proj_v, const MatrixXd& proj_l);

  Eigen::Index frame_dim() const { return w_v.rows(); }
  Eigen::Index text_dim() const { return w_l.rows(); }
  Eigen::Index shared_dim() const { return w_v.cols(); }
};

// Exact equality of every parameter, moment buffer and the step counter.
bool bitwise_equal(const AdapterState& a, const AdapterState& b);

struct AdapterGrads {
  MatrixXd w_v;
  MatrixXd w_l;
  double tau = 0.0;

  static AdapterGrads zeros_like(const AdapterState& state);
};

struct LossBreakdown {
  double total = 0.0;
  double l_z = 0.0;  // representation loss on the sampled positive pair(s)
  double l_s = 0.0;  // separation loss on the 2K scores
};

// How per-frame scores are formed from cosines and which vectors enter them.
struct ScoreOptions {
  // Scores become logistic(tau * cos) instead of tau * cos. Without it the
  // separation loss is blind to tau.
  bool tau_sigmoid = false;
  // Frames are compared as project(x) - project(text) (background removal).
  bool subtract_text = false;
};

// One positive pair for the representation loss.
struct PositivePair {
  int i = 0;
  int j = 1;
  double weight = 1.0;
};

VectorXd project_frame(const AdapterState& state, const VectorXd& x);
VectorXd project_text(const AdapterState& state, const VectorXd& t);

double cosine(const VectorXd& a, const VectorXd& b);

// 2 - 2 cos(z_i, z_j); in [0, 4].
double loss_repr(const VectorXd& z_i, const VectorXd& z_j);

// 2 - 2 cos(concat(s_pos, s_neg), [1_K; 0_K]).
double loss_sep(const VectorXd& s_pos, const VectorXd& s_neg);

double score_from_cosine(double cos, double tau, bool tau_sigmoid);

struct LossAndGrad {
  LossBreakdown loss;
  AdapterGrads grads;
};

// Total loss L_z + L_s over K positive and K negative raw frames (rows) and
// its exact gradient with respect to w_v, w_l and tau. Each pair contributes
// weight * loss_repr. An empty pair list leaves L_z at 0.
LossAndGrad loss_and_grad(const AdapterState& state, const MatrixXd& pos_frames,
                          const MatrixXd& neg_frames, const VectorXd& text,
                          std::span<const PositivePair> pairs,
                          const ScoreOptions& options = {});

LossAndGrad loss_and_grad(const AdapterState& state, const MatrixXd& pos_frames,
                          const MatrixXd& neg_frames, const VectorXd& text,
                          PositivePair pair, const ScoreOptions& options = {});

// Forward-only evaluation built from the scalar primitives above. Shares no
// code with the fused forward/backward in loss_and_grad.
LossBreakdown evaluate_loss(const AdapterState& state, const MatrixXd& pos_frames,
                            const MatrixXd& neg_frames, const VectorXd& text,
                            std::span<const PositivePair> pairs,
                            const ScoreOptions& options = {});

struct AdamOptions {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdapterState adam_step(AdapterState state, const AdapterGrads& grads,
                       const AdamOptions& options);

// exp(scale * x_i - max) / sum.
VectorXd softmax(const VectorXd& logits, double scale);

// -- finite-difference gradient check ---------------------------------------

struct GradCheckOptions {
  int trials = 100;
  int max_frame_dim = 8;
  int max_text_dim = 8;
  int max_shared_dim = 8;
  int max_k = 4;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error; see relative_error().
  double abs_floor = 1e-5;
  std::uint64_t seed = 0;
};

struct GradCheckTrial {
  int frame_dim = 0, text_dim = 0, shared_dim = 0, k = 0;
  ScoreOptions options;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckTrial> trials;
  int num_passed = 0;
  double worst_rel_error = 0.0;

  bool all_passed() const { return num_passed == static_cast<int>(trials.size()); }
};

// |a - b| / max(|a|, |b|, abs_floor)
double relative_error(double analytic, double numeric, double abs_floor);

// Central differences of evaluate_loss with respect to every parameter.
AdapterGrads numeric_gradient(const AdapterState& state, const MatrixXd& pos_frames,
                              const MatrixXd& neg_frames, const VectorXd& text,
                              std::span<const PositivePair> pairs,
                              const ScoreOptions& options, double step);

GradCheckReport run_grad_check(const GradCheckOptions& options);

}  // namespace tzal
