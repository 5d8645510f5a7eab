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

#include "tzal/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <string>

#include "tzal/error.hpp"

namespace tzal {
namespace {

constexpr double kMinNorm = 1e-12;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw NumericError(std::string("dimension mismatch in ") + what + ": got " +
                       std::to_string(got) + ", expected " + std::to_string(want));
  }
}

bool same_bits(const MatrixXd& a, const MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

// d cos(a, b) / d a, given the norms and the cosine itself.
VectorXd cosine_grad(const VectorXd& a, const VectorXd& b, double na, double nb, double c) {
  return b / (na * nb) - (c / (na * na)) * a;
}

void adam_update(MatrixXd& w, MatrixXd& m, MatrixXd& v, const MatrixXd& g,
                 const AdamOptions& o, double bc1, double bc2) {
  m = o.beta1 * m + (1.0 - o.beta1) * g;
  v = o.beta2 * v + (1.0 - o.beta2) * g.cwiseProduct(g);
  w.array() -= o.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + o.eps);
}

}  // namespace

AdapterState AdapterState::identity(Eigen::Index dim) {
  return from_projections(MatrixXd::Identity(dim, dim), MatrixXd::Identity(dim, dim));
}

AdapterState AdapterState::from_projections(const MatrixXd& proj_v, const MatrixXd& proj_l) {
  if (proj_v.cols() != proj_l.cols()) {
    throw NumericError("projection matrices disagree on the shared dimension");
  }
  AdapterState s;
  s.w_v = proj_v;
  s.w_l = proj_l;
  s.tau = 1.0;
  s.m_w_v = s.v_w_v = MatrixXd::Zero(proj_v.rows(), proj_v.cols());
  s.m_w_l = s.v_w_l = MatrixXd::Zero(proj_l.rows(), proj_l.cols());
  return s;
}

bool bitwise_equal(const AdapterState& a, const AdapterState& b) {
  return same_bits(a.w_v, b.w_v) && same_bits(a.w_l, b.w_l) && same_bits(a.tau, b.tau) &&
         same_bits(a.m_w_v, b.m_w_v) && same_bits(a.v_w_v, b.v_w_v) &&
         same_bits(a.m_w_l, b.m_w_l) && same_bits(a.v_w_l, b.v_w_l) &&
         same_bits(a.m_tau, b.m_tau) && same_bits(a.v_tau, b.v_tau) &&
         a.step_count == b.step_count;
}

AdapterGrads AdapterGrads::zeros_like(const AdapterState& state) {
  return {MatrixXd::Zero(state.w_v.rows(), state.w_v.cols()),
          MatrixXd::Zero(state.w_l.rows(), state.w_l.cols()), 0.0};
}

VectorXd project_frame(const AdapterState& state, const VectorXd& x) {
  check_dim(x.size(), state.frame_dim(), "project_frame");
  return state.w_v.transpose() * x;
}

VectorXd project_text(const AdapterState& state, const VectorXd& t) {
  check_dim(t.size(), state.text_dim(), "project_text");
  return state.w_l.transpose() * t;
}

double cosine(const VectorXd& a, const VectorXd& b) {
  check_dim(b.size(), a.size(), "cosine");
  const double na = a.norm();
  const double nb = b.norm();
  if (na < kMinNorm || nb < kMinNorm) throw NumericError("cosine of a zero-norm vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double loss_repr(const VectorXd& z_i, const VectorXd& z_j) {
  return 2.0 - 2.0 * cosine(z_i, z_j);
}

double loss_sep(const VectorXd& s_pos, const VectorXd& s_neg) {
  const Eigen::Index k = s_pos.size();
  if (k < 1 || s_neg.size() != k) throw NumericError("loss_sep needs K >= 1 scores per side");
  VectorXd s(2 * k);
  s << s_pos, s_neg;
  VectorXd b = VectorXd::Zero(2 * k);
  b.head(k).setOnes();
  if (s.norm() < kMinNorm) throw NumericError("loss_sep on an all-zero score vector");
  return 2.0 - 2.0 * cosine(s, b);
}

double score_from_cosine(double cos, double tau, bool tau_sigmoid) {
  return tau_sigmoid ? logistic(tau * cos) : tau * cos;
}

LossAndGrad loss_and_grad(const AdapterState& state, const MatrixXd& pos_frames,
                          const MatrixXd& neg_frames, const VectorXd& text,
                          std::span<const PositivePair> pairs, const ScoreOptions& options) {
  const Eigen::Index k = pos_frames.rows();
  if (k < 1 || neg_frames.rows() != k) throw NumericError("loss_and_grad needs K >= 1 per side");
  check_dim(pos_frames.cols(), state.frame_dim(), "positive frames");
  check_dim(neg_frames.cols(), state.frame_dim(), "negative frames");
  check_dim(text.size(), state.text_dim(), "text");

  const Eigen::Index n = 2 * k;
  MatrixXd x(n, state.frame_dim());
  x << pos_frames, neg_frames;

  // Forward.
  const VectorXd q = state.w_l.transpose() * text;
  const double nq = q.norm();
  if (nq < kMinNorm) throw NumericError("zero-norm projected text");
  MatrixXd z = x * state.w_v;  // rows are projected frames
  if (options.subtract_text) z.rowwise() -= q.transpose();

  VectorXd nz(n), c(n), s(n), ds_dc(n), ds_dtau(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    nz(r) = z.row(r).norm();
    if (nz(r) < kMinNorm) {
      throw NumericError(std::string("zero-norm projected ") + (r < k ? "positive" : "negative") +
                         " frame " + std::to_string(r < k ? r : r - k));
    }
    c(r) = z.row(r).dot(q) / (nz(r) * nq);
    if (options.tau_sigmoid) {
      const double sig = logistic(state.tau * c(r));
      s(r) = sig;
      ds_dc(r) = state.tau * sig * (1.0 - sig);
      ds_dtau(r) = c(r) * sig * (1.0 - sig);
    } else {
      s(r) = state.tau * c(r);
      ds_dc(r) = state.tau;
      ds_dtau(r) = c(r);
    }
  }

  const double ns = s.norm();
  if (ns < kMinNorm) throw NumericError("all-zero score vector in separation loss");
  const double nb = std::sqrt(static_cast<double>(k));
  const double sb = s.head(k).sum();
  const double cos_sb = sb / (ns * nb);

  LossAndGrad out;
  out.loss.l_s = 2.0 - 2.0 * cos_sb;

  MatrixXd g_z = MatrixXd::Zero(n, z.cols());
  VectorXd g_q = VectorXd::Zero(q.size());

  // Separation loss: dL/ds = -2 (b / (|s||b|) - cos_sb * s / |s|^2).
  VectorXd g_s = (2.0 * cos_sb / (ns * ns)) * s;
  g_s.head(k).array() -= 2.0 / (ns * nb);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double g_c = g_s(r) * ds_dc(r);
    if (g_c == 0.0) continue;
    const VectorXd zr = z.row(r).transpose();
    g_z.row(r) += g_c * cosine_grad(zr, q, nz(r), nq, c(r)).transpose();
    g_q += g_c * cosine_grad(q, zr, nq, nz(r), c(r));
  }
  // A plain tau * cos leaves L_s invariant to tau (degree-0 homogeneous), so
  // its derivative is exactly zero rather than round-off.
  out.grads.tau = options.tau_sigmoid ? g_s.dot(ds_dtau) : 0.0;

  // Representation loss on positive pairs.
  for (const PositivePair& p : pairs) {
    if (p.i < 0 || p.j < 0 || p.i >= k || p.j >= k || p.i == p.j) {
      throw NumericError("invalid positive pair (" + std::to_string(p.i) + ", " +
                         std::to_string(p.j) + ")");
    }
    const VectorXd zi = z.row(p.i).transpose();
    const VectorXd zj = z.row(p.j).transpose();
    const double cij = zi.dot(zj) / (nz(p.i) * nz(p.j));
    out.loss.l_z += p.weight * (2.0 - 2.0 * cij);
    g_z.row(p.i) += (-2.0 * p.weight) * cosine_grad(zi, zj, nz(p.i), nz(p.j), cij).transpose();
    g_z.row(p.j) += (-2.0 * p.weight) * cosine_grad(zj, zi, nz(p.j), nz(p.i), cij).transpose();
  }

  // Back through the projections; z = x W_v (- q) and q = W_l^T t.
  if (options.subtract_text) g_q -= g_z.colwise().sum().transpose();
  out.grads.w_v = x.transpose() * g_z;
  out.grads.w_l = text * g_q.transpose();
  out.loss.total = out.loss.l_z + out.loss.l_s;

  if (!std::isfinite(out.loss.total) || !out.grads.w_v.allFinite() ||
      !out.grads.w_l.allFinite() || !std::isfinite(out.grads.tau)) {
    throw NumericError("non-finite loss or gradient");
  }
  return out;
}

LossAndGrad loss_and_grad(const AdapterState& state, const MatrixXd& pos_frames,
                          const MatrixXd& neg_frames, const VectorXd& text, PositivePair pair,
                          const ScoreOptions& options) {
  return loss_and_grad(state, pos_frames, neg_frames, text, std::span(&pair, 1), options);
}

LossBreakdown evaluate_loss(const AdapterState& state, const MatrixXd& pos_frames,
                            const MatrixXd& neg_frames, const VectorXd& text,
                            std::span<const PositivePair> pairs, const ScoreOptions& options) {
  const Eigen::Index k = pos_frames.rows();
  const VectorXd q = project_text(state, text);
  auto embed = [&](const MatrixXd& frames, Eigen::Index r) {
    VectorXd z = project_frame(state, frames.row(r).transpose());
    if (options.subtract_text) z -= q;
    return z;
  };
  VectorXd s_pos(k), s_neg(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    s_pos(r) = score_from_cosine(cosine(embed(pos_frames, r), q), state.tau, options.tau_sigmoid);
    s_neg(r) = score_from_cosine(cosine(embed(neg_frames, r), q), state.tau, options.tau_sigmoid);
  }
  LossBreakdown out;
  out.l_s = loss_sep(s_pos, s_neg);
  for (const PositivePair& p : pairs) {
    out.l_z += p.weight * loss_repr(embed(pos_frames, p.i), embed(pos_frames, p.j));
  }
  out.total = out.l_z + out.l_s;
  return out;
}

AdapterState adam_step(AdapterState state, const AdapterGrads& grads, const AdamOptions& o) {
  if (grads.w_v.rows() != state.w_v.rows() || grads.w_v.cols() != state.w_v.cols() ||
      grads.w_l.rows() != state.w_l.rows() || grads.w_l.cols() != state.w_l.cols()) {
    throw NumericError("gradient shape does not match adapter state");
  }
  if (!grads.w_v.allFinite() || !grads.w_l.allFinite() || !std::isfinite(grads.tau)) {
    throw NumericError("non-finite gradient passed to adam_step");
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);
  adam_update(state.w_v, state.m_w_v, state.v_w_v, grads.w_v, o, bc1, bc2);
  adam_update(state.w_l, state.m_w_l, state.v_w_l, grads.w_l, o, bc1, bc2);
  state.m_tau = o.beta1 * state.m_tau + (1.0 - o.beta1) * grads.tau;
  state.v_tau = o.beta2 * state.v_tau + (1.0 - o.beta2) * grads.tau * grads.tau;
  state.tau -= o.lr * (state.m_tau / bc1) / (std::sqrt(state.v_tau / bc2) + o.eps);
  return state;
}

VectorXd softmax(const VectorXd& logits, double scale) {
  if (!logits.allFinite() || !std::isfinite(scale)) throw NumericError("softmax of non-finite input");
  if (logits.size() == 0) return logits;
  const VectorXd scaled = scale * logits;
  const VectorXd e = (scaled.array() - scaled.maxCoeff()).exp();
  return e / e.sum();
}

double relative_error(double analytic, double numeric, double abs_floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return std::abs(analytic - numeric) / denom;
}

AdapterGrads numeric_gradient(const AdapterState& state, const MatrixXd& pos_frames,
                              const MatrixXd& neg_frames, const VectorXd& text,
                              std::span<const PositivePair> pairs, const ScoreOptions& options,
                              double step) {
  AdapterState probe = state;
  auto f = [&]() { return evaluate_loss(probe, pos_frames, neg_frames, text, pairs, options).total; };
  auto central = [&](double& param) {
    const double saved = param;
    param = saved + step;
    const double up = f();
    param = saved - step;
    const double down = f();
    param = saved;
    return (up - down) / (2.0 * step);
  };
  AdapterGrads g = AdapterGrads::zeros_like(state);
  for (Eigen::Index i = 0; i < g.w_v.size(); ++i) g.w_v.data()[i] = central(probe.w_v.data()[i]);
  for (Eigen::Index i = 0; i < g.w_l.size(); ++i) g.w_l.data()[i] = central(probe.w_l.data()[i]);
  g.tau = central(probe.tau);
  return g;
}

GradCheckReport run_grad_check(const GradCheckOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto randn = [&](Eigen::Index r, Eigen::Index c) {
    MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
  };
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  GradCheckReport report;
  for (int trial = 0; trial < options.trials; ++trial) {
    GradCheckTrial t;
    t.frame_dim = pick(1, options.max_frame_dim);
    t.text_dim = pick(1, options.max_text_dim);
    t.shared_dim = pick(std::min(2, options.max_shared_dim), options.max_shared_dim);
    t.k = pick(1, options.max_k);
    t.options.tau_sigmoid = (trial % 2) == 1;
    t.options.subtract_text = (trial % 4) >= 2;

    AdapterState state;
    MatrixXd pos, neg;
    VectorXd text;
    std::vector<PositivePair> pairs;
    // Draw until every vector entering a cosine is comfortably away from the
    // origin; near-zero norms make finite differences meaningless.
    for (;;) {
      state = AdapterState::from_projections(randn(t.frame_dim, t.shared_dim),
                                             randn(t.text_dim, t.shared_dim));
      state.tau = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
      pos = randn(t.k, t.frame_dim);
      neg = randn(t.k, t.frame_dim);
      text = randn(t.text_dim, 1);
      pairs.clear();
      if (t.k >= 2) {
        const int i = pick(0, t.k - 1);
        int j = pick(0, t.k - 2);
        if (j >= i) ++j;
        pairs.push_back({i, j, 1.0});
      }
      const VectorXd q = state.w_l.transpose() * text;
      bool ok = q.norm() > 0.3;
      for (const MatrixXd* frames : {&pos, &neg}) {
        for (Eigen::Index r = 0; ok && r < frames->rows(); ++r) {
          VectorXd z = state.w_v.transpose() * frames->row(r).transpose();
          if (t.options.subtract_text) z -= q;
          ok = z.norm() > 0.3;
        }
      }
      if (ok) {
        try {
          evaluate_loss(state, pos, neg, text, pairs, t.options);
        } catch (const NumericError&) {
          ok = false;
        }
      }
      if (ok) break;
    }

    const LossAndGrad analytic = loss_and_grad(state, pos, neg, text, pairs, t.options);
    const AdapterGrads numeric =
        numeric_gradient(state, pos, neg, text, pairs, t.options, options.step);
    double worst = relative_error(analytic.grads.tau, numeric.tau, options.abs_floor);
    for (Eigen::Index i = 0; i < numeric.w_v.size(); ++i) {
      worst = std::max(worst, relative_error(analytic.grads.w_v.data()[i], numeric.w_v.data()[i],
                                             options.abs_floor));
    }
    for (Eigen::Index i = 0; i < numeric.w_l.size(); ++i) {
      worst = std::max(worst, relative_error(analytic.grads.w_l.data()[i], numeric.w_l.data()[i],
                                             options.abs_floor));
    }
    t.max_rel_error = worst;
    t.passed = worst <= options.tolerance;
    report.num_passed += t.passed ? 1 : 0;
    report.worst_rel_error = std::max(report.worst_rel_error, worst);
    report.trials.push_back(t);
  }
  return report;
}

}  // namespace tzal
