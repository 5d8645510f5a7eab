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
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "tzal/error.hpp"

namespace tzal {
namespace {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major, Mat[r][c]

// ---------------------------------------------------------------------------
// Plain-loop reference for the adapter loss. Shares nothing with the library
// beyond the input layout.

Vec oracle_project(const Vec& x, const Mat& w) {
  Vec out(w[0].size(), 0.0);
  for (std::size_t c = 0; c < out.size(); ++c) {
    for (std::size_t r = 0; r < x.size(); ++r) out[c] += x[r] * w[r][c];
  }
  return out;
}

double oracle_cos(const Vec& a, const Vec& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

struct OracleProblem {
  Mat w_v, w_l;
  double tau = 1.0;
  Mat pos, neg;
  Vec text;
  int pair_i = 0, pair_j = 1;
  bool sigmoid = false, subtract = false;

  double loss() const {
    const Vec q = oracle_project(text, w_l);
    auto embed = [&](const Vec& x) {
      Vec z = oracle_project(x, w_v);
      if (subtract) {
        for (std::size_t i = 0; i < z.size(); ++i) z[i] -= q[i];
      }
      return z;
    };
    auto score = [&](const Vec& x) {
      const double c = oracle_cos(embed(x), q);
      return sigmoid ? 1.0 / (1.0 + std::exp(-tau * c)) : tau * c;
    };
    Vec s, b;
    for (const auto& x : pos) { s.push_back(score(x)); b.push_back(1.0); }
    for (const auto& x : neg) { s.push_back(score(x)); b.push_back(0.0); }
    double l = 2.0 - 2.0 * oracle_cos(s, b);
    if (pos.size() > 1) l += 2.0 - 2.0 * oracle_cos(embed(pos[pair_i]), embed(pos[pair_j]));
    return l;
  }
};

MatrixXd to_eigen(const Mat& m) {
  MatrixXd out(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(m[0].size()));
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[r].size(); ++c) out(r, c) = m[r][c];
  return out;
}

VectorXd to_eigen(const Vec& v) { return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())); }

Mat random_mat(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> g;
  Mat m(rows, Vec(cols));
  for (auto& row : m) for (double& x : row) x = g(rng);
  return m;
}

// ---------------------------------------------------------------------------

TEST(Projection, IdentityAndScaled) {
  AdapterState s = AdapterState::identity(2);
  EXPECT_EQ(project_frame(s, VectorXd::LinSpaced(2, 1, 2)), VectorXd::LinSpaced(2, 1, 2));
  s.w_v *= 2.0;
  VectorXd x(2);
  x << 1, 0;
  VectorXd expect(2);
  expect << 2, 0;
  EXPECT_EQ(project_frame(s, x), expect);
}

TEST(Projection, MatchesLoopProduct) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat w = random_mat(rng, 5, 3);
    const Mat x = random_mat(rng, 1, 5);
    AdapterState s = AdapterState::from_projections(to_eigen(w), to_eigen(random_mat(rng, 4, 3)));
    const Vec ref = oracle_project(x[0], w);
    const VectorXd got = project_frame(s, to_eigen(x[0]));
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(got(c), ref[c], 1e-12);
  }
}

TEST(Projection, DimensionMismatchThrows) {
  const AdapterState s = AdapterState::identity(3);
  EXPECT_ANY_THROW(project_frame(s, VectorXd::Ones(2)));
}

TEST(Cosine, UnitCases) {
  VectorXd a(2), b(2);
  a << 3, 4;
  EXPECT_EQ(cosine(a, a), 1.0);
  a << 1, 0;
  b << 0, 1;
  EXPECT_EQ(cosine(a, b), 0.0);
  b << -1, 0;
  EXPECT_EQ(cosine(a, b), -1.0);
  EXPECT_THROW(cosine(a, VectorXd::Zero(2)), NumericError);
}

TEST(Losses, RepresentationUnitValues) {
  VectorXd a(2), b(2);
  a << 1, 0;
  b << 0, 1;
  EXPECT_NEAR(loss_repr(a, a), 0.0, 1e-12);
  EXPECT_NEAR(loss_repr(a, b), 2.0, 1e-12);
  EXPECT_NEAR(loss_repr(a, -a), 4.0, 1e-12);
}

TEST(Losses, SeparationUnitValues) {
  for (int k = 1; k <= 5; ++k) {
    EXPECT_NEAR(loss_sep(VectorXd::Ones(k), VectorXd::Zero(k)), 0.0, 1e-12);
    EXPECT_NEAR(loss_sep(VectorXd::Zero(k), VectorXd::Ones(k)), 2.0, 1e-12);
  }
  EXPECT_NEAR(loss_sep(VectorXd::Ones(2), VectorXd::Ones(2)), 2.0 - std::sqrt(2.0), 1e-12);
  EXPECT_THROW(loss_sep(VectorXd::Zero(2), VectorXd::Zero(2)), NumericError);
}

TEST(Losses, ScaleInvariance) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    VectorXd a(4), b(4), p(3), n(3);
    for (auto* v : {&a, &b}) for (int i = 0; i < 4; ++i) (*v)(i) = g(rng);
    for (auto* v : {&p, &n}) for (int i = 0; i < 3; ++i) (*v)(i) = g(rng);
    const double c = std::exp(g(rng));
    EXPECT_NEAR(loss_repr(c * a, b), loss_repr(a, b), 1e-12);
    EXPECT_NEAR(loss_sep(c * p, c * n), loss_sep(p, n), 1e-12);
  }
}

TEST(LossAndGrad, GlobalMinimumHasZeroGradient) {
  // Positives equal the text and negatives are orthogonal to it.
  const int d = 3, k = 2;
  const AdapterState s = AdapterState::identity(d);
  VectorXd text = VectorXd::Unit(d, 0);
  MatrixXd pos(k, d), neg(k, d);
  pos << 1, 0, 0, 1, 0, 0;
  neg << 0, 1, 0, 0, 0, 1;
  const auto r = loss_and_grad(s, pos, neg, text, PositivePair{0, 1, 1.0});
  EXPECT_NEAR(r.loss.total, 0.0, 1e-12);
  EXPECT_NEAR(r.loss.l_z, 0.0, 1e-12);
  EXPECT_NEAR(r.grads.w_v.cwiseAbs().maxCoeff(), 0.0, 1e-12);
  EXPECT_NEAR(r.grads.w_l.cwiseAbs().maxCoeff(), 0.0, 1e-12);
  EXPECT_EQ(r.grads.tau, 0.0);
}

TEST(LossAndGrad, BreakdownDecomposes) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const int dv = 4, dl = 3, d = 3, k = 3;
    AdapterState s = AdapterState::from_projections(to_eigen(random_mat(rng, dv, d)),
                                                    to_eigen(random_mat(rng, dl, d)));
    const MatrixXd pos = to_eigen(random_mat(rng, k, dv));
    const MatrixXd neg = to_eigen(random_mat(rng, k, dv));
    const VectorXd t = to_eigen(random_mat(rng, 1, dl)[0]);
    const auto r = loss_and_grad(s, pos, neg, t, PositivePair{0, 2, 1.0});
    const VectorXd q = project_text(s, t);
    VectorXd sp(k), sn(k);
    for (int i = 0; i < k; ++i) {
      sp(i) = cosine(project_frame(s, pos.row(i).transpose()), q);
      sn(i) = cosine(project_frame(s, neg.row(i).transpose()), q);
    }
    EXPECT_NEAR(r.loss.l_s, loss_sep(sp, sn), 1e-12);
    EXPECT_NEAR(r.loss.l_z, loss_repr(project_frame(s, pos.row(0).transpose()),
                                      project_frame(s, pos.row(2).transpose())), 1e-12);
    EXPECT_NEAR(r.loss.total, r.loss.l_z + r.loss.l_s, 1e-15);
    EXPECT_GE(r.loss.l_z, 0.0);
    EXPECT_LE(r.loss.l_z, 4.0);
    EXPECT_GE(r.loss.l_s, 0.0);
    EXPECT_LE(r.loss.l_s, 4.0);
    EXPECT_EQ(r.grads.tau, 0.0);
  }
}

// Analytic gradients against central differences of the plain-loop oracle.
TEST(LossAndGrad, MatchesIndependentFiniteDifferences) {
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<int> dim(1, 8), kk(2, 4);
  const double h = 1e-5;
  int checked = 0;
  while (checked < 100) {
    OracleProblem p;
    const int dv = dim(rng), dl = dim(rng), d = dim(rng), k = kk(rng);
    p.w_v = random_mat(rng, dv, d);
    p.w_l = random_mat(rng, dl, d);
    p.tau = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
    p.pos = random_mat(rng, k, dv);
    p.neg = random_mat(rng, k, dv);
    p.text = random_mat(rng, 1, dl)[0];
    p.pair_i = 0;
    p.pair_j = k - 1;
    p.sigmoid = checked % 2 == 1;
    p.subtract = checked % 4 >= 2;

    AdapterState s = AdapterState::from_projections(to_eigen(p.w_v), to_eigen(p.w_l));
    s.tau = p.tau;
    const ScoreOptions opts{p.sigmoid, p.subtract};
    LossAndGrad r;
    try {
      r = loss_and_grad(s, to_eigen(p.pos), to_eigen(p.neg), to_eigen(p.text),
                        PositivePair{p.pair_i, p.pair_j, 1.0}, opts);
    } catch (const NumericError&) {
      continue;
    }
    // Skip instances whose projected vectors sit too close to the origin for
    // finite differences to mean anything.
    const Vec q = oracle_project(p.text, p.w_l);
    bool well_conditioned = std::sqrt(std::inner_product(q.begin(), q.end(), q.begin(), 0.0)) > 0.3;
    for (const Mat* m : {&p.pos, &p.neg}) {
      for (const Vec& x : *m) {
        Vec z = oracle_project(x, p.w_v);
        if (p.subtract) for (std::size_t i = 0; i < z.size(); ++i) z[i] -= q[i];
        well_conditioned &= std::sqrt(std::inner_product(z.begin(), z.end(), z.begin(), 0.0)) > 0.3;
      }
    }
    if (!well_conditioned) continue;

    EXPECT_NEAR(r.loss.total, p.loss(), 1e-10);
    auto check = [&](double analytic, double& param) {
      const double keep = param;
      param = keep + h;
      const double up = p.loss();
      param = keep - h;
      const double down = p.loss();
      param = keep;
      const double numeric = (up - down) / (2 * h);
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-5});
      EXPECT_LE(rel, 1e-4) << "analytic " << analytic << " numeric " << numeric;
    };
    for (int r_ = 0; r_ < dv; ++r_)
      for (int c = 0; c < d; ++c) check(r.grads.w_v(r_, c), p.w_v[r_][c]);
    for (int r_ = 0; r_ < dl; ++r_)
      for (int c = 0; c < d; ++c) check(r.grads.w_l(r_, c), p.w_l[r_][c]);
    check(r.grads.tau, p.tau);
    ++checked;
  }
}

TEST(LossAndGrad, TauGradientIsLiveOnlyUnderSigmoid) {
  std::mt19937_64 rng(77);
  AdapterState s = AdapterState::from_projections(to_eigen(random_mat(rng, 3, 3)),
                                                  to_eigen(random_mat(rng, 3, 3)));
  const MatrixXd pos = to_eigen(random_mat(rng, 2, 3)), neg = to_eigen(random_mat(rng, 2, 3));
  const VectorXd t = to_eigen(random_mat(rng, 1, 3)[0]);
  EXPECT_EQ(loss_and_grad(s, pos, neg, t, PositivePair{}, {false, false}).grads.tau, 0.0);
  EXPECT_NE(loss_and_grad(s, pos, neg, t, PositivePair{}, {true, false}).grads.tau, 0.0);
}

TEST(LossAndGrad, PairWeightScalesRepresentationTerm) {
  std::mt19937_64 rng(8);
  const AdapterState s = AdapterState::from_projections(to_eigen(random_mat(rng, 3, 2)),
                                                        to_eigen(random_mat(rng, 3, 2)));
  const MatrixXd pos = to_eigen(random_mat(rng, 3, 3)), neg = to_eigen(random_mat(rng, 3, 3));
  const VectorXd t = to_eigen(random_mat(rng, 1, 3)[0]);
  const auto one = loss_and_grad(s, pos, neg, t, PositivePair{0, 1, 1.0});
  const auto half = loss_and_grad(s, pos, neg, t, PositivePair{0, 1, 0.5});
  EXPECT_NEAR(half.loss.l_z, 0.5 * one.loss.l_z, 1e-14);
  EXPECT_NEAR(half.loss.l_s, one.loss.l_s, 1e-14);
  const std::vector<PositivePair> none;
  EXPECT_EQ(loss_and_grad(s, pos, neg, t, none).loss.l_z, 0.0);
}

TEST(LossAndGrad, ZeroNormProjectionThrows) {
  AdapterState s = AdapterState::identity(2);
  MatrixXd pos(2, 2), neg(2, 2);
  pos << 1, 0, 0, 0;
  neg << 0, 1, 0, 1;
  EXPECT_THROW(loss_and_grad(s, pos, neg, VectorXd::Unit(2, 0), PositivePair{}), NumericError);
}

TEST(GradCheck, LibraryCheckerPasses) {
  GradCheckOptions o;
  o.trials = 100;
  const GradCheckReport r = run_grad_check(o);
  EXPECT_EQ(r.trials.size(), 100u);
  EXPECT_TRUE(r.all_passed()) << r.num_passed << "/100, worst " << r.worst_rel_error;
  EXPECT_LE(r.worst_rel_error, 1e-4);
}

TEST(RelativeError, FloorAppliesNearZero) {
  EXPECT_NEAR(relative_error(1.0, 1.1, 1e-5), 0.1 / 1.1, 1e-15);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-10, 1e-5), 1e-5);
}

// ---------------------------------------------------------------------------
// Adam

TEST(Adam, ZeroGradientKeepsParameters) {
  AdapterState s = AdapterState::identity(3);
  s.tau = 1.5;
  const AdapterState next = adam_step(s, AdapterGrads::zeros_like(s), AdamOptions{});
  EXPECT_EQ(next.w_v, s.w_v);
  EXPECT_EQ(next.w_l, s.w_l);
  EXPECT_EQ(next.tau, s.tau);
  EXPECT_EQ(next.step_count, s.step_count + 1);
}

TEST(Adam, FirstStepClosedForm) {
  AdapterState s = AdapterState::identity(2);
  AdapterGrads g = AdapterGrads::zeros_like(s);
  g.w_v << 0.3, -2.0, 1e-3, 0.0;
  g.tau = -0.7;
  const AdamOptions o{0.01, 0.9, 0.999, 1e-8};
  const AdapterState next = adam_step(s, g, o);
  for (int i = 0; i < 4; ++i) {
    const double gi = g.w_v.data()[i];
    EXPECT_NEAR(next.w_v.data()[i], s.w_v.data()[i] - o.lr * gi / (std::abs(gi) + o.eps), 1e-15);
  }
  EXPECT_NEAR(next.tau, 1.0 + o.lr * 0.7 / (0.7 + o.eps), 1e-15);
}

TEST(Adam, IsBitDeterministic) {
  std::mt19937_64 rng(4);
  AdapterState s = AdapterState::from_projections(to_eigen(random_mat(rng, 3, 2)),
                                                  to_eigen(random_mat(rng, 3, 2)));
  AdapterGrads g = AdapterGrads::zeros_like(s);
  g.w_v = to_eigen(random_mat(rng, 3, 2));
  g.w_l = to_eigen(random_mat(rng, 3, 2));
  const AdapterState a = adam_step(s, g, {});
  const AdapterState b = adam_step(s, g, {});
  EXPECT_TRUE(bitwise_equal(a, b));
}

TEST(Adam, RejectsNonFiniteGradient) {
  AdapterState s = AdapterState::identity(2);
  AdapterGrads g = AdapterGrads::zeros_like(s);
  g.w_l(1, 1) = std::nan("");
  EXPECT_THROW(adam_step(s, g, {}), NumericError);
}

// Scalar reference Adam on f(w) = w^2 per coordinate.
std::vector<double> scalar_adam_trajectory(double w, double lr, int steps) {
  double m = 0, v = 0;
  std::vector<double> out;
  for (int t = 1; t <= steps; ++t) {
    const double g = 2 * w;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    w -= lr * mh / (std::sqrt(vh) + 1e-8);
    out.push_back(w);
  }
  return out;
}

TEST(Adam, QuadraticTrajectoryMatchesScalarReference) {
  AdapterState s = AdapterState::identity(1);
  s.w_v(0, 0) = 1.0;
  s.w_l(0, 0) = 1.0;
  const AdamOptions o{0.1, 0.9, 0.999, 1e-8};
  const auto ref = scalar_adam_trajectory(1.0, 0.1, 20);
  double prev_norm = std::sqrt(2.0);
  for (int t = 1; t <= 20; ++t) {
    AdapterGrads g = AdapterGrads::zeros_like(s);
    g.w_v = 2.0 * s.w_v;
    g.w_l = 2.0 * s.w_l;
    s = adam_step(s, g, o);
    EXPECT_NEAR(s.w_v(0, 0), ref[t - 1], 1e-15) << "step " << t;
    EXPECT_EQ(s.w_v(0, 0), s.w_l(0, 0));
    const double norm = std::hypot(s.w_v(0, 0), s.w_l(0, 0));
    // Adam at lr = 0.1 overshoots the minimum on step 12; up to there the
    // norm shrinks every step.
    if (t <= 11) {
      EXPECT_LT(norm, prev_norm) << "step " << t;
    }
    prev_norm = norm;
  }
  EXPECT_NEAR(ref[10], 0.005131501948057199, 1e-15);
  EXPECT_NEAR(ref[11], -0.05893789063004727, 1e-15);
  EXPECT_NEAR(ref[19], -0.2711540954901283, 1e-15);
}

// ---------------------------------------------------------------------------
// softmax

TEST(Softmax, UniformLogits) {
  for (double scale : {0.1, 1.0, 100.0}) {
    const VectorXd p = softmax(VectorXd::Constant(4, 0.3), scale);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(p(i), 0.25, 1e-15);
  }
}

TEST(Softmax, LargeScaleApproachesOneHot) {
  VectorXd x(2);
  x << 1, 0;
  const VectorXd p = softmax(x, 1e6);
  EXPECT_NEAR(p(0), 1.0, 1e-15);
  EXPECT_NEAR(p(1), 0.0, 1e-15);
}

TEST(Softmax, ScaledCosines) {
  VectorXd x(3);
  x << 0.9, 0.1, 0.0;
  const VectorXd p = softmax(x, 100.0);
  Eigen::Index arg = 0;
  p.maxCoeff(&arg);
  EXPECT_EQ(arg, 0);
  EXPECT_GT(p(0), 0.99);
  // exp(80) dwarfs the rest: p0 = 1 / (1 + e^-80 + e^-90)
  EXPECT_NEAR(p(0), 1.0 / (1.0 + std::exp(-80.0) + std::exp(-90.0)), 1e-15);
}

TEST(Softmax, SumsToOneAndIsEquivariant) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 8);
    VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = g(rng);
    const double scale = std::exp(g(rng) / 3.0);
    const VectorXd p = softmax(x, scale);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    VectorXd xp(n);
    for (int i = 0; i < n; ++i) xp(i) = x(perm[i]);
    const VectorXd pp = softmax(xp, scale);
    const VectorXd shifted = softmax((x.array() + g(rng)).matrix(), scale);
    for (int i = 0; i < n; ++i) {
      EXPECT_NEAR(pp(i), p(perm[i]), 1e-12);
      EXPECT_NEAR(shifted(i), p(i), 1e-12);
    }
  }
}

TEST(Softmax, RejectsNonFinite) {
  VectorXd x(2);
  x << 1, std::numeric_limits<double>::infinity();
  EXPECT_THROW(softmax(x, 1.0), NumericError);
}

}  // namespace
}  // namespace tzal
