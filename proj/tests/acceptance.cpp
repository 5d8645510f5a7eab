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

// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "ap_reference.hpp"
#include "test_util.hpp"
#include "tzal/cli.hpp"
#include "tzal/numcore.hpp"
#include "tzal/synth.hpp"
#include "tzal/t3al.hpp"
#include "tzal/taleval.hpp"

namespace {

using namespace tzal;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// mAP (percent) pinned from the first verified run on the default synthetic
// suite; averages are over [0.3:0.1:0.7].
constexpr double kPinnedFull = 65.934149184149177;
constexpr double kPinnedFullAt05 = 65.934149184149177;
constexpr double kPinnedT0 = 65.934149184149177;
constexpr double kPinnedNaive = 6.9703446932576503;
constexpr double kPinnedOracleSelection = 65.934149184149177;
constexpr double kPinnedTolerance = 1e-6;

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s  %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void note(const std::string& line) {
  std::printf("      %s\n", line.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

LabelBank basis_bank(int c, int d) {
  LabelBank b;
  b.texts = Eigen::MatrixXd::Zero(c, d);
  for (int i = 0; i < c; ++i) {
    b.names.push_back("c" + std::to_string(i));
    b.texts(i, i) = 1.0;
  }
  return b;
}

FeatureTrack track_from(const Eigen::MatrixXd& frames) {
  FeatureTrack t;
  t.video_id = "v";
  t.frames = frames.cast<float>();
  return t;
}

void gradient_correctness() {
  GradCheckOptions opts;
  opts.trials = 100;
  const auto t0 = Clock::now();
  const GradCheckReport r = run_grad_check(opts);
  const double secs = seconds_since(t0);
  report("gradient correctness", r.all_passed() && secs < 5.0,
         std::to_string(r.num_passed) + "/100 within 1e-4, worst relative error " +
             fmt("%.3g", r.worst_rel_error) + ", " + fmt("%.2f", secs) + " s (limit 5 s)");
}

void loss_unit_values() {
  Eigen::VectorXd e0(3), e1(3);
  e0 << 1, 0, 0;
  e1 << 0, 1, 0;
  const int k = 4;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k), zeros = Eigen::VectorXd::Zero(k);
  const double values[] = {loss_repr(e0, 2.5 * e0), loss_repr(e0, e1), loss_repr(e0, -e0),
                           loss_sep(ones, zeros), loss_sep(ones, ones)};
  const double expected[] = {0.0, 2.0, 4.0, 0.0, 2.0 - std::sqrt(2.0)};
  double worst = 0.0;
  for (int i = 0; i < 5; ++i) worst = std::max(worst, std::abs(values[i] - expected[i]));
  report("loss unit values", worst <= 1e-12, "max deviation " + fmt("%.3g", worst) + " (limit 1e-12)");
}

void map_oracle() {
  std::mt19937_64 rng(2026);
  int instances = 0, mismatches = 0;
  double worst = 0.0;
  for (int n = 0; n < 2000; ++n) {
    const testing::Instance inst = testing::lattice_instance(rng);
    for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      const double ap = average_precision(inst.preds, inst.gts, t).value_or(-1.0);
      const double d = std::abs(ap - testing::ref_ap(inst.preds, inst.gts, t));
      worst = std::max(worst, d);
      if (d > 1e-9) ++mismatches;
      ++instances;
    }
  }
  const bool units = tiou({0, 2}, {0, 2}) == 1.0 && tiou({0, 2}, {3, 5}) == 0.0 &&
                     tiou({0, 2}, {1, 3}) == 1.0 / 3.0;
  report("mAP oracle equivalence", mismatches == 0 && instances >= 1000 && units,
         std::to_string(instances) + " instances, " + std::to_string(mismatches) +
             " mismatches, worst " + fmt("%.3g", worst) + " (limit 1e-9); tiou units " +
             (units ? "exact" : "WRONG"));
}

void suppression_fixture() {
  const LabelBank bank = basis_bank(2, 2);
  FeatureTrack t = track_from(Eigen::MatrixXd::Ones(3, 2));
  Eigen::MatrixXd cap(3, 2);
  cap << 1, 0, 1, 0, 0, 1;
  t.captions = cap.cast<float>();
  std::vector<Proposal> props(3);
  for (int i = 0; i < 3; ++i) {
    props[i].first_frame = props[i].last_frame = i;
    props[i].start_s = i;
    props[i].end_s = i + 1;
  }
  const SuppressResult r = suppress(props, t, bank, initial_state(bank, 2), 0.5, 0.75);
  const bool ok = r.kept.size() == 2 && r.kept[0] == props[0] && r.kept[1] == props[1];
  report("suppression fixture", ok,
         "kept " + std::to_string(r.kept.size()) + " of 3, support [" + fmt("%.4f", r.support.at(0)) +
             ", " + fmt("%.4f", r.support.at(1)) + ", " + fmt("%.4f", r.support.at(2)) + "]");
}

struct SuiteRun {
  PredictionSet preds;
  double avg_map = 0.0;  // percent
  double map_at_05 = 0.0;
  double seconds = 0.0;
};

SuiteRun run_suite(const Manifest& m, const RunConfig& config, int threads) {
  SuiteRun out;
  const auto t0 = Clock::now();
  out.preds = run_manifest(m, config, threads);
  out.seconds = seconds_since(t0);
  const EvalReport r = evaluate(out.preds, *m.annotations, IoUGrid::thumos());
  out.avg_map = 100.0 * r.average;
  out.map_at_05 = 100.0 * r.map[2];
  return out;
}

bool pinned(double value, double pin) { return std::abs(value - pin) <= kPinnedTolerance; }

void synthetic_suite(const Manifest& m) {
  RunConfig full;
  RunConfig t0 = full;
  t0.max_steps = 0;
  RunConfig oracle = full;
  oracle.oracle_selection = true;

  const SuiteRun a = run_suite(m, full, 1);
  const SuiteRun b = run_suite(m, t0, 1);
  const auto tn = Clock::now();
  const PredictionSet naive = run_naive_baseline(m, 0.8, 100.0, 1);
  const double naive_secs = seconds_since(tn);
  const double naive_map = 100.0 * evaluate(naive, *m.annotations, IoUGrid::thumos()).average;
  const SuiteRun c = run_suite(m, oracle, 1);

  note(fmt("full pipeline        avg mAP %.17g", a.avg_map) + fmt("  mAP@0.5 %.4f", a.map_at_05) +
       fmt("  (%.2f s)", a.seconds));
  note(fmt("T=0 baseline         avg mAP %.17g", b.avg_map) + fmt("  mAP@0.5 %.4f", b.map_at_05) +
       fmt("  (%.2f s)", b.seconds));
  note(fmt("naive 0.8 baseline   avg mAP %.17g", naive_map) + fmt("  (%.2f s)", naive_secs));
  note(fmt("oracle selection     avg mAP %.17g", c.avg_map) + fmt("  (%.2f s)", c.seconds));

  const bool gain = a.avg_map >= b.avg_map + 2.0;
  const bool over_naive = b.avg_map > naive_map;
  const bool pins = pinned(a.avg_map, kPinnedFull) && pinned(a.map_at_05, kPinnedFullAt05) &&
                    pinned(b.avg_map, kPinnedT0) &&
                    pinned(naive_map, kPinnedNaive);
  const bool fast = a.seconds < 120.0;
  report("synthetic end-to-end", gain && over_naive && pins && fast,
         fmt("full - T=0 = %+.2f (need >= +2.00)", a.avg_map - b.avg_map) +
             fmt("; T=0 - naive = %+.2f (need > 0)", b.avg_map - naive_map) +
             "; pinned values " + (pins ? "match" : "DIFFER") + fmt("; %.2f s single-threaded (limit 120 s)", a.seconds));

  report("oracle ordering",
         c.avg_map >= a.avg_map && pinned(c.avg_map, kPinnedOracleSelection),
         fmt("oracle selection %.2f", c.avg_map) + fmt(" vs non-oracle %.2f", a.avg_map));
}

std::string dump(const PredictionSet& p) {
  std::ostringstream s;
  s << predictions_to_json(p).dump(2);
  return s.str();
}

void reset_and_determinism(const Manifest& m, const SynthDataset& data) {
  RunConfig config;
  config.max_steps = 10;
  config.lr = 1e-3;
  const std::string one = dump(run_manifest(m, config, 1));
  const std::string again = dump(run_manifest(m, config, 1));
  const std::string many = dump(run_manifest(m, config, 8));

  Manifest reversed = m;
  std::reverse(reversed.videos.begin(), reversed.videos.end());
  const PredictionSet fwd = run_manifest(m, config, 1);
  const PredictionSet rev = run_manifest(reversed, config, 3);
  std::map<std::string, std::string> by_id;
  for (const auto& v : fwd.videos) by_id[v.id] = predictions_to_json({{v}, {}}).dump();
  bool permutation_ok = rev.videos.size() == fwd.videos.size();
  for (const auto& v : rev.videos) {
    permutation_ok = permutation_ok && by_id.count(v.id) &&
                     by_id[v.id] == predictions_to_json({{v}, {}}).dump();
  }

  // Patience contract on every synthetic video at a learning rate that lets
  // the loss plateau inside the step budget.
  LabelBank bank;
  bank.names = data.labels;
  bank.texts = data.texts;
  RunConfig adapt_config;
  adapt_config.lr = 1e-3;
  int stopped = 0, violations = 0;
  for (const auto& v : data.videos) {
    const AdapterState init = initial_state(bank, v.track.dim());
    std::mt19937_64 rng(adapt_config.seed ^ video_seed_hash(v.track.video_id));
    const AdaptResult r = adapt(v.track, bank, pseudo_label(v.track, bank, init), adapt_config, init, rng);
    const std::size_t expected = r.stopped_early ? static_cast<std::size_t>(r.best_step + adapt_config.patience)
                                                 : static_cast<std::size_t>(adapt_config.max_steps);
    if (r.trace.size() != expected) ++violations;
    if (r.stopped_early) ++stopped;
  }

  const bool ok = one == again && one == many && permutation_ok && violations == 0 && stopped > 0;
  report("reset/determinism", ok,
         std::string("same seed ") + (one == again ? "identical" : "DIFFERENT") + "; threads 1 vs 8 " +
             (one == many ? "identical" : "DIFFERENT") + "; reversed order " +
             (permutation_ok ? "identical per video" : "DIFFERENT") + "; early stop at best+5 in " +
             std::to_string(stopped) + " videos, " + std::to_string(violations) + " violations");
}

void degenerate_inputs() {
  const LabelBank bank = basis_bank(3, 3);
  std::string detail;
  bool ok = true;

  Eigen::MatrixXd constant(30, 3);
  constant.rowwise() = Eigen::RowVector3d(0.3, 0.9, 0.1);
  const VideoResult c = localize_video(track_from(constant), bank, RunConfig{}, initial_state(bank, 3));
  ok = ok && c.proposals.empty();
  detail += "constant video " + std::to_string(c.proposals.size()) + " proposals";

  try {
    const VideoResult s = localize_video(track_from(bank.texts.row(2)), bank, RunConfig{}, initial_state(bank, 3));
    detail += "; single frame ok (" + std::to_string(s.proposals.size()) + " proposals)";
  } catch (const std::exception& e) {
    ok = false;
    detail += std::string("; single frame threw: ") + e.what();
  }

  Eigen::MatrixXd small(6, 3);
  for (int i = 0; i < 6; ++i) small.row(i) << 1.0, 0.2 * i, 0.1;
  RunConfig k4;
  k4.max_steps = 2;
  const FeatureTrack t6 = track_from(small);
  std::mt19937_64 rng(0);
  const AdaptResult r = adapt(t6, bank, pseudo_label(t6, bank, initial_state(bank, 3)), k4,
                              initial_state(bank, 3), rng);
  const bool warned = !r.warnings.empty() && r.warnings[0].find("K clamped from 4 to 3") != std::string::npos;
  ok = ok && warned;
  detail += std::string("; N=6 with K=4 ") + (warned ? "warned: " + r.warnings[0] : "gave no warning");
  report("degenerate inputs", ok, detail);
}

}  // namespace

int main() {
  gradient_correctness();
  loss_unit_values();
  map_oracle();
  suppression_fixture();

  testing::TempDir tmp;
  const SynthSpec spec;
  const fs::path manifest_path = generate(spec, tmp.path());
  const Manifest manifest = read_manifest(manifest_path);
  synthetic_suite(manifest);
  reset_and_determinism(manifest, generate_dataset(spec));
  degenerate_inputs();

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
