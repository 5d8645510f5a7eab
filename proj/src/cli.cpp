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

#include "tzal/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "tzal/error.hpp"
#include "tzal/numcore.hpp"
#include "tzal/synth.hpp"
#include "tzal/taleval.hpp"

namespace tzal {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> log = [] {
    auto l = spdlog::stderr_color_mt("tzal");
    l->set_pattern("[%l] %v");
    spdlog::level::level_enum level = spdlog::level::info;
    if (const char* env = std::getenv("TZAL_LOG")) {
      const std::string v = env;
      if (v == "error") level = spdlog::level::err;
      else if (v == "debug") level = spdlog::level::debug;
    }
    l->set_level(level);
    return l;
  }();
  return log;
}

// Runs `work(i)` for every i in [0, n) on up to `threads` workers and
// rethrows the first failure in index order.
template <typename Result, typename Fn>
std::vector<Result> parallel_map(std::size_t n, int threads, Fn work) {
  std::vector<std::optional<Result>> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        results[i] = work(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int count = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < count; ++t) pool.emplace_back(worker);
    worker();
  }
  std::vector<Result> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*results[i]));
  }
  return out;
}

FeatureTrack load_track(const VideoRef& ref) {
  FeatureTrack t = read_feature_file(ref.feature_file);
  t.video_id = ref.id;
  return t;
}

template <typename Error>
Error retag(const std::string& video, const Error& e) {
  return Error(video + ": " + e.what());
}

// Re-throws with the video id prefixed, keeping the error class.
[[noreturn]] void rethrow_tagged(const std::string& video) {
  try {
    throw;
  } catch (const UsageError& e) {
    throw retag(video, e);
  } catch (const DataError& e) {
    throw retag(video, e);
  } catch (const NumericError& e) {
    throw retag(video, e);
  }
}

}  // namespace

PredictionSet run_manifest(const Manifest& manifest, const RunConfig& config, int threads,
                           std::ostream* progress) {
  config.validate();
  if (config.any_oracle() && !manifest.annotations) {
    throw UsageError("oracle flags require annotations in the manifest");
  }
  const std::size_t n = manifest.videos.size();
  std::mutex io;
  std::atomic<std::size_t> done{0};
  auto videos = parallel_map<VideoPredictions>(n, threads, [&](std::size_t i) {
    const VideoRef& ref = manifest.videos[i];
    VideoResult r;
    try {
      const FeatureTrack track = load_track(ref);
      const AdapterState initial = initial_state(manifest.bank, track.dim());
      if (config.any_oracle()) {
        const auto it = manifest.annotations->find(ref.id);
        if (it == manifest.annotations->end()) {
          throw DataError("oracle mode needs annotations for this video");
        }
        r = localize_video_with_oracle(track, manifest.bank, config, initial, it->second);
      } else {
        r = localize_video(track, manifest.bank, config, initial);
      }
    } catch (const Error&) {
      rethrow_tagged(ref.id);
    }
    VideoPredictions vp{ref.id, {}};
    for (const auto& p : r.proposals) vp.proposals.push_back(to_prediction(p, manifest.bank));
    {
      std::lock_guard lock(io);
      for (const auto& w : r.warnings) logger()->warn("{}", w);
      const std::size_t k = ++done;
      if (progress) {
        *progress << "[" << k << "/" << n << "] " << ref.id << ": "
                  << manifest.bank.names[static_cast<std::size_t>(r.pseudo.label_index)] << ", "
                  << r.trace.size() << " steps, " << vp.proposals.size() << " proposals\n";
      }
      logger()->debug("{}: pseudo-label sim {:.4f}", ref.id, r.pseudo.similarity);
    }
    return vp;
  });
  PredictionSet out;
  out.videos = std::move(videos);
  out.config = config.to_json();
  return out;
}

PredictionSet run_naive_baseline(const Manifest& manifest, double threshold, double scale,
                                 int threads, std::ostream* progress) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw UsageError("--threshold must lie in [0, 1]");
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) throw UsageError("--scale must be positive");
  const std::size_t n = manifest.videos.size();
  std::mutex io;
  std::atomic<std::size_t> done{0};
  auto videos = parallel_map<VideoPredictions>(n, threads, [&](std::size_t i) {
    const VideoRef& ref = manifest.videos[i];
    std::vector<Proposal> props;
    try {
      const FeatureTrack track = load_track(ref);
      props = naive_baseline(track, manifest.bank, initial_state(manifest.bank, track.dim()),
                             threshold, scale);
    } catch (const Error&) {
      rethrow_tagged(ref.id);
    }
    VideoPredictions vp{ref.id, {}};
    for (const auto& p : props) vp.proposals.push_back(to_prediction(p, manifest.bank));
    if (progress) {
      std::lock_guard lock(io);
      *progress << "[" << ++done << "/" << n << "] " << ref.id << ": " << vp.proposals.size()
                << " proposals\n";
    }
    return vp;
  });
  PredictionSet out;
  out.videos = std::move(videos);
  out.config = {{"method", "naive"}, {"threshold", threshold}, {"scale", scale}};
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Test-time adaptive temporal action localization over precomputed embeddings",
               "tzal"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Localize actions in every manifest video");
  std::string manifest_path, out_path;
  int threads = 1;
  RunConfig flags;
  std::string jitter_flag;
  std::uint64_t seed = 0;
  run->add_option("--manifest", manifest_path, "Manifest JSON")->required();
  run->add_option("--out", out_path, "Prediction JSON to write")->required();
  auto* o_steps = run->add_option("--steps", flags.max_steps, "Maximum adaptation steps (T)");
  auto* o_k = run->add_option("--k", flags.k, "Positives/negatives per step (K)");
  auto* o_lr = run->add_option("--lr", flags.lr, "Adam learning rate");
  auto* o_alpha = run->add_option("--alpha", flags.alpha, "Suppression cutoff");
  auto* o_beta = run->add_option("--beta", flags.beta, "Caption similarity binarization threshold");
  auto* o_jitter = run->add_option("--jitter", jitter_flag, "Selection jitter in frames, or 'auto'");
  auto* o_window = run->add_option("--window", flags.smooth_window, "Moving-average window (odd)");
  auto* f_sub = run->add_flag("--subtract-pseudo-label", "Remove the pseudo-label text from frames");
  auto* f_sig = run->add_flag("--tau-sigmoid", "Score frames with logistic(tau * cos)");
  auto* f_oc = run->add_flag("--oracle-class", "Use the ground-truth video label");
  auto* f_on = run->add_flag("--oracle-count", "Keep the ground-truth number of regions");
  auto* f_os = run->add_flag("--oracle-selection", "Draw samples from inside/outside ground truth");
  f_oc->excludes(f_on)->excludes(f_os);
  f_on->excludes(f_os);
  auto* o_seed = run->add_option("--seed", seed, "Global RNG seed");
  run->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  // baseline
  auto* base = app.add_subcommand("baseline", "Naive frame-wise softmax baseline");
  std::string base_manifest, base_out;
  double threshold = 0.8, scale = 100.0;
  int base_threads = 1;
  base->add_option("--manifest", base_manifest, "Manifest JSON")->required();
  base->add_option("--out", base_out, "Prediction JSON to write")->required();
  base->add_option("--threshold", threshold, "Foreground probability threshold");
  base->add_option("--scale", scale, "Softmax scale applied to cosines");
  base->add_option("--threads", base_threads, "Worker threads")->check(CLI::PositiveNumber);

  // eval
  auto* eval = app.add_subcommand("eval", "Score predictions against annotations");
  std::string pred_path, gt_path, grid_spec = "thumos", report_path;
  eval->add_option("--pred", pred_path, "Prediction JSON")->required();
  eval->add_option("--gt", gt_path, "Annotation JSON")->required();
  eval->add_option("--grid", grid_spec, "thumos | anet | comma-separated thresholds");
  eval->add_option("--out", report_path, "Report JSON (default: <pred>.eval.json)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string spec_path, synth_out;
  synth->add_option("--spec", spec_path, "synth.json (defaults when omitted)");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // grad-check
  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of the loss gradients");
  int trials = 100;
  std::string dims = "8,8,8,4";
  std::uint64_t grad_seed = 0;
  grad->add_option("--trials", trials, "Random instances");
  grad->add_option("--dims", dims, "Max D_v,D_l,D,K");
  grad->add_option("--seed", grad_seed, "RNG seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : static_cast<int>(ErrorKind::kUsage);
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (*run) {
      const Manifest manifest = read_manifest(manifest_path);
      RunConfig config = RunConfig::from_json(manifest.config);
      if (*o_steps) config.max_steps = flags.max_steps;
      if (*o_k) config.k = flags.k;
      if (*o_lr) config.lr = flags.lr;
      if (*o_alpha) config.alpha = flags.alpha;
      if (*o_beta) config.beta = flags.beta;
      if (*o_jitter) {
        if (jitter_flag == "auto") {
          config.jitter = -1;
        } else {
          try {
            std::size_t used = 0;
            config.jitter = std::stoi(jitter_flag, &used);
            if (used != jitter_flag.size() || config.jitter < 0) throw std::invalid_argument("");
          } catch (const std::exception&) {
            throw UsageError("--jitter expects a non-negative integer or 'auto'");
          }
        }
      }
      if (*o_window) config.smooth_window = flags.smooth_window;
      if (*f_sub) config.subtract_pseudo_label = true;
      if (*f_sig) config.tau_sigmoid = true;
      if (*f_oc) config.oracle_class = true;
      if (*f_on) config.oracle_count = true;
      if (*f_os) config.oracle_selection = true;
      if (*o_seed) config.seed = seed;
      config.validate();
      if (config.any_oracle() && !manifest.annotations) {
        const char* flag = config.oracle_class ? "--oracle-class"
                           : config.oracle_count ? "--oracle-count"
                                                 : "--oracle-selection";
        throw UsageError(std::string(flag) + " requires annotations in the manifest");
      }
      PredictionSet preds = run_manifest(manifest, config, threads, &out);
      write_predictions(preds, out_path);
    } else if (*base) {
      out << "naive baseline: threshold=" << threshold << " scale=" << scale << "\n";
      const Manifest manifest = read_manifest(base_manifest);
      write_predictions(run_naive_baseline(manifest, threshold, scale, base_threads, &out), base_out);
    } else if (*eval) {
      const IoUGrid grid = IoUGrid::parse(grid_spec);
      const PredictionSet preds = read_predictions(pred_path);
      const AnnotationSet gts = read_annotations(gt_path);
      const EvalReport report = evaluate(preds, gts, grid);
      for (const auto& w : report.warnings) logger()->warn("{}", w);
      out << report.to_table();
      if (report_path.empty()) {
        fs::path p = pred_path;
        report_path = (p.parent_path() / (p.stem().string() + ".eval.json")).string();
      }
      write_json_file(report.to_json(), report_path);
      return 0;
    } else if (*synth) {
      const SynthSpec spec =
          spec_path.empty() ? SynthSpec{} : SynthSpec::from_json(read_json_file(spec_path));
      const SynthSummary s = describe(spec);
      const fs::path manifest = generate(spec, synth_out);
      out << "synth: " << s.videos << " videos x " << s.frames_per_video << " frames, "
          << s.categories << " categories, expected foreground fraction "
          << s.expected_foreground_fraction << "\n"
          << "manifest: " << manifest.string() << "\n";
      return 0;
    } else if (*grad) {
      if (trials < 1) throw UsageError("--trials must be >= 1");
      GradCheckOptions opts;
      opts.trials = trials;
      opts.seed = grad_seed;
      std::vector<int> d;
      std::stringstream ss(dims);
      for (std::string item; std::getline(ss, item, ',');) {
        try {
          d.push_back(std::stoi(item));
        } catch (const std::exception&) {
          throw UsageError("--dims expects four integers D_v,D_l,D,K");
        }
      }
      if (d.size() != 4 || *std::min_element(d.begin(), d.end()) < 1) {
        throw UsageError("--dims expects four positive integers D_v,D_l,D,K");
      }
      opts.max_frame_dim = d[0];
      opts.max_text_dim = d[1];
      opts.max_shared_dim = d[2];
      opts.max_k = d[3];
      const GradCheckReport report = run_grad_check(opts);
      char tol[32];
      std::snprintf(tol, sizeof(tol), "%.0e", opts.tolerance);
      // "1e-04" -> "1e-4"
      std::string tol_text = tol;
      if (const auto e = tol_text.find("e-0"); e != std::string::npos) tol_text.erase(e + 2, 1);
      out << report.num_passed << "/" << trials << " within " << tol_text
          << " (worst relative error " << report.worst_rel_error << ")\n";
      return report.all_passed() ? 0 : static_cast<int>(ErrorKind::kNumeric);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kData);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out << "wall time: " << secs << " s\n";
  return 0;
}

}  // namespace tzal
