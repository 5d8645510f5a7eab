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

#include <iosfwd>
#include <string>
#include <vector>

#include "tzal/featio.hpp"
#include "tzal/t3al.hpp"

namespace tzal {

// Localizes every manifest video on `threads` workers. Results are merged in
// manifest order; the echoed config excludes the thread count.
PredictionSet run_manifest(const Manifest& manifest, const RunConfig& config, int threads,
                           std::ostream* progress = nullptr);

PredictionSet run_naive_baseline(const Manifest& manifest, double threshold, double scale,
                                 int threads, std::ostream* progress = nullptr);

// Entry point of the `tzal` tool. `args` excludes the program name. Returns
// the process exit code: 0 success, 2 usage, 3 data error, 4 numeric failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tzal
