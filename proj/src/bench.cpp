// Copyright 2026 The kgjoint Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "kgjoint/bench.hpp"

#include <chrono>
#include <numeric>
#include <sstream>

#include "text_util.hpp"

namespace kgjoint {

namespace {

BenchTrace time_steps(TrainConfig config, const PretrainData& data, int64_t steps, bool use_memory) {
  config.use_memory = use_memory;
  Trainer trainer(config, data);
  BenchTrace trace;
  for (int64_t i = 0; i < steps; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const StepReport r = trainer.step();
    trace.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    trace.refreshed.push_back(r.refreshed);
  }
  return trace;
}

}  // namespace

double BenchTrace::mean() const {
  if (seconds.empty()) return 0.0;
  return std::accumulate(seconds.begin(), seconds.end(), 0.0) / static_cast<double>(seconds.size());
}

BenchReport run_memory_bench(const TrainConfig& config, const PretrainData& data, int64_t steps) {
  if (steps <= 0) throw Error("bench-memory: steps must be positive");
  BenchReport report;
  report.with_memory = time_steps(config, data, steps, true);
  report.recompute = time_steps(config, data, steps, false);
  report.speedup = report.recompute.mean() / report.with_memory.mean();
  return report;
}

std::string format_bench(const BenchReport& report) {
  std::ostringstream out;
  out << "mode,step,seconds,refreshed\n";
  auto rows = [&](const char* mode, const BenchTrace& t) {
    for (size_t i = 0; i < t.seconds.size(); ++i) {
      out << mode << ',' << i << ',' << internal::format_double(t.seconds[i]) << ',' << (t.refreshed[i] ? 1 : 0)
          << '\n';
    }
  };
  rows("memory", report.with_memory);
  rows("recompute", report.recompute);
  out << "# mean_memory=" << internal::format_double(report.with_memory.mean())
      << " mean_recompute=" << internal::format_double(report.recompute.mean())
      << " speedup=" << internal::format_double(report.speedup) << '\n';
  return out.str();
}

}  // namespace kgjoint
