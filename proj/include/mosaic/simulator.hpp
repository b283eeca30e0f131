/* Copyright 2026 The Mosaic Planner Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <functional>
#include <random>

#include "mosaic/core.hpp"
#include "mosaic/perf_model.hpp"
#include "mosaic/stage_eval.hpp"

namespace mosaic {

enum class StreamMode { Pooled, OnDemand };

struct SimConfig {
    int iterations = 1;
    StreamMode stream_mode = StreamMode::Pooled;
    double pooled_overhead = 0.013e-3;   // seconds per stage transition
    double on_demand_overhead = 37e-3;   // seconds per stream created
    double perturbation_sigma = 0.0;     // multiplicative log-normal noise
    uint64_t seed = 0;
};

struct TimelineInterval {
    int gpu = 0;
    int module = 0;
    double start = 0.0;
    double end = 0.0;
    double quota = 0.0;
};

struct SimulationReport {
    double iteration_time = 0.0;              // mean over iterations
    std::vector<double> per_stage_times;      // mean per stage
    // Utilization proxy: quota-weighted SM-active time over wall time. The
    // profiled sm_active channel separates compute-active time from stalls,
    // so reserving a larger quota or more GPUs does not count as busier.
    std::vector<double> per_gpu_busy_fraction;
    double mean_busy_fraction = 0.0;
    std::vector<TimelineInterval> timeline;   // first iteration only
};

// Streams launched by one stage: one per (module, quota) per GPU it runs on,
// i.e. the number of replicas in the stage.
inline int stage_stream_count(const StageAllocation& stage) {
    int n = 0;
    for (const auto& e : stage.entries) n += static_cast<int>(e.gpus.size());
    return n;
}

// Deterministic replay of a plan under the performance model. Module
// durations are the rectified latencies, optionally perturbed; stage duration
// is the slowest module plus the stream-management overhead of the configured
// mode.
inline SimulationReport simulate(const PerfContext& ctx, const ClusterSpec& cluster,
                                 const DeploymentPlan& plan, const SimConfig& cfg) {
    if (cfg.iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    if (cfg.pooled_overhead < 0 || cfg.on_demand_overhead < 0)
        throw std::invalid_argument("overheads must be >= 0");

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    SimulationReport report;
    report.per_stage_times.assign(plan.stages.size(), 0.0);
    report.per_gpu_busy_fraction.assign(cluster.gpu_count, 0.0);
    std::vector<double> busy(cluster.gpu_count, 0.0);
    double total = 0.0;

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        double t = 0.0;
        for (size_t si = 0; si < plan.stages.size(); ++si) {
            const StageAllocation& stage = plan.stages[si];
            double stage_dur = 0.0;
            for (const auto& e : stage.entries) {
                double dur = rectified_latency(ctx, stage, e.module);
                if (cfg.perturbation_sigma > 0)
                    dur *= std::exp(cfg.perturbation_sigma * gauss(rng));
                stage_dur = std::max(stage_dur, dur);
                auto s = ctx.surface(e.module).lookup(e.option.dp_degree,
                                                      e.option.quota());
                double active = std::min(dur, s.sm_active * s.latency);
                for (int r : e.gpus) {
                    busy[r] += e.option.quota() * active;
                    if (iter == 0)
                        report.timeline.push_back(
                            {r, e.module, t, t + dur, e.option.quota()});
                }
            }
            double overhead = cfg.stream_mode == StreamMode::Pooled
                                  ? cfg.pooled_overhead
                                  : cfg.on_demand_overhead * stage_stream_count(stage);
            report.per_stage_times[si] += stage_dur + overhead;
            t += stage_dur + overhead;
        }
        total += t;
    }

    report.iteration_time = total / cfg.iterations;
    for (auto& s : report.per_stage_times) s /= cfg.iterations;
    for (int r = 0; r < cluster.gpu_count; ++r)
        report.per_gpu_busy_fraction[r] = total > 0 ? busy[r] / total : 0.0;
    for (double b : report.per_gpu_busy_fraction) report.mean_busy_fraction += b;
    report.mean_busy_fraction /= cluster.gpu_count;
    return report;
}

// ---------------------------------------------------------------------------
// Exclusive-allocation baselines
// ---------------------------------------------------------------------------

enum class BaselinePolicy { Megatron, DistMM };

struct InfeasibleBaselineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline DeploymentOption full_quota_option(int d, int quota_levels) {
    return DeploymentOption{d, quota_levels, quota_levels};
}

inline std::vector<int> contiguous_gpus(int first, int count) {
    std::vector<int> out(count);
    for (int i = 0; i < count; ++i) out[i] = first + i;
    return out;
}

// Dependency-legal waves: modules grouped by longest-path depth. A level
// wider than the GPU pool is split into the minimal number of waves, balanced
// by single-GPU latency (longest-processing-time first) so no wave is stuck
// with all the heavy modules.
inline std::vector<std::vector<int>> dependency_waves(const PerfContext& ctx,
                                                      int gpu_count) {
    const ModelGraph& g = *ctx.graph;
    const int n = g.size();
    std::vector<int> depth(n, 0);
    for (int u : topological_order(g)) {
        for (const auto& [a, b] : g.edges) {
            if (g.index_of(a) == u)
                depth[g.index_of(b)] = std::max(depth[g.index_of(b)], depth[u] + 1);
        }
    }
    int max_depth = 0;
    for (int d : depth) max_depth = std::max(max_depth, d);
    std::vector<std::vector<int>> waves;
    for (int lvl = 0; lvl <= max_depth; ++lvl) {
        std::vector<int> level;
        for (int m : topological_order(g))
            if (depth[m] == lvl) level.push_back(m);
        if (level.empty()) continue;
        const int wave_count =
            (static_cast<int>(level.size()) + gpu_count - 1) / gpu_count;
        std::vector<std::pair<double, int>> load;
        for (int m : level) {
            const auto& surf = ctx.surface(m);
            load.push_back({surf.lookup(surf.min_d(), surf.max_a()).latency, m});
        }
        std::sort(load.begin(), load.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        std::vector<std::vector<int>> split(wave_count);
        std::vector<double> totals(wave_count, 0.0);
        for (const auto& [lat, m] : load) {
            int target = 0;
            for (int w = 1; w < wave_count; ++w) {
                if (static_cast<int>(split[w].size()) >= gpu_count) continue;
                if (static_cast<int>(split[target].size()) >= gpu_count ||
                    totals[w] < totals[target])
                    target = w;
            }
            split[target].push_back(m);
            totals[target] += lat;
        }
        for (auto& wave : split) {
            std::sort(wave.begin(), wave.end());
            waves.push_back(std::move(wave));
        }
    }
    return waves;
}

// Max rectified latency of a wave with every module exclusive on its GPUs.
inline double wave_time(const PerfContext& ctx, const std::vector<int>& wave,
                        const std::vector<int>& degrees, int quota_levels,
                        StageAllocation* out = nullptr) {
    StageAllocation stage;
    int next = 0;
    for (size_t i = 0; i < wave.size(); ++i) {
        stage.entries.push_back({wave[i], full_quota_option(degrees[i], quota_levels),
                                 contiguous_gpus(next, degrees[i])});
        next += degrees[i];
    }
    std::sort(stage.entries.begin(), stage.entries.end(),
              [](const auto& a, const auto& b) { return a.module < b.module; });
    double worst = 0.0;
    for (const auto& e : stage.entries)
        worst = std::max(worst, rectified_latency(ctx, stage, e.module));
    if (out) *out = std::move(stage);
    return worst;
}

// Enumerate integer GPU shares (each >= 1, sum <= gpu_count) minimizing the
// wave's max latency; greedy beyond 8 modules.
inline StageAllocation distmm_wave(const PerfContext& ctx, const ClusterSpec& cluster,
                                   const std::vector<int>& wave, int quota_levels) {
    const int k = static_cast<int>(wave.size());
    const int max_d = ctx.surface(wave[0]).max_d();
    auto degree_ok = [&](int m, int d) {
        const auto& surf = ctx.surface(m);
        if (d > surf.max_d()) return false;
        return ctx.footprint(m, full_quota_option(d, quota_levels)) <=
               cluster.memory_capacity;
    };
    std::vector<int> degrees(k, 1);
    for (int i = 0; i < k; ++i)
        if (!degree_ok(wave[i], 1))
            throw InfeasibleBaselineError("module " + ctx.graph->modules[wave[i]].id +
                                          " does not fit one GPU at full quota");
    if (k <= 8) {
        std::vector<int> best = degrees;
        double best_time = std::numeric_limits<double>::max();
        std::vector<int> cur(k, 1);
        std::function<void(int, int)> rec = [&](int i, int remaining) {
            if (i == k) {
                double t = wave_time(ctx, wave, cur, quota_levels);
                if (t < best_time) {
                    best_time = t;
                    best = cur;
                }
                return;
            }
            for (int d = 1; d <= remaining - (k - 1 - i) && d <= max_d; ++d) {
                if (!degree_ok(wave[i], d)) continue;
                cur[i] = d;
                rec(i + 1, remaining - d);
            }
        };
        rec(0, cluster.gpu_count);
        degrees = best;
    } else {
        int used = k;
        while (used < cluster.gpu_count) {
            double cur_time = wave_time(ctx, wave, degrees, quota_levels);
            int worst = 0;
            double worst_lat = -1.0;
            std::vector<int> trial = degrees;
            // Give the next GPU to the slowest module if that helps.
            std::vector<std::pair<double, int>> lat(k);
            StageAllocation tmp;
            wave_time(ctx, wave, degrees, quota_levels, &tmp);
            for (int i = 0; i < k; ++i)
                lat[i] = {rectified_latency(ctx, tmp, wave[i]), i};
            std::sort(lat.rbegin(), lat.rend());
            worst = lat[0].second;
            trial[worst]++;
            if (trial[worst] > max_d || !degree_ok(wave[worst], trial[worst])) break;
            if (wave_time(ctx, wave, trial, quota_levels) >= cur_time) break;
            degrees = trial;
            ++used;
            (void)worst_lat;
        }
    }
    StageAllocation out;
    wave_time(ctx, wave, degrees, quota_levels, &out);
    return out;
}

}  // namespace detail

// Builds an exclusive-allocation baseline plan evaluated under the same
// performance model: Megatron replicates every module over all GPUs in its
// own stage; DistMM packs dependency waves onto disjoint GPU subsets.
inline DeploymentPlan make_baseline_plan(const PerfContext& ctx, const ClusterSpec& cluster,
                                         BaselinePolicy policy, int quota_levels = 10) {
    const ModelGraph& g = *ctx.graph;
    DeploymentPlan plan;
    if (policy == BaselinePolicy::Megatron) {
        for (const auto& stage_modules : topological_singleton_stages(g)) {
            int m = stage_modules[0];
            const auto& surf = ctx.surface(m);
            int d = cluster.gpu_count;
            if (d > surf.max_d())
                throw InfeasibleBaselineError("gpu_count exceeds profiled DP range");
            auto opt = detail::full_quota_option(d, quota_levels);
            if (ctx.footprint(m, opt) > cluster.memory_capacity)
                throw InfeasibleBaselineError("module " + g.modules[m].id +
                                              " exceeds GPU memory at forced degree");
            StageAllocation stage;
            stage.entries.push_back({m, opt, detail::contiguous_gpus(0, d)});
            plan.stages.push_back(std::move(stage));
        }
    } else {
        for (const auto& wave : detail::dependency_waves(ctx, cluster.gpu_count))
            plan.stages.push_back(detail::distmm_wave(ctx, cluster, wave, quota_levels));
    }
    for (const auto& stage : plan.stages) {
        double t = stage_time(ctx, stage);
        plan.predicted_stage_times.push_back(t);
        plan.predicted_iteration_time += t;
    }
    return plan;
}

struct BaselineRun {
    DeploymentPlan plan;
    SimulationReport report;
};

inline BaselineRun simulate_baseline(const PerfContext& ctx, const ClusterSpec& cluster,
                                     BaselinePolicy policy, const SimConfig& cfg,
                                     int quota_levels = 10) {
    BaselineRun run;
    run.plan = make_baseline_plan(ctx, cluster, policy, quota_levels);
    run.report = simulate(ctx, cluster, run.plan, cfg);
    return run;
}

}  // namespace mosaic
