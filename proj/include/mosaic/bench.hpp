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

#include "mosaic/oracle.hpp"
#include "mosaic/profiler.hpp"
#include "mosaic/simulator.hpp"
#include "mosaic/solver.hpp"

namespace mosaic {

struct UnknownSuiteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The ground-truth interference coefficients used whenever a benchmark needs
// a synthetic colocation model: a small fixed cost, a bandwidth-proportional
// slowdown and a nonzero multiplicative term.
inline InterferenceModel default_ground_truth() {
    InterferenceModel m;
    m.e1 = 0.4e-3;
    m.e2 = 1.2e-3;
    m.e3 = 0.8e-3;
    return m;
}

namespace detail {

inline PerfContext make_context(const ModelGraph& graph, const SurfaceSet& surfaces,
                                const InterferenceModel& model) {
    PerfContext ctx;
    ctx.graph = &graph;
    ctx.surfaces = &surfaces;
    ctx.interference = model;
    return ctx;
}

inline std::string csv_escape_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace detail

struct BenchRow {
    std::vector<std::string> cells;
};

struct BenchResult {
    std::vector<std::string> header;
    std::vector<BenchRow> rows;

    std::string csv() const {
        std::ostringstream os;
        for (size_t i = 0; i < header.size(); ++i)
            os << header[i] << (i + 1 < header.size() ? "," : "\n");
        for (const auto& r : rows)
            for (size_t i = 0; i < r.cells.size(); ++i)
                os << r.cells[i] << (i + 1 < r.cells.size() ? "," : "\n");
        return os.str();
    }
};

struct OptimalityStats {
    BenchResult table;
    double exact_fraction = 0.0;  // ratio within 1e-6 relative of 1.0
    double median_ratio = 1.0;    // oracle time / planner time
};

// Seeded random instances solved by both the planner and the brute-force
// oracle; ratio = oracle time / planner time (1.0 means optimal).
inline OptimalityStats bench_optimality(int seeds, int module_count, int gpu_count,
                                        int quota_levels,
                                        const InterferenceModel& model =
                                            default_ground_truth()) {
    OptimalityStats stats;
    stats.table.header = {"seed", "oracle_time", "planner_time", "ratio"};
    std::vector<double> ratios;
    int exact = 0;
    for (int s = 1; s <= seeds; ++s) {
        RandomInstance inst = random_instance(s, module_count, gpu_count);
        SurfaceSet surfaces = generate_surfaces(inst.workloads, inst.cluster);
        PerfContext ctx = detail::make_context(inst.graph, surfaces, model);
        SolveConfig cfg;
        cfg.quota_levels = quota_levels;
        auto solved = solve(ctx, inst.cluster, cfg);
        auto oracle = brute_force_optimum(ctx, inst.cluster, quota_levels);
        if (!oracle) continue;  // should not happen: the planner found a plan
        double t_plan = solved.plan.predicted_iteration_time;
        double ratio = oracle->iteration_time / t_plan;
        ratios.push_back(ratio);
        if (std::abs(t_plan - oracle->iteration_time) <=
            1e-6 * std::abs(oracle->iteration_time))
            ++exact;
        stats.table.rows.push_back(
            {{std::to_string(s), detail::csv_escape_double(oracle->iteration_time),
              detail::csv_escape_double(t_plan), detail::csv_escape_double(ratio)}});
    }
    if (!ratios.empty()) {
        stats.exact_fraction = static_cast<double>(exact) / ratios.size();
        std::sort(ratios.begin(), ratios.end());
        stats.median_ratio = ratios[ratios.size() / 2];
    }
    return stats;
}

// GPU-count sweep on one preset: planner vs both exclusive baselines.
inline BenchResult bench_scale(const std::string& preset_name,
                               const std::vector<int>& gpu_counts,
                               const InterferenceModel& model = default_ground_truth()) {
    BenchResult out;
    out.header = {"gpus", "mosaic_time", "distmm_time", "megatron_time"};
    for (int gpus : gpu_counts) {
        WorkloadPreset preset = make_preset(preset_name);
        ClusterSpec cluster;
        cluster.gpu_count = gpus;
        SurfaceSet surfaces = generate_surfaces(preset.workloads, cluster);
        PerfContext ctx = detail::make_context(preset.graph, surfaces, model);
        SimConfig sim;
        auto solved = solve(ctx, cluster);
        double mosaic = simulate(ctx, cluster, solved.plan, sim).iteration_time;
        double distmm =
            simulate_baseline(ctx, cluster, BaselinePolicy::DistMM, sim).report.iteration_time;
        double megatron =
            simulate_baseline(ctx, cluster, BaselinePolicy::Megatron, sim).report.iteration_time;
        out.rows.push_back({{std::to_string(gpus), detail::csv_escape_double(mosaic),
                             detail::csv_escape_double(distmm),
                             detail::csv_escape_double(megatron)}});
    }
    return out;
}

struct GranularityRow {
    double g = 0.0;
    int quota_levels = 0;
    double solve_time = 0.0;
    double plan_time = 0.0;
    double quality = 0.0;  // best plan time over the sweep / this plan time
};

// Quantization sweep on one instance. Quality is the optimality ratio against
// the best plan found anywhere in the sweep, so finer granularities approach
// 1 from below.
inline std::vector<GranularityRow> bench_granularity(
    const ModelGraph& graph, const SurfaceSet& surfaces, const ClusterSpec& cluster,
    const InterferenceModel& model = default_ground_truth(),
    const std::vector<double>& gs = {0.3, 0.2, 0.1, 0.05, 0.01}) {
    PerfContext ctx = detail::make_context(graph, surfaces, model);
    std::vector<GranularityRow> rows;
    for (double g : gs) {
        GranularityRow row;
        row.g = g;
        row.quota_levels = static_cast<int>(std::lround(1.0 / g));
        SolveConfig cfg;
        cfg.quota_levels = row.quota_levels;
        auto solved = solve(ctx, cluster, cfg);
        row.solve_time = solved.trace.elapsed;
        row.plan_time = solved.plan.predicted_iteration_time;
        rows.push_back(row);
    }
    double best = std::numeric_limits<double>::max();
    for (const auto& r : rows) best = std::min(best, r.plan_time);
    for (auto& r : rows) r.quality = best / r.plan_time;
    return rows;
}

inline BenchResult granularity_table(const std::vector<GranularityRow>& rows) {
    BenchResult out;
    out.header = {"g", "quota_levels", "solve_time", "plan_time", "quality"};
    for (const auto& r : rows)
        out.rows.push_back({{detail::csv_escape_double(r.g), std::to_string(r.quota_levels),
                             detail::csv_escape_double(r.solve_time),
                             detail::csv_escape_double(r.plan_time),
                             detail::csv_escape_double(r.quality)}});
    return out;
}

struct AblationRow {
    int seed = 0;
    double err_full = 0.0;       // mean relative prediction error
    double err_additive = 0.0;
    double err_unaware = 0.0;
};

// Prediction-error ablation: fit both model variants on noisy colocation data
// from one module pool, then predict fresh colocation scenarios and compare
// against the ground-truth forward evaluation. "Unaware" predicts zero delay.
inline AblationRow ablation_run(int seed, int scenario_modules = 8,
                                double noise_sigma = 0.02,
                                const InterferenceModel& truth = default_ground_truth()) {
    RandomInstance inst = random_instance(1000 + seed, scenario_modules, 4);
    SurfaceSet surfaces = generate_surfaces(inst.workloads, inst.cluster);

    SampleGenConfig gen;
    gen.seed = seed;
    gen.count = 200;
    gen.noise_sigma = noise_sigma;
    auto train = generate_colocation_samples(inst.workloads, surfaces, truth, gen);
    InterferenceModel full = fit_interference(train, surfaces, false);
    InterferenceModel additive = fit_interference(train, surfaces, true);

    // Fresh noise-free scenarios from a disjoint stream.
    SampleGenConfig eval_gen;
    eval_gen.seed = seed + 500000;
    eval_gen.count = 100;
    eval_gen.noise_sigma = 0.0;
    eval_gen.max_cardinality = std::min(scenario_modules, 8);
    auto eval = generate_colocation_samples(inst.workloads, surfaces, truth, eval_gen);

    AblationRow row;
    row.seed = seed;
    for (const auto& s : eval) {
        auto [sum_b, prod_b] = contention_features(s.residents, surfaces);
        double denom = std::max(s.observed, 1e-300);
        row.err_full +=
            std::abs(s.base + full.delta(sum_b, prod_b) - s.observed) / denom;
        row.err_additive +=
            std::abs(s.base + additive.delta(sum_b, prod_b) - s.observed) / denom;
        row.err_unaware += std::abs(s.base - s.observed) / denom;
    }
    row.err_full /= eval.size();
    row.err_additive /= eval.size();
    row.err_unaware /= eval.size();
    return row;
}

inline BenchResult bench_ablation(int seeds) {
    BenchResult out;
    out.header = {"seed", "err_full", "err_additive", "err_unaware"};
    for (int s = 1; s <= seeds; ++s) {
        AblationRow r = ablation_run(s);
        out.rows.push_back({{std::to_string(r.seed), detail::csv_escape_double(r.err_full),
                             detail::csv_escape_double(r.err_additive),
                             detail::csv_escape_double(r.err_unaware)}});
    }
    return out;
}

inline std::vector<std::string> bench_suites() {
    return {"optimality", "scale", "granularity", "ablation"};
}

}  // namespace mosaic
