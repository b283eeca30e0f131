// Copyright 2026 The Mosaic Planner Authors
// Licensed under the Apache License, Version 2.0. See the LICENSE header in
// the corresponding include files for details.
#include <doctest.h>

#include "mosaic/profiler.hpp"
#include "mosaic/simulator.hpp"
#include "mosaic/solver.hpp"

using namespace mosaic;

namespace {

struct Fixture {
    WorkloadPreset preset;
    ClusterSpec cluster;
    SurfaceSet surfaces;
    PerfContext ctx;
    DeploymentPlan plan;

    explicit Fixture(const std::string& name, int gpus) : preset(make_preset(name)) {
        cluster.gpu_count = gpus;
        surfaces = generate_surfaces(preset.workloads, cluster);
        ctx = PerfContext{&preset.graph, &surfaces, {0.4e-3, 1.2e-3, 0.8e-3}, true};
        plan = solve(ctx, cluster).plan;
    }
};

}  // namespace

TEST_CASE("zero-noise simulation reproduces the predicted times plus overheads") {
    Fixture f("clip", 4);
    SimConfig cfg;
    auto report = simulate(f.ctx, f.cluster, f.plan, cfg);
    REQUIRE(report.per_stage_times.size() == f.plan.stages.size());
    double expected = f.plan.predicted_iteration_time +
                      cfg.pooled_overhead * f.plan.stages.size();
    CHECK(report.iteration_time == doctest::Approx(expected).epsilon(1e-9));
    for (size_t s = 0; s < f.plan.stages.size(); ++s)
        CHECK(report.per_stage_times[s] ==
              doctest::Approx(f.plan.predicted_stage_times[s] + cfg.pooled_overhead)
                  .epsilon(1e-9));
}

TEST_CASE("on-demand streams charge per replica and cost more than pooling") {
    Fixture f("clip", 4);
    SimConfig pooled, on_demand;
    on_demand.stream_mode = StreamMode::OnDemand;
    auto rp = simulate(f.ctx, f.cluster, f.plan, pooled);
    auto rd = simulate(f.ctx, f.cluster, f.plan, on_demand);
    int streams = 0;
    for (const auto& s : f.plan.stages) streams += stage_stream_count(s);
    CHECK(rd.iteration_time ==
          doctest::Approx(f.plan.predicted_iteration_time +
                          on_demand.on_demand_overhead * streams)
              .epsilon(1e-9));
    CHECK(rd.iteration_time > rp.iteration_time);
}

TEST_CASE("the timeline respects per-GPU quota capacity at every instant") {
    Fixture f("unifiedio2", 4);
    auto report = simulate(f.ctx, f.cluster, f.plan, {});
    REQUIRE_FALSE(report.timeline.empty());
    // Sample each interval midpoint and sum concurrent quotas per GPU.
    for (const auto& probe : report.timeline) {
        double t = 0.5 * (probe.start + probe.end);
        std::vector<double> load(f.cluster.gpu_count, 0.0);
        for (const auto& iv : report.timeline)
            if (iv.start <= t && t < iv.end) load[iv.gpu] += iv.quota;
        for (double q : load) CHECK(q <= 1.0 + 1e-9);
    }
}

TEST_CASE("noisy simulation is reproducible from its seed") {
    Fixture f("clip", 2);
    SimConfig cfg;
    cfg.perturbation_sigma = 0.05;
    cfg.iterations = 5;
    cfg.seed = 123;
    auto a = simulate(f.ctx, f.cluster, f.plan, cfg);
    auto b = simulate(f.ctx, f.cluster, f.plan, cfg);
    CHECK(a.iteration_time == b.iteration_time);
    cfg.seed = 124;
    auto c = simulate(f.ctx, f.cluster, f.plan, cfg);
    CHECK(a.iteration_time != c.iteration_time);
}

TEST_CASE("utilization stays a fraction and rises with colocation") {
    Fixture f("ofasys", 8);
    auto mosaic_report = simulate(f.ctx, f.cluster, f.plan, {});
    for (double b : mosaic_report.per_gpu_busy_fraction) {
        CHECK(b >= 0.0);
        CHECK(b <= 1.0 + 1e-9);
    }
    auto distmm = simulate_baseline(f.ctx, f.cluster, BaselinePolicy::DistMM, {});
    CHECK(mosaic_report.mean_busy_fraction > distmm.report.mean_busy_fraction);
}

TEST_CASE("simulate rejects nonsense configurations") {
    Fixture f("clip", 2);
    SimConfig bad;
    bad.iterations = 0;
    CHECK_THROWS_AS(simulate(f.ctx, f.cluster, f.plan, bad), std::invalid_argument);
    bad = {};
    bad.pooled_overhead = -1.0;
    CHECK_THROWS_AS(simulate(f.ctx, f.cluster, f.plan, bad), std::invalid_argument);
}

TEST_CASE("the megatron baseline runs each module alone at full width") {
    Fixture f("clip", 4);
    auto plan = make_baseline_plan(f.ctx, f.cluster, BaselinePolicy::Megatron);
    CHECK_FALSE(validate_plan(plan, f.preset.graph, f.cluster).has_value());
    REQUIRE(plan.stages.size() == 3);
    for (const auto& stage : plan.stages) {
        REQUIRE(stage.entries.size() == 1);
        CHECK(stage.entries[0].option.dp_degree == 4);
        CHECK(stage.entries[0].option.quota() == 1.0);
        CHECK(stage.entries[0].gpus == std::vector<int>{0, 1, 2, 3});
    }
}

TEST_CASE("the distmm baseline packs independent modules into disjoint waves") {
    Fixture f("clip", 4);
    auto plan = make_baseline_plan(f.ctx, f.cluster, BaselinePolicy::DistMM);
    CHECK_FALSE(validate_plan(plan, f.preset.graph, f.cluster).has_value());
    REQUIRE(plan.stages.size() == 2);
    // Wave 1: vision and text side by side on disjoint GPUs at full quota.
    auto first = plan.stages[0].module_indices();
    CHECK(first == std::vector<int>{f.preset.graph.index_of("vision"),
                                    f.preset.graph.index_of("text")});
    std::set<int> used;
    for (const auto& e : plan.stages[0].entries) {
        CHECK(e.option.quota() == 1.0);
        for (int g : e.gpus) CHECK(used.insert(g).second);
    }
    CHECK(plan.stages[1].module_indices() ==
          std::vector<int>{f.preset.graph.index_of("align")});
}

TEST_CASE("baselines refuse clusters outside the profiled range") {
    Fixture f("clip", 4);
    ClusterSpec wide = f.cluster;
    wide.gpu_count = 16;  // surfaces were profiled up to d=4
    CHECK_THROWS_AS(make_baseline_plan(f.ctx, wide, BaselinePolicy::Megatron),
                    InfeasibleBaselineError);
}

TEST_CASE("a wave wider than the pool is split with balanced loads") {
    // 9 encoders + backbone on 4 GPUs: the encoder level needs three waves.
    Fixture f("ofasys", 4);
    auto waves = detail::dependency_waves(f.ctx, f.cluster.gpu_count);
    REQUIRE(waves.size() == 4);  // ceil(9/4) = 3 encoder waves + backbone
    std::set<int> seen;
    for (size_t w = 0; w + 1 < waves.size(); ++w) {
        CHECK(waves[w].size() <= 4);
        for (int m : waves[w]) CHECK(seen.insert(m).second);
    }
    CHECK(seen.size() == 9);
    CHECK(waves.back() == std::vector<int>{f.preset.graph.index_of("backbone")});
}
