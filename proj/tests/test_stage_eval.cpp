// Copyright 2026 The Mosaic Planner Authors
// Licensed under the Apache License, Version 2.0. See the LICENSE header in
// the corresponding include files for details.
#include <doctest.h>

#include "mosaic/oracle.hpp"
#include "mosaic/profiler.hpp"
#include "mosaic/stage_eval.hpp"

using namespace mosaic;

namespace {

// Bundles a random instance with its surfaces so the PerfContext pointers
// stay valid for the lifetime of the fixture.
struct Instance {
    RandomInstance inst;
    SurfaceSet surfaces;
    PerfContext ctx;

    Instance(uint64_t seed, int modules, int gpus,
             InterferenceModel model = {0.4e-3, 1.2e-3, 0.8e-3}) {
        inst = random_instance(seed, modules, gpus);
        surfaces = generate_surfaces(inst.workloads, inst.cluster);
        ctx = PerfContext{&inst.graph, &surfaces, model, true};
    }

    std::vector<int> all_modules() const {
        std::vector<int> out;
        for (int m = 0; m < inst.graph.size(); ++m) out.push_back(m);
        return out;
    }
};

}  // namespace

TEST_CASE("candidate_options are sorted, bounded by the cluster and the hull") {
    Instance f(3, 2, 2);
    auto opts = candidate_options(f.ctx, f.inst.cluster, 0, 10);
    REQUIRE_FALSE(opts.empty());
    for (size_t i = 1; i < opts.size(); ++i)
        CHECK(opts[i - 1].base_latency <= opts[i].base_latency);
    for (const auto& c : opts) {
        CHECK(c.opt.dp_degree <= f.inst.cluster.gpu_count);
        CHECK(c.opt.quota_units >= 1);
        CHECK(c.opt.quota_units <= 10);
        CHECK(c.footprint <= f.inst.cluster.memory_capacity);
        CHECK(c.base_latency ==
              f.ctx.surface(0).lookup(c.opt.dp_degree, c.opt.quota()).latency);
    }
    // A 20-level lattice has no point at a=0.05, below the profiled min quota.
    for (const auto& c : candidate_options(f.ctx, f.inst.cluster, 0, 20))
        CHECK(c.opt.quota() >= 0.1 - 1e-12);
}

TEST_CASE("candidate_options drops deployments that cannot fit GPU memory") {
    Instance f(3, 2, 2);
    ClusterSpec tight = f.inst.cluster;
    auto base = candidate_options(f.ctx, tight, 0, 10);
    double max_fp = 0.0;
    for (const auto& c : base) max_fp = std::max(max_fp, c.footprint);
    tight.memory_capacity = max_fp * 0.9;
    auto fewer = candidate_options(f.ctx, tight, 0, 10);
    CHECK(fewer.size() < base.size());
    for (const auto& c : fewer) CHECK(c.footprint <= tight.memory_capacity);
}

TEST_CASE("a single module gets its best solo option") {
    Instance f(5, 1, 2);
    auto r = stage_eval(f.ctx, f.inst.cluster, {0});
    REQUIRE(r.has_value());
    double best = std::numeric_limits<double>::max();
    for (const auto& c : candidate_options(f.ctx, f.inst.cluster, 0, 10))
        best = std::min(best, solo_rectified(f.ctx, c));
    CHECK(r->stage_time == doctest::Approx(best).epsilon(1e-12));
    REQUIRE(r->allocation.entries.size() == 1);
    CHECK(r->allocation.entries[0].module == 0);
}

TEST_CASE("the reported stage time matches re-evaluating the allocation") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        Instance f(seed, 3, 2);
        auto r = stage_eval(f.ctx, f.inst.cluster, f.all_modules(), {4, 1e-3});
        if (!r) continue;
        CHECK(stage_time(f.ctx, r->allocation) ==
              doctest::Approx(r->stage_time).epsilon(1e-12));
        // Per-GPU quota conservation in exact integer units.
        std::vector<int> units(f.inst.cluster.gpu_count, 0);
        for (const auto& e : r->allocation.entries)
            for (int g : e.gpus) units[g] += e.option.quota_units;
        for (int u : units) CHECK(u <= 4);
    }
}

TEST_CASE("feasibility flips exactly at the optimal stage time") {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        Instance f(seed, 3, 2);
        StageEvalConfig cfg{4, 1e-3};
        auto r = stage_eval(f.ctx, f.inst.cluster, f.all_modules(), cfg);
        if (!r) continue;
        auto modules = f.all_modules();
        std::vector<std::vector<CandidateOption>> options;
        for (int m : modules)
            options.push_back(candidate_options(f.ctx, f.inst.cluster, m, cfg.quota_levels));
        SolverStats stats;
        detail::FeasibilitySearch search(f.ctx, f.inst.cluster, modules, options,
                                         cfg.quota_levels, stats);
        CHECK(search.run(r->stage_time * (1.0 + 1e-6)).has_value());
        CHECK_FALSE(search.run(r->stage_time * (1.0 - 1e-6)).has_value());
    }
}

TEST_CASE("stage_eval matches an independent exhaustive solver") {
    int solved = 0;
    for (uint64_t seed = 1; seed <= 60; ++seed) {
        Instance f(seed, 3, 2);
        StageEvalConfig cfg{4, 1e-3};
        auto fast = stage_eval(f.ctx, f.inst.cluster, f.all_modules(), cfg);
        detail::ExactStageSolver exact(f.ctx, f.inst.cluster, cfg.quota_levels);
        auto truth = exact.solve(f.all_modules());
        REQUIRE(fast.has_value() == truth.has_value());
        if (!fast) continue;
        ++solved;
        CHECK(fast->stage_time == doctest::Approx(truth->stage_time).epsilon(1e-9));
    }
    CHECK(solved > 30);  // the comparison must actually exercise solvable cases
}

TEST_CASE("stage_eval handles models with negative coefficients") {
    // Negative coefficients disable interference pruning; results must still
    // agree with the exhaustive solver.
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        Instance f(seed, 2, 2, InterferenceModel{1e-3, -0.5e-3, 0.8e-3});
        auto fast = stage_eval(f.ctx, f.inst.cluster, f.all_modules(), {4, 1e-3});
        detail::ExactStageSolver exact(f.ctx, f.inst.cluster, 4);
        auto truth = exact.solve(f.all_modules());
        REQUIRE(fast.has_value() == truth.has_value());
        if (fast) CHECK(fast->stage_time == doctest::Approx(truth->stage_time).epsilon(1e-9));
    }
}

TEST_CASE("stage_eval is deterministic") {
    Instance f(9, 4, 2);
    auto a = stage_eval(f.ctx, f.inst.cluster, f.all_modules(), {4, 1e-3});
    auto b = stage_eval(f.ctx, f.inst.cluster, f.all_modules(), {4, 1e-3});
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    CHECK(a->stage_time == b->stage_time);
    REQUIRE(a->allocation.entries.size() == b->allocation.entries.size());
    for (size_t i = 0; i < a->allocation.entries.size(); ++i) {
        CHECK(a->allocation.entries[i].module == b->allocation.entries[i].module);
        CHECK(a->allocation.entries[i].option == b->allocation.entries[i].option);
        CHECK(a->allocation.entries[i].gpus == b->allocation.entries[i].gpus);
    }
}

TEST_CASE("stage_eval reports infeasibility distinctly from option starvation") {
    SUBCASE("quota capacity exhausted returns nullopt") {
        // Three modules on one GPU at half-GPU granularity: 3 units > 2.
        Instance f(2, 3, 1);
        auto r = stage_eval(f.ctx, f.inst.cluster, f.all_modules(), {2, 1e-3});
        CHECK_FALSE(r.has_value());
    }
    SUBCASE("a module with no deployable option throws") {
        Instance f(2, 2, 2);
        ClusterSpec tiny = f.inst.cluster;
        tiny.memory_capacity = 1.0;  // nothing fits
        CHECK_THROWS_AS(stage_eval(f.ctx, tiny, f.all_modules(), {10, 1e-3}),
                        StageInfeasibleError);
    }
}
