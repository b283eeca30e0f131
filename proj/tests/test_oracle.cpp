// Copyright 2026 The Mosaic Planner Authors
// Licensed under the Apache License, Version 2.0. See the LICENSE header in
// the corresponding include files for details.
#include <doctest.h>

#include "mosaic/oracle.hpp"
#include "mosaic/profiler.hpp"
#include "mosaic/solver.hpp"

using namespace mosaic;

namespace {

ModelGraph free_graph(int n) {
    ModelGraph g;
    for (int i = 0; i < n; ++i) {
        std::string id = "m" + std::to_string(i);
        g.modules.push_back({id, id, 0.0, {}});
    }
    return g;
}

}  // namespace

TEST_CASE("partition counts match the ordered Bell numbers on edge-free graphs") {
    CHECK(enumerate_partitions(free_graph(1)).size() == 1);
    CHECK(enumerate_partitions(free_graph(2)).size() == 3);
    CHECK(enumerate_partitions(free_graph(3)).size() == 13);
    CHECK(enumerate_partitions(free_graph(4)).size() == 75);
    CHECK(enumerate_partitions(free_graph(5)).size() == 541);
}

TEST_CASE("a chain admits exactly one staging and a diamond three") {
    ModelGraph chain = free_graph(3);
    chain.edges = {{"m0", "m1"}, {"m1", "m2"}};
    auto ps = enumerate_partitions(chain);
    REQUIRE(ps.size() == 1);
    CHECK(ps[0] == std::vector<std::vector<int>>{{0}, {1}, {2}});

    ModelGraph dia = free_graph(4);
    dia.edges = {{"m0", "m1"}, {"m0", "m2"}, {"m1", "m3"}, {"m2", "m3"}};
    CHECK(enumerate_partitions(dia).size() == 3);
}

TEST_CASE("every enumerated partition is dependency-legal") {
    ModelGraph g = free_graph(4);
    g.edges = {{"m0", "m2"}, {"m1", "m3"}};
    auto reach = reachability_masks(g);
    for (const auto& partition : enumerate_partitions(g)) {
        std::vector<int> stage_of(4, -1);
        for (size_t s = 0; s < partition.size(); ++s)
            for (int m : partition[s]) stage_of[m] = s;
        for (int m : {0, 1, 2, 3}) REQUIRE(stage_of[m] >= 0);
        for (const auto& [u, v] : g.edges)
            CHECK(stage_of[g.index_of(u)] < stage_of[g.index_of(v)]);
    }
}

TEST_CASE("the oracle refuses graphs beyond its enumeration budget") {
    CHECK_THROWS_AS(enumerate_partitions(free_graph(9)), OracleTooLargeError);
}

TEST_CASE("on one module the oracle equals stage_eval") {
    auto inst = random_instance(4, 1, 2);
    auto surfaces = generate_surfaces(inst.workloads, inst.cluster);
    PerfContext ctx{&inst.graph, &surfaces, {0.4e-3, 1.2e-3, 0.8e-3}, true};
    auto oracle = brute_force_optimum(ctx, inst.cluster);
    auto stage = stage_eval(ctx, inst.cluster, {0});
    REQUIRE(oracle.has_value());
    REQUIRE(stage.has_value());
    CHECK(oracle->iteration_time == doctest::Approx(stage->stage_time).epsilon(1e-12));
    CHECK(oracle->partitions_examined == 1);
}

TEST_CASE("contention-free independent modules share a single stage") {
    // Latency flat in quota and no interference: running both modules side by
    // side costs max(L1, L2), strictly better than any sequential split.
    ModelGraph g = free_graph(2);
    std::vector<ScalingSurface> surfs;
    for (int i = 0; i < 2; ++i) {
        std::vector<SurfacePoint> pts;
        for (double a : {0.5, 1.0})
            pts.push_back({1, a, 0.1 * (i + 1), 0.2, 1e9, 1.0});
        surfs.emplace_back(g.modules[i].id, pts);
    }
    SurfaceSet surfaces(std::move(surfs));
    PerfContext ctx{&g, &surfaces, {}, true};
    ClusterSpec cluster;
    cluster.gpu_count = 1;
    auto best = brute_force_optimum(ctx, cluster, 2);
    REQUIRE(best.has_value());
    CHECK(best->plan.stages.size() == 1);
    CHECK(best->iteration_time == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("the oracle never loses to the greedy planner") {
    for (uint64_t seed = 1; seed <= 12; ++seed) {
        auto inst = random_instance(seed, 4, 2);
        auto surfaces = generate_surfaces(inst.workloads, inst.cluster);
        PerfContext ctx{&inst.graph, &surfaces, {0.4e-3, 1.2e-3, 0.8e-3}, true};
        auto oracle = brute_force_optimum(ctx, inst.cluster, 4);
        auto greedy = solve(ctx, inst.cluster, {4, 1e-3});
        REQUIRE(oracle.has_value());
        CHECK(oracle->iteration_time <=
              greedy.plan.predicted_iteration_time * (1.0 + 1e-9));
        CHECK_FALSE(validate_plan(oracle->plan, inst.graph, inst.cluster).has_value());
    }
}

TEST_CASE("oracle plans on infeasible instances are reported as absent") {
    // Shrink GPU memory until no deployment option fits any module.
    auto inst = random_instance(2, 2, 1);
    auto surfaces = generate_surfaces(inst.workloads, inst.cluster);
    PerfContext ctx{&inst.graph, &surfaces, {0.4e-3, 1.2e-3, 0.8e-3}, true};
    ClusterSpec tiny = inst.cluster;
    tiny.memory_capacity = 1.0;
    CHECK_FALSE(brute_force_optimum(ctx, tiny, 4).has_value());
}
