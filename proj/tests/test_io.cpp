// Copyright 2026 The Mosaic Planner Authors
// Licensed under the Apache License, Version 2.0. See the LICENSE header in
// the corresponding include files for details.
#include <doctest.h>

#include <cstdio>

#include "mosaic/io.hpp"
#include "mosaic/profiler.hpp"

using namespace mosaic;

namespace {

struct Fixture {
    WorkloadPreset preset = make_preset("clip");
    ClusterSpec cluster;
    SurfaceSet surfaces;

    Fixture() {
        cluster.gpu_count = 2;
        surfaces = generate_surfaces(preset.workloads, cluster);
    }
};

}  // namespace

TEST_CASE("model graphs round-trip through JSON") {
    Fixture f;
    auto g = model_from_json(to_json(f.preset.graph));
    REQUIRE(g.size() == f.preset.graph.size());
    for (int i = 0; i < g.size(); ++i) {
        CHECK(g.modules[i].id == f.preset.graph.modules[i].id);
        CHECK(g.modules[i].name == f.preset.graph.modules[i].name);
        CHECK(g.modules[i].memory_base == f.preset.graph.modules[i].memory_base);
    }
    CHECK(g.edges == f.preset.graph.edges);
}

TEST_CASE("clusters round-trip through JSON") {
    ClusterSpec c;
    c.gpu_count = 6;
    c.memory_capacity = 40e9;
    c.peak_compute = 3e14;
    auto back = cluster_from_json(to_json(c));
    CHECK(back.gpu_count == 6);
    CHECK(back.memory_capacity == 40e9);
    CHECK(back.peak_compute == 3e14);
    CHECK(back.peak_bandwidth == c.peak_bandwidth);
}

TEST_CASE("scaling surfaces round-trip bit-exactly") {
    Fixture f;
    auto back = surfaces_from_json(to_json(f.surfaces));
    for (const auto& surf : f.surfaces.all()) {
        REQUIRE(back.has(surf.module_id()));
        auto a = surf.points();
        auto b = back.by_id(surf.module_id()).points();
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].d == b[i].d);
            CHECK(a[i].a == b[i].a);
            CHECK(a[i].latency == b[i].latency);
            CHECK(a[i].bandwidth_util == b[i].bandwidth_util);
            CHECK(a[i].memory == b[i].memory);
            CHECK(a[i].sm_active == b[i].sm_active);
        }
    }
}

TEST_CASE("profiles without the sm_active channel default it to one") {
    Fixture f;
    auto j = to_json(f.surfaces);
    for (auto& js : j["surfaces"])
        for (auto& jp : js["points"]) jp.erase("sm_active");
    auto back = surfaces_from_json(j);
    for (const auto& p : back.all().front().points()) CHECK(p.sm_active == 1.0);
}

TEST_CASE("colocation samples and interference models round-trip") {
    Fixture f;
    auto samples = generate_colocation_samples(f.preset.workloads, f.surfaces,
                                               {0.4e-3, 1.2e-3, 0.8e-3}, {1, 20, 0.01, 3});
    auto back = samples_from_json(to_json(samples));
    REQUIRE(back.size() == samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        CHECK(back[i].victim == samples[i].victim);
        CHECK(back[i].observed == samples[i].observed);
        CHECK(back[i].base == samples[i].base);
        CHECK(back[i].residents == samples[i].residents);
    }

    auto model = fit_interference(samples, f.surfaces);
    auto m = interference_from_json(to_json(model));
    CHECK(m.e1 == model.e1);
    CHECK(m.e2 == model.e2);
    CHECK(m.e3 == model.e3);
    CHECK(m.r_squared == model.r_squared);
    CHECK(m.sample_count == model.sample_count);
    CHECK(m.additive_only == model.additive_only);
}

TEST_CASE("plans round-trip and reject unknown modules") {
    Fixture f;
    DeploymentPlan plan;
    StageAllocation s0, s1;
    s0.entries.push_back({0, {2, 10, 10}, {0, 1}});
    s0.entries.push_back({1, {1, 5, 10}, {0}});
    s1.entries.push_back({2, {1, 10, 10}, {1}});
    plan.stages = {s0, s1};
    plan.predicted_stage_times = {0.5, 0.25};
    plan.predicted_iteration_time = 0.75;

    auto j = to_json(plan, f.preset.graph);
    auto back = plan_from_json(j, f.preset.graph);
    REQUIRE(back.stages.size() == 2);
    CHECK(back.predicted_iteration_time == 0.75);
    CHECK(back.predicted_stage_times == plan.predicted_stage_times);
    for (size_t s = 0; s < 2; ++s) {
        REQUIRE(back.stages[s].entries.size() == plan.stages[s].entries.size());
        for (size_t i = 0; i < back.stages[s].entries.size(); ++i) {
            CHECK(back.stages[s].entries[i].module == plan.stages[s].entries[i].module);
            CHECK(back.stages[s].entries[i].option == plan.stages[s].entries[i].option);
            CHECK(back.stages[s].entries[i].gpus == plan.stages[s].entries[i].gpus);
        }
    }

    j["stages"][0]["modules"][0]["module"] = "ghost";
    CHECK_THROWS_AS(plan_from_json(j, f.preset.graph), IoError);
}

TEST_CASE("loaders reject missing versions, wrong versions and missing fields") {
    Fixture f;
    auto j = to_json(f.preset.graph);
    SUBCASE("missing version") {
        j.erase("version");
        CHECK_THROWS_AS(model_from_json(j), IoError);
    }
    SUBCASE("unsupported version") {
        j["version"] = 99;
        CHECK_THROWS_AS(model_from_json(j), IoError);
    }
    SUBCASE("missing field") {
        j.erase("modules");
        CHECK_THROWS_AS(model_from_json(j), IoError);
    }
    SUBCASE("non-object payload") {
        CHECK_THROWS_AS(model_from_json(nlohmann::json::array()), IoError);
    }
    SUBCASE("invalid graph content") {
        j["edges"].push_back({"vision", "vision"});
        CHECK_THROWS_AS(model_from_json(j), IoError);
    }
    SUBCASE("bad cluster values") {
        auto jc = to_json(ClusterSpec{});
        jc["gpu_count"] = 0;
        CHECK_THROWS_AS(cluster_from_json(jc), IoError);
    }
}

TEST_CASE("timeline CSV lists one interval per row with module ids") {
    Fixture f;
    SimulationReport r;
    r.timeline.push_back({0, 0, 0.0, 0.5, 1.0});
    r.timeline.push_back({1, 2, 0.5, 0.75, 0.5});
    auto csv = timeline_csv(r, f.preset.graph);
    CHECK(csv.find("gpu,module,start,end,quota\n") == 0);
    CHECK(csv.find("0,vision,0,0.5,1\n") != std::string::npos);
    CHECK(csv.find("1,align,0.5,0.75,0.5\n") != std::string::npos);
}

TEST_CASE("file helpers round-trip and surface I/O failures as IoError") {
    Fixture f;
    std::string path = "io_test_roundtrip.json";
    save_json(path, to_json(f.preset.graph));
    auto j = load_json(path);
    CHECK(model_from_json(j).size() == 3);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_json("does_not_exist_anywhere.json"), IoError);
    save_text(path, "not json");
    CHECK_THROWS_AS(load_json(path), IoError);
    std::remove(path.c_str());
}
