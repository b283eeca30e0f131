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

#include <fstream>

#include <json.hpp>

#include "mosaic/core.hpp"
#include "mosaic/perf_model.hpp"
#include "mosaic/simulator.hpp"
#include "mosaic/solver.hpp"

namespace mosaic {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr int kFormatVersion = 1;

namespace detail {

inline void check_version(const nlohmann::json& j, const char* kind) {
    if (!j.is_object())
        throw IoError(std::string(kind) + ": expected a JSON object");
    if (!j.contains("version") || !j["version"].is_number_integer())
        throw IoError(std::string(kind) + ": missing integer 'version'");
    int v = j["version"].get<int>();
    if (v != kFormatVersion)
        throw IoError(std::string(kind) + ": unsupported version " + std::to_string(v));
}

template <typename T>
T require(const nlohmann::json& j, const char* key, const char* kind) {
    if (!j.contains(key))
        throw IoError(std::string(kind) + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string(kind) + ": bad field '" + key + "': " + e.what());
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model graph
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const ModelGraph& g) {
    nlohmann::json j;
    j["version"] = kFormatVersion;
    j["modules"] = nlohmann::json::array();
    for (const auto& m : g.modules)
        j["modules"].push_back({{"id", m.id},
                                {"name", m.name},
                                {"memory_base", m.memory_base},
                                {"tags", m.tags}});
    j["edges"] = nlohmann::json::array();
    for (const auto& [u, v] : g.edges) j["edges"].push_back({u, v});
    return j;
}

inline ModelGraph model_from_json(const nlohmann::json& j) {
    detail::check_version(j, "model");
    ModelGraph g;
    for (const auto& jm : detail::require<nlohmann::json>(j, "modules", "model")) {
        ModuleSpec m;
        m.id = detail::require<std::string>(jm, "id", "model.module");
        m.name = jm.value("name", m.id);
        m.memory_base = jm.value("memory_base", 0.0);
        m.tags = jm.value("tags", std::vector<std::string>{});
        g.modules.push_back(std::move(m));
    }
    for (const auto& je : detail::require<nlohmann::json>(j, "edges", "model")) {
        if (!je.is_array() || je.size() != 2)
            throw IoError("model: each edge must be a [from, to] pair");
        g.edges.push_back({je[0].get<std::string>(), je[1].get<std::string>()});
    }
    if (auto err = validate_graph(g))
        throw IoError("model: " + err->message);
    return g;
}

// ---------------------------------------------------------------------------
// Cluster
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const ClusterSpec& c) {
    return {{"version", kFormatVersion},
            {"gpu_count", c.gpu_count},
            {"memory_capacity", c.memory_capacity},
            {"peak_compute", c.peak_compute},
            {"peak_bandwidth", c.peak_bandwidth},
            {"interconnect_alpha", c.interconnect_alpha},
            {"interconnect_beta", c.interconnect_beta}};
}

inline ClusterSpec cluster_from_json(const nlohmann::json& j) {
    detail::check_version(j, "cluster");
    ClusterSpec c;
    c.gpu_count = detail::require<int>(j, "gpu_count", "cluster");
    c.memory_capacity = j.value("memory_capacity", c.memory_capacity);
    c.peak_compute = j.value("peak_compute", c.peak_compute);
    c.peak_bandwidth = j.value("peak_bandwidth", c.peak_bandwidth);
    c.interconnect_alpha = j.value("interconnect_alpha", c.interconnect_alpha);
    c.interconnect_beta = j.value("interconnect_beta", c.interconnect_beta);
    if (c.gpu_count < 1) throw IoError("cluster: gpu_count must be >= 1");
    if (c.memory_capacity <= 0 || c.peak_compute <= 0 || c.peak_bandwidth <= 0)
        throw IoError("cluster: capacities must be positive");
    return c;
}

// ---------------------------------------------------------------------------
// Scaling surfaces (profile files)
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const SurfaceSet& set) {
    nlohmann::json j;
    j["version"] = kFormatVersion;
    j["surfaces"] = nlohmann::json::array();
    for (const auto& surf : set.all()) {
        nlohmann::json js;
        js["module"] = surf.module_id();
        js["points"] = nlohmann::json::array();
        for (const auto& p : surf.points())
            js["points"].push_back({{"d", p.d},
                                    {"a", p.a},
                                    {"latency", p.latency},
                                    {"bandwidth_util", p.bandwidth_util},
                                    {"memory", p.memory},
                                    {"sm_active", p.sm_active}});
        j["surfaces"].push_back(std::move(js));
    }
    return j;
}

inline SurfaceSet surfaces_from_json(const nlohmann::json& j) {
    detail::check_version(j, "profile");
    std::vector<ScalingSurface> surfaces;
    for (const auto& js : detail::require<nlohmann::json>(j, "surfaces", "profile")) {
        std::string id = detail::require<std::string>(js, "module", "profile.surface");
        std::vector<SurfacePoint> pts;
        for (const auto& jp : detail::require<nlohmann::json>(js, "points", "profile.surface")) {
            SurfacePoint p;
            p.d = detail::require<int>(jp, "d", "profile.point");
            p.a = detail::require<double>(jp, "a", "profile.point");
            p.latency = detail::require<double>(jp, "latency", "profile.point");
            p.bandwidth_util = detail::require<double>(jp, "bandwidth_util", "profile.point");
            p.memory = detail::require<double>(jp, "memory", "profile.point");
            p.sm_active = jp.value("sm_active", 1.0);
            pts.push_back(p);
        }
        try {
            surfaces.emplace_back(id, std::move(pts));
        } catch (const std::invalid_argument& e) {
            throw IoError("profile: " + std::string(e.what()));
        }
    }
    return SurfaceSet(std::move(surfaces));
}

// ---------------------------------------------------------------------------
// Colocation samples and interference model
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const std::vector<ColocationSample>& samples) {
    nlohmann::json j;
    j["version"] = kFormatVersion;
    j["samples"] = nlohmann::json::array();
    for (const auto& s : samples) {
        nlohmann::json js;
        js["victim"] = s.victim;
        js["observed"] = s.observed;
        js["base"] = s.base;
        js["residents"] = nlohmann::json::array();
        for (const auto& [id, a] : s.residents)
            js["residents"].push_back({{"module", id}, {"quota", a}});
        j["samples"].push_back(std::move(js));
    }
    return j;
}

inline std::vector<ColocationSample> samples_from_json(const nlohmann::json& j) {
    detail::check_version(j, "samples");
    std::vector<ColocationSample> out;
    for (const auto& js : detail::require<nlohmann::json>(j, "samples", "samples")) {
        ColocationSample s;
        s.victim = detail::require<std::string>(js, "victim", "sample");
        s.observed = detail::require<double>(js, "observed", "sample");
        s.base = detail::require<double>(js, "base", "sample");
        for (const auto& jr : detail::require<nlohmann::json>(js, "residents", "sample"))
            s.residents.push_back({detail::require<std::string>(jr, "module", "resident"),
                                   detail::require<double>(jr, "quota", "resident")});
        out.push_back(std::move(s));
    }
    return out;
}

inline nlohmann::json to_json(const InterferenceModel& m) {
    return {{"version", kFormatVersion},
            {"e1", m.e1},
            {"e2", m.e2},
            {"e3", m.e3},
            {"r_squared", m.r_squared},
            {"sample_count", m.sample_count},
            {"additive_only", m.additive_only}};
}

inline InterferenceModel interference_from_json(const nlohmann::json& j) {
    detail::check_version(j, "interference");
    InterferenceModel m;
    m.e1 = detail::require<double>(j, "e1", "interference");
    m.e2 = detail::require<double>(j, "e2", "interference");
    m.e3 = detail::require<double>(j, "e3", "interference");
    m.r_squared = j.value("r_squared", 1.0);
    m.sample_count = j.value("sample_count", 0);
    m.additive_only = j.value("additive_only", false);
    return m;
}

// ---------------------------------------------------------------------------
// Deployment plans
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const DeploymentPlan& plan, const ModelGraph& g) {
    nlohmann::json j;
    j["version"] = kFormatVersion;
    j["predicted_iteration_time"] = plan.predicted_iteration_time;
    j["stages"] = nlohmann::json::array();
    for (size_t si = 0; si < plan.stages.size(); ++si) {
        nlohmann::json js;
        if (si < plan.predicted_stage_times.size())
            js["predicted_time"] = plan.predicted_stage_times[si];
        js["modules"] = nlohmann::json::array();
        for (const auto& e : plan.stages[si].entries)
            js["modules"].push_back({{"module", g.modules[e.module].id},
                                     {"dp_degree", e.option.dp_degree},
                                     {"quota_units", e.option.quota_units},
                                     {"quota_levels", e.option.quota_levels},
                                     {"gpus", e.gpus}});
        j["stages"].push_back(std::move(js));
    }
    return j;
}

inline DeploymentPlan plan_from_json(const nlohmann::json& j, const ModelGraph& g) {
    detail::check_version(j, "plan");
    DeploymentPlan plan;
    for (const auto& js : detail::require<nlohmann::json>(j, "stages", "plan")) {
        StageAllocation stage;
        for (const auto& jm : detail::require<nlohmann::json>(js, "modules", "plan.stage")) {
            StageAllocation::Entry e;
            std::string id = detail::require<std::string>(jm, "module", "plan.entry");
            e.module = g.index_of(id);
            if (e.module < 0) throw IoError("plan: unknown module " + id);
            e.option.dp_degree = detail::require<int>(jm, "dp_degree", "plan.entry");
            e.option.quota_units = detail::require<int>(jm, "quota_units", "plan.entry");
            e.option.quota_levels = detail::require<int>(jm, "quota_levels", "plan.entry");
            e.gpus = detail::require<std::vector<int>>(jm, "gpus", "plan.entry");
            stage.entries.push_back(std::move(e));
        }
        std::sort(stage.entries.begin(), stage.entries.end(),
                  [](const auto& a, const auto& b) { return a.module < b.module; });
        plan.stages.push_back(std::move(stage));
        if (js.contains("predicted_time"))
            plan.predicted_stage_times.push_back(js["predicted_time"].get<double>());
    }
    plan.predicted_iteration_time = j.value("predicted_iteration_time", 0.0);
    return plan;
}

// ---------------------------------------------------------------------------
// Solver trace and simulation report
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const SolveTrace& t) {
    nlohmann::json j;
    j["version"] = kFormatVersion;
    j["stage_eval_calls"] = t.stage_eval_calls;
    j["feasibility_calls"] = t.feasibility_calls;
    j["cache_hits"] = t.cache_hits;
    j["prunes"] = t.prunes;
    j["elapsed"] = t.elapsed;
    j["rounds"] = nlohmann::json::array();
    for (const auto& r : t.rounds) {
        nlohmann::json jr;
        jr["chosen_x"] = r.chosen_x;
        jr["chosen_y"] = r.chosen_y;
        jr["applied_gain"] = r.applied_gain;
        jr["candidates"] = nlohmann::json::array();
        for (const auto& c : r.candidates)
            jr["candidates"].push_back({{"mask_x", c.mask_x},
                                        {"mask_y", c.mask_y},
                                        {"pruned", c.pruned},
                                        {"cache_hit", c.cache_hit},
                                        {"gain", c.gain}});
        j["rounds"].push_back(std::move(jr));
    }
    return j;
}

inline nlohmann::json to_json(const SimulationReport& r) {
    nlohmann::json j;
    j["version"] = kFormatVersion;
    j["iteration_time"] = r.iteration_time;
    j["per_stage_times"] = r.per_stage_times;
    j["per_gpu_busy_fraction"] = r.per_gpu_busy_fraction;
    j["mean_busy_fraction"] = r.mean_busy_fraction;
    return j;
}

// GPU timeline as CSV, one interval per row.
inline std::string timeline_csv(const SimulationReport& r, const ModelGraph& g) {
    std::ostringstream os;
    os << "gpu,module,start,end,quota\n";
    os.precision(17);
    for (const auto& iv : r.timeline)
        os << iv.gpu << ',' << g.modules[iv.module].id << ',' << iv.start << ','
           << iv.end << ',' << iv.quota << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

inline nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
}

inline void save_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
}

inline void save_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << text;
}

}  // namespace mosaic
