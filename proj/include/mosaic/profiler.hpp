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

#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "mosaic/core.hpp"
#include "mosaic/perf_model.hpp"

namespace mosaic {

// Analytic stand-in for on-GPU profiling: a roofline-style workload whose
// scaling surface is generated deterministically.
struct ModuleWorkload {
    std::string id;
    double flops_per_iter = 0.0;     // W
    double bytes_per_iter = 0.0;     // D; compute intensity = W / D
    double gradient_bytes = 0.0;     // G, synced per iteration when d > 1
    double sm_efficiency_knee = 0.5; // k in (0,1]
    double memory_act_base = 1e9;    // bytes, quota-independent activations
    double memory_per_quota = 2e9;   // bytes added at full quota
    double fixed_overhead = 0.0;     // s per iteration: launches, optimizer step
    double dp_penalty = 0.0;         // fractional straggler loss per extra replica

    double compute_intensity() const { return flops_per_iter / bytes_per_iter; }
};

inline std::vector<int> default_dp_degrees(int gpu_count) {
    std::vector<int> out;
    for (int d = 1; d <= gpu_count; d *= 2) out.push_back(d);
    return out;
}

inline std::vector<double> default_quota_grid() {
    std::vector<double> out;
    for (int i = 1; i <= 10; ++i) out.push_back(i / 10.0);
    return out;
}

// SM efficiency: ramps linearly from 0.85 toward 1.0 at the knee, flat after.
inline double sm_efficiency(double a, double knee) {
    return std::min(1.0, 0.85 + 0.15 * a / knee);
}

struct ProfilerConfig {
    double demand_scale = 1.0;  // stresses the bandwidth proxy
};

inline SurfacePoint evaluate_workload(const ModuleWorkload& w, const ClusterSpec& cluster,
                                      int d, double a,
                                      const ProfilerConfig& cfg = {}) {
    double eta = sm_efficiency(a, w.sm_efficiency_knee);
    double compute_time = (w.flops_per_iter / d) / (a * cluster.peak_compute * eta);
    double io_time = (w.bytes_per_iter / d) / cluster.peak_bandwidth;
    double sync_time = 0.0;
    if (d > 1) {
        sync_time = cluster.interconnect_alpha * std::ceil(std::log2(double(d))) +
                    cluster.interconnect_beta * w.gradient_bytes;
    }
    SurfacePoint p;
    p.d = d;
    p.a = a;
    // Replicas never scale perfectly: stragglers and gradient-sync jitter eat
    // a fixed fraction per extra replica, and each iteration pays a
    // d-independent framework overhead (kernel launches, optimizer step).
    double dp_eff = 1.0 + w.dp_penalty * (d - 1);
    p.latency = std::max(compute_time, io_time) * dp_eff + sync_time + w.fixed_overhead;
    p.sm_active = std::min(1.0, compute_time / p.latency);
    p.bandwidth_util =
        std::min(1.0, io_time / std::max(compute_time, io_time) * cfg.demand_scale);
    p.memory = w.memory_act_base + w.memory_per_quota * a + w.gradient_bytes / d;
    return p;
}

inline ScalingSurface generate_surface(const ModuleWorkload& w, const ClusterSpec& cluster,
                                       const std::vector<int>& d_set,
                                       const std::vector<double>& a_set,
                                       const ProfilerConfig& cfg = {}) {
    std::vector<SurfacePoint> pts;
    pts.reserve(d_set.size() * a_set.size());
    for (int d : d_set)
        for (double a : a_set) pts.push_back(evaluate_workload(w, cluster, d, a, cfg));
    return ScalingSurface(w.id, pts);
}

inline SurfaceSet generate_surfaces(const std::vector<ModuleWorkload>& workloads,
                                    const ClusterSpec& cluster,
                                    const ProfilerConfig& cfg = {}) {
    std::vector<ScalingSurface> out;
    out.reserve(workloads.size());
    for (const auto& w : workloads)
        out.push_back(generate_surface(w, cluster, default_dp_degrees(cluster.gpu_count),
                                       default_quota_grid(), cfg));
    return SurfaceSet(std::move(out));
}

// ---------------------------------------------------------------------------
// Colocation sample generation (training data for the interference fit)
// ---------------------------------------------------------------------------

struct SampleGenConfig {
    uint64_t seed = 1;
    int count = 200;
    double noise_sigma = 0.0;  // multiplicative log-normal noise on the delay
    int max_cardinality = 4;
};

// Draws random per-GPU colocation sets and quotas and evaluates the
// interference delay forward under the supplied ground-truth coefficients.
// Fully reproducible from the seed.
inline std::vector<ColocationSample> generate_colocation_samples(
    const std::vector<ModuleWorkload>& workloads, const SurfaceSet& surfaces,
    const InterferenceModel& ground_truth, const SampleGenConfig& cfg) {
    if (cfg.count < 9)
        throw std::invalid_argument("need at least 9 colocation samples");
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = static_cast<int>(workloads.size());
    const int max_card = std::min({cfg.max_cardinality, n, 10});

    std::vector<ColocationSample> out;
    out.reserve(cfg.count);
    for (int i = 0; i < cfg.count; ++i) {
        // Cycle cardinalities so the fit always sees at least two of them.
        int card = 1 + static_cast<int>(i % max_card);
        std::vector<int> chosen;
        while (static_cast<int>(chosen.size()) < card) {
            int m = static_cast<int>(rng() % n);
            if (std::find(chosen.begin(), chosen.end(), m) == chosen.end())
                chosen.push_back(m);
        }
        // Random decile quotas summing to at most one GPU: a random
        // composition of 10 units with one unit guaranteed per module.
        std::vector<int> units(card, 1);
        int spare = 10 - card;
        for (int u = 0; u < spare; ++u) units[rng() % card]++;
        ColocationSample s;
        for (int j = 0; j < card; ++j)
            s.residents.push_back({workloads[chosen[j]].id, units[j] / 10.0});
        s.victim = workloads[chosen[0]].id;
        s.base = surfaces.by_id(s.victim).lookup(1, units[0] / 10.0).latency;
        auto [sum_b, prod_b] = contention_features(s.residents, surfaces);
        double delta = ground_truth.delta(sum_b, prod_b);
        double noise = cfg.noise_sigma > 0 ? std::exp(cfg.noise_sigma * gauss(rng)) : 1.0;
        s.observed = s.base + delta * noise;
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

struct WorkloadPreset {
    std::string name;
    ModelGraph graph;
    std::vector<ModuleWorkload> workloads;
};

struct UnknownPresetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

// Workload scaled to desk-level iteration times. flops in TFLOPs per sample,
// ci in FLOPs/byte, params in billions; batch_scale folds the batch size in.
inline ModuleWorkload make_workload(const std::string& id, double tflops, double ci,
                                    double params_b, double knee,
                                    double batch_scale = 64.0) {
    ModuleWorkload w;
    w.id = id;
    w.flops_per_iter = tflops * 1e12 * batch_scale;
    w.bytes_per_iter = w.flops_per_iter / ci;
    w.gradient_bytes = params_b * 1e9 * 2.0;  // bf16 gradients
    w.sm_efficiency_knee = knee;
    w.memory_act_base = 1e9 + params_b * 1e9;
    w.memory_per_quota = 2e9 + 0.2e9 * tflops;
    w.fixed_overhead = 40e-3;
    w.dp_penalty = 0.02;
    return w;
}

inline ModuleSpec make_spec(const ModuleWorkload& w, const std::string& name) {
    ModuleSpec s;
    s.id = w.id;
    s.name = name;
    s.memory_base = w.gradient_bytes * 3.0;  // params + optimizer moments
    return s;
}

}  // namespace detail

// The 9 OFASys-style encoders in a fixed order; --modules selects a prefix.
inline std::vector<ModuleWorkload> ofasys_encoder_pool() {
    using detail::make_workload;
    return {
        make_workload("vision", 1.35, 18.2, 0.30, 0.55),
        make_workload("text", 0.72, 12.5, 0.15, 0.45),
        make_workload("audio", 0.95, 14.8, 0.20, 0.50),
        make_workload("video", 1.80, 22.0, 0.35, 0.60),
        make_workload("depth", 0.60, 10.0, 0.12, 0.40),
        make_workload("thermal", 0.50, 9.0, 0.10, 0.40),
        make_workload("imu", 0.15, 2.5, 0.04, 0.30),
        make_workload("box", 0.20, 5.0, 0.05, 0.35),
        make_workload("action", 0.30, 6.5, 0.07, 0.35),
    };
}

// module_count: total module budget for presets that support trimming
// (encoders + backbone); 0 keeps the preset's full roster.
inline WorkloadPreset make_preset(const std::string& name, int module_count = 0) {
    using detail::make_spec;
    using detail::make_workload;
    WorkloadPreset p;
    p.name = name;
    auto add = [&](const ModuleWorkload& w, const std::string& display) {
        p.workloads.push_back(w);
        p.graph.modules.push_back(make_spec(w, display));
    };
    if (name == "clip") {
        add(make_workload("vision", 4.17, 35.2, 0.30, 0.60), "vision encoder");
        add(make_workload("text", 1.04, 20.5, 0.12, 0.45), "text encoder");
        add(make_workload("align", 0.40, 8.0, 0.02, 0.35), "contrastive alignment");
        p.graph.edges = {{"vision", "align"}, {"text", "align"}};
    } else if (name == "qwen3vl") {
        add(make_workload("vision", 2.58, 82.4, 0.60, 0.70), "vision encoder");
        add(make_workload("text", 0.15, 2.1, 0.05, 0.30), "text encoder");
        add(make_workload("llm", 22.27, 145.2, 7.00, 0.80), "LLM backbone");
        p.graph.edges = {{"vision", "llm"}, {"text", "llm"}};
    } else if (name == "unifiedio2") {
        add(make_workload("vision", 1.48, 24.6, 0.25, 0.55), "vision encoder");
        add(make_workload("audio", 1.06, 21.8, 0.20, 0.50), "audio encoder");
        add(make_workload("text", 0.10, 4.5, 0.04, 0.30), "text encoder");
        add(make_workload("llm", 16.70, 110.5, 3.20, 0.80), "LLM backbone");
        p.graph.edges = {{"vision", "llm"}, {"audio", "llm"}, {"text", "llm"}};
    } else if (name == "imagebind") {
        // Larger batch than the other presets: six encoders drag contrastive
        // batches up, which keeps stream-management overheads proportionally
        // small.
        const double batch = 160.0;
        add(make_workload("vision", 4.17, 35.2, 0.40, 0.60, batch), "vision encoder");
        add(make_workload("audio", 2.09, 22.8, 0.25, 0.50, batch), "audio encoder");
        add(make_workload("text", 1.04, 20.5, 0.15, 0.45, batch), "text encoder");
        add(make_workload("depth", 0.90, 15.0, 0.10, 0.40, batch), "depth encoder");
        add(make_workload("thermal", 0.70, 12.0, 0.08, 0.40, batch), "thermal encoder");
        add(make_workload("imu", 0.20, 3.5, 0.04, 0.30, batch), "IMU encoder");
        add(make_workload("align", 0.50, 9.0, 0.03, 0.35, batch), "alignment head");
        for (const auto& enc : {"vision", "audio", "text", "depth", "thermal", "imu"})
            p.graph.edges.push_back({enc, "align"});
    } else if (name == "ofasys") {
        auto pool = ofasys_encoder_pool();
        int encoders = module_count > 0 ? module_count - 1 : static_cast<int>(pool.size());
        if (encoders < 1 || encoders > static_cast<int>(pool.size()))
            throw UnknownPresetError("ofasys supports 2..10 modules");
        for (int i = 0; i < encoders; ++i)
            add(pool[i], pool[i].id + " encoder");
        add(make_workload("backbone", 4.80, 41.6, 2.40, 0.70), "universal backbone");
        for (int i = 0; i < encoders; ++i)
            p.graph.edges.push_back({pool[i].id, "backbone"});
    } else {
        throw UnknownPresetError("unknown preset: " + name);
    }
    if (module_count > 0 && name != "ofasys" &&
        module_count != static_cast<int>(p.workloads.size()))
        throw UnknownPresetError("preset " + name + " has a fixed module count");
    return p;
}

inline std::vector<std::string> preset_names() {
    return {"clip", "qwen3vl", "unifiedio2", "imagebind", "ofasys"};
}

// ---------------------------------------------------------------------------
// Random instances (benchmarks, fuzzing)
// ---------------------------------------------------------------------------

struct RandomInstance {
    ModelGraph graph;
    std::vector<ModuleWorkload> workloads;
    ClusterSpec cluster;
};

// Draws DAGs shaped like real multimodal models: most instances are a set of
// encoders feeding one larger backbone (the dominant topology in practice),
// the rest are general random forward DAGs for structural diversity.
inline RandomInstance random_instance(uint64_t seed, int module_count, int gpu_count,
                                      double edge_prob = 0.4, double star_prob = 0.7) {
    std::mt19937_64 rng(seed);
    auto unif = [&](double lo, double hi) {
        return lo + (hi - lo) * (static_cast<double>(rng() >> 11) / double(1ULL << 53));
    };
    RandomInstance inst;
    inst.cluster.gpu_count = gpu_count;
    const bool star = module_count >= 2 && unif(0.0, 1.0) < star_prob;
    for (int i = 0; i < module_count; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "m%02d", i);
        const bool backbone = star && i == module_count - 1;
        double tflops = backbone ? std::exp(unif(std::log(2.0), std::log(20.0)))
                                 : std::exp(unif(std::log(0.2), std::log(4.0)));
        double ci = std::exp(unif(std::log(2.0), std::log(150.0)));
        double params = tflops * unif(0.05, 0.3);
        double knee = unif(0.3, 0.8);
        inst.workloads.push_back(detail::make_workload(id, tflops, ci, params, knee));
        inst.graph.modules.push_back(detail::make_spec(inst.workloads.back(), id));
    }
    if (star) {
        for (int i = 0; i + 1 < module_count; ++i)
            inst.graph.edges.push_back(
                {inst.graph.modules[i].id, inst.graph.modules.back().id});
    } else {
        // Edges only forward in index order keep the graph acyclic.
        for (int i = 0; i < module_count; ++i)
            for (int j = i + 1; j < module_count; ++j)
                if (unif(0.0, 1.0) < edge_prob)
                    inst.graph.edges.push_back(
                        {inst.graph.modules[i].id, inst.graph.modules[j].id});
    }
    return inst;
}

}  // namespace mosaic
