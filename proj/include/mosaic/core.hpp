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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mosaic {

// One trainable module (encoder / decoder / backbone) of a multimodal model.
struct ModuleSpec {
    std::string id;
    std::string name;
    double memory_base = 0.0;  // bytes of parameter/optimizer state, quota-independent
    std::vector<std::string> tags;
};

// The module DAG of one multimodal model.
struct ModelGraph {
    std::vector<ModuleSpec> modules;
    std::vector<std::pair<std::string, std::string>> edges;  // (upstream id, downstream id)

    int index_of(const std::string& id) const {
        for (int i = 0; i < static_cast<int>(modules.size()); ++i)
            if (modules[i].id == id) return i;
        return -1;
    }
    int size() const { return static_cast<int>(modules.size()); }
};

// Homogeneous GPU pool description. SM capacity per GPU is normalized to 1.0.
struct ClusterSpec {
    int gpu_count = 1;
    double memory_capacity = 80e9;    // bytes per GPU
    double peak_compute = 500e12;     // FLOP/s of a full GPU
    double peak_bandwidth = 3.35e12;  // bytes/s of a full GPU
    double interconnect_alpha = 5e-6; // s per allreduce hop
    double interconnect_beta = 2.2e-12; // s per gradient byte synced
};

// A module's deployment choice: DP degree and a per-replica SM quota.
// Quotas are kept as integer multiples of the search granularity so that the
// per-GPU capacity check of the placement search stays exact.
struct DeploymentOption {
    int dp_degree = 1;
    int quota_units = 1;
    int quota_levels = 10;  // 1/granularity

    double quota() const { return static_cast<double>(quota_units) / quota_levels; }

    bool operator==(const DeploymentOption& o) const {
        return dp_degree == o.dp_degree && quota_units == o.quota_units &&
               quota_levels == o.quota_levels;
    }
};

// One stage: a set of modules running concurrently, each with an option and a
// concrete GPU placement (one replica per GPU, |gpus| == dp_degree).
struct StageAllocation {
    struct Entry {
        int module = -1;  // index into ModelGraph::modules
        DeploymentOption option;
        std::vector<int> gpus;  // sorted, distinct
    };
    std::vector<Entry> entries;  // sorted by module index

    const Entry* find(int module) const {
        for (const auto& e : entries)
            if (e.module == module) return &e;
        return nullptr;
    }
    std::vector<int> module_indices() const {
        std::vector<int> out;
        out.reserve(entries.size());
        for (const auto& e : entries) out.push_back(e.module);
        return out;
    }
};

struct DeploymentPlan {
    std::vector<StageAllocation> stages;
    std::vector<double> predicted_stage_times;  // seconds, one per stage
    double predicted_iteration_time = 0.0;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class ValidationCode {
    Ok,
    CycleDetected,
    DanglingEdge,
    DuplicateModule,
    SelfEdge,
    DuplicateEdge,
    ModuleMissing,
    ModuleDuplicated,
    DependencyViolated,
    SmOvercommit,
    MemoryOvercommit,
    EmptyStage,
};

struct ValidationError {
    ValidationCode code = ValidationCode::Ok;
    std::string message;
};

inline const char* to_string(ValidationCode c) {
    switch (c) {
        case ValidationCode::Ok: return "Ok";
        case ValidationCode::CycleDetected: return "CycleDetected";
        case ValidationCode::DanglingEdge: return "DanglingEdge";
        case ValidationCode::DuplicateModule: return "DuplicateModule";
        case ValidationCode::SelfEdge: return "SelfEdge";
        case ValidationCode::DuplicateEdge: return "DuplicateEdge";
        case ValidationCode::ModuleMissing: return "ModuleMissing";
        case ValidationCode::ModuleDuplicated: return "ModuleDuplicated";
        case ValidationCode::DependencyViolated: return "DependencyViolated";
        case ValidationCode::SmOvercommit: return "SmOvercommit";
        case ValidationCode::MemoryOvercommit: return "MemoryOvercommit";
        case ValidationCode::EmptyStage: return "EmptyStage";
    }
    return "?";
}

// Returns nullopt iff the graph is a DAG with unique modules and valid,
// duplicate-free, self-loop-free edges. A detected cycle is spelled out in
// the error message.
inline std::optional<ValidationError> validate_graph(const ModelGraph& g) {
    std::set<std::string> seen;
    for (const auto& m : g.modules) {
        if (!seen.insert(m.id).second)
            return ValidationError{ValidationCode::DuplicateModule,
                                   "duplicate module id: " + m.id};
    }
    std::set<std::pair<std::string, std::string>> edge_seen;
    for (const auto& [u, v] : g.edges) {
        if (g.index_of(u) < 0)
            return ValidationError{ValidationCode::DanglingEdge,
                                   "edge references unknown module: " + u};
        if (g.index_of(v) < 0)
            return ValidationError{ValidationCode::DanglingEdge,
                                   "edge references unknown module: " + v};
        if (u == v)
            return ValidationError{ValidationCode::SelfEdge, "self edge on " + u};
        if (!edge_seen.insert({u, v}).second)
            return ValidationError{ValidationCode::DuplicateEdge,
                                   "duplicate edge " + u + " -> " + v};
    }
    // Cycle detection via iterative DFS, remembering the stack to report one cycle.
    const int n = g.size();
    std::vector<std::vector<int>> adj(n);
    for (const auto& [u, v] : g.edges) adj[g.index_of(u)].push_back(g.index_of(v));
    std::vector<int> state(n, 0);  // 0 unvisited, 1 on stack, 2 done
    std::vector<int> parent(n, -1);
    for (int root = 0; root < n; ++root) {
        if (state[root] != 0) continue;
        std::vector<std::pair<int, size_t>> stack{{root, 0}};
        state[root] = 1;
        while (!stack.empty()) {
            auto& [u, ei] = stack.back();
            if (ei < adj[u].size()) {
                int v = adj[u][ei++];
                if (state[v] == 1) {
                    std::vector<std::string> cyc{g.modules[v].id};
                    for (int w = u; w != v && w != -1; w = parent[w])
                        cyc.push_back(g.modules[w].id);
                    std::ostringstream os;
                    os << "cycle:";
                    for (auto it = cyc.rbegin(); it != cyc.rend(); ++it) os << ' ' << *it;
                    os << " -> " << g.modules[v].id;
                    return ValidationError{ValidationCode::CycleDetected, os.str()};
                }
                if (state[v] == 0) {
                    parent[v] = u;
                    state[v] = 1;
                    stack.push_back({v, 0});
                }
            } else {
                state[u] = 2;
                stack.pop_back();
            }
        }
    }
    return std::nullopt;
}

// Deterministic topological order of module indices, ties broken by module id.
inline std::vector<int> topological_order(const ModelGraph& g) {
    const int n = g.size();
    std::vector<int> indeg(n, 0);
    std::vector<std::vector<int>> adj(n);
    for (const auto& [u, v] : g.edges) {
        adj[g.index_of(u)].push_back(g.index_of(v));
        ++indeg[g.index_of(v)];
    }
    auto cmp = [&](int a, int b) { return g.modules[a].id < g.modules[b].id; };
    std::vector<int> ready;
    for (int i = 0; i < n; ++i)
        if (indeg[i] == 0) ready.push_back(i);
    std::sort(ready.begin(), ready.end(), cmp);
    std::vector<int> order;
    order.reserve(n);
    while (!ready.empty()) {
        int u = ready.front();
        ready.erase(ready.begin());
        order.push_back(u);
        for (int v : adj[u]) {
            if (--indeg[v] == 0) {
                auto pos = std::lower_bound(ready.begin(), ready.end(), v, cmp);
                ready.insert(pos, v);
            }
        }
    }
    return order;
}

// One singleton stage per module, in deterministic topological order.
inline std::vector<std::vector<int>> topological_singleton_stages(const ModelGraph& g) {
    std::vector<std::vector<int>> stages;
    for (int m : topological_order(g)) stages.push_back({m});
    return stages;
}

// Per-module transitive reachability as bitmasks (limited to 64 modules,
// enough for every workload this planner targets).
inline std::vector<uint64_t> reachability_masks(const ModelGraph& g) {
    const int n = g.size();
    if (n > 64) throw std::runtime_error("reachability_masks: more than 64 modules");
    std::vector<std::vector<int>> adj(n);
    for (const auto& [u, v] : g.edges) adj[g.index_of(u)].push_back(g.index_of(v));
    std::vector<uint64_t> reach(n, 0);
    auto order = topological_order(g);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        int u = *it;
        for (int v : adj[u]) reach[u] |= (uint64_t(1) << v) | reach[v];
    }
    return reach;
}

// Hook for memory accounting: maps (module, option) to a per-GPU footprint in
// bytes. The perf-model layer provides the real implementation; validate_plan
// takes it as a callback so core stays free of surface details.
using FootprintFn = double (*)(const void* ctx, int module, const DeploymentOption&);

struct FootprintOracle {
    const void* ctx = nullptr;
    FootprintFn fn = nullptr;
    double operator()(int module, const DeploymentOption& opt) const {
        return fn ? fn(ctx, module, opt) : 0.0;
    }
    explicit operator bool() const { return fn != nullptr; }
};

constexpr double kQuotaTolerance = 1e-9;

// Checks partition coverage, dependency order, per-GPU SM-quota sums and
// (when a footprint oracle is supplied) per-GPU memory, stage by stage.
inline std::optional<ValidationError> validate_plan(const DeploymentPlan& plan,
                                                    const ModelGraph& g,
                                                    const ClusterSpec& cluster,
                                                    FootprintOracle footprint = {}) {
    const int n = g.size();
    std::vector<int> stage_of(n, -1);
    for (int si = 0; si < static_cast<int>(plan.stages.size()); ++si) {
        const auto& stage = plan.stages[si];
        if (stage.entries.empty())
            return ValidationError{ValidationCode::EmptyStage,
                                   "stage " + std::to_string(si) + " is empty"};
        for (const auto& e : stage.entries) {
            if (e.module < 0 || e.module >= n)
                return ValidationError{ValidationCode::ModuleMissing,
                                       "stage entry references unknown module index"};
            if (stage_of[e.module] != -1)
                return ValidationError{ValidationCode::ModuleDuplicated,
                                       "module " + g.modules[e.module].id +
                                           " appears in more than one stage"};
            stage_of[e.module] = si;
            if (static_cast<int>(e.gpus.size()) != e.option.dp_degree)
                return ValidationError{ValidationCode::SmOvercommit,
                                       "placement size does not match dp degree for " +
                                           g.modules[e.module].id};
            for (int r : e.gpus)
                if (r < 0 || r >= cluster.gpu_count)
                    return ValidationError{ValidationCode::SmOvercommit,
                                           "GPU index out of range for " +
                                               g.modules[e.module].id};
        }
    }
    for (int i = 0; i < n; ++i)
        if (stage_of[i] == -1)
            return ValidationError{ValidationCode::ModuleMissing,
                                   "module " + g.modules[i].id + " not placed"};
    for (const auto& [u, v] : g.edges) {
        if (stage_of[g.index_of(u)] >= stage_of[g.index_of(v)])
            return ValidationError{ValidationCode::DependencyViolated,
                                   "edge " + u + " -> " + v + " not strictly ordered"};
    }
    // Resource sums are per stage: stages temporally multiplex the GPUs.
    for (int si = 0; si < static_cast<int>(plan.stages.size()); ++si) {
        std::vector<double> quota(cluster.gpu_count, 0.0);
        std::vector<double> mem(cluster.gpu_count, 0.0);
        for (const auto& e : plan.stages[si].entries) {
            std::set<int> distinct(e.gpus.begin(), e.gpus.end());
            if (distinct.size() != e.gpus.size())
                return ValidationError{ValidationCode::SmOvercommit,
                                       "replica co-location on one GPU for " +
                                           g.modules[e.module].id};
            for (int r : e.gpus) {
                quota[r] += e.option.quota();
                if (footprint) mem[r] += footprint(e.module, e.option);
            }
        }
        for (int r = 0; r < cluster.gpu_count; ++r) {
            if (quota[r] > 1.0 + kQuotaTolerance) {
                std::ostringstream os;
                os << "SM quota overcommit on GPU " << r << " in stage " << si
                   << ": sum=" << quota[r];
                return ValidationError{ValidationCode::SmOvercommit, os.str()};
            }
            if (footprint && mem[r] > cluster.memory_capacity * (1.0 + 1e-12)) {
                std::ostringstream os;
                os << "memory overcommit on GPU " << r << " in stage " << si;
                return ValidationError{ValidationCode::MemoryOvercommit, os.str()};
            }
        }
    }
    return std::nullopt;
}

}  // namespace mosaic
