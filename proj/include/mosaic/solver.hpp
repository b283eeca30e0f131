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

#include <bit>
#include <unordered_map>

#include "mosaic/core.hpp"
#include "mosaic/stage_eval.hpp"

namespace mosaic {

struct EmptyPlanError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double iteration_time(const DeploymentPlan& plan) {
    if (plan.stages.empty()) throw EmptyPlanError("plan has no stages");
    double sum = 0.0;
    for (double t : plan.predicted_stage_times) sum += t;
    return sum;
}

// Memoized StageEval results keyed by module bitmask. The key also carries
// the granularity and interference fingerprint so entries never leak across
// configurations.
class EvalCache {
  public:
    struct Key {
        uint64_t mask;
        int levels;
        uint64_t model_fp;
        bool operator==(const Key& o) const {
            return mask == o.mask && levels == o.levels && model_fp == o.model_fp;
        }
    };
    struct KeyHash {
        size_t operator()(const Key& k) const {
            uint64_t h = k.mask * 0x9e3779b97f4a7c15ULL;
            h ^= (uint64_t(k.levels) << 32) ^ k.model_fp;
            h ^= h >> 29;
            return static_cast<size_t>(h * 0xbf58476d1ce4e5b9ULL);
        }
    };

    const StageEvalResult* find(const Key& k) {
        auto it = map_.find(k);
        if (it == map_.end()) {
            ++misses_;
            return nullptr;
        }
        ++hits_;
        return &it->second;
    }
    void insert(const Key& k, StageEvalResult r) { map_.emplace(k, std::move(r)); }
    long long hits() const { return hits_; }
    long long misses() const { return misses_; }

  private:
    std::unordered_map<Key, StageEvalResult, KeyHash> map_;
    long long hits_ = 0;
    long long misses_ = 0;
};

// True iff stages x and y (x < y in the current order) can be merged into
// position x without breaking any dependency: no module in S_x or in a stage
// strictly between x and y may reach a module of S_y.
inline bool legal_merge(const std::vector<uint64_t>& stage_masks, size_t x, size_t y,
                        const std::vector<uint64_t>& reach) {
    uint64_t upstream = stage_masks[x];
    for (size_t z = x + 1; z < y; ++z) upstream |= stage_masks[z];
    uint64_t target = stage_masks[y];
    for (int m = 0; m < 64; ++m) {
        if (!(upstream >> m & 1)) continue;
        if (reach[m] & target) return false;
    }
    return true;
}

// Skip a merge candidate when even an optimistic merged stage time cannot
// beat the best gain of the current round. T_lb is the largest per-module
// minimum base latency, a true lower bound on the merged stage time.
inline bool early_prune(double t_x, double t_y, double t_lb, double delta_best) {
    return t_x + t_y - t_lb <= delta_best;
}

struct SolveConfig {
    int quota_levels = 10;
    double bisect_rel_tol = 1e-3;
    bool enable_prune = true;
    bool enable_cache = true;
};

struct SolveTrace {
    struct Candidate {
        uint64_t mask_x = 0;
        uint64_t mask_y = 0;
        bool pruned = false;
        bool cache_hit = false;
        double gain = 0.0;  // meaningful only when evaluated
    };
    struct Round {
        std::vector<Candidate> candidates;
        uint64_t chosen_x = 0;  // 0 when the round ends the search
        uint64_t chosen_y = 0;
        double applied_gain = 0.0;
    };
    std::vector<Round> rounds;
    long long stage_eval_calls = 0;
    long long feasibility_calls = 0;
    long long cache_hits = 0;
    long long prunes = 0;
    double elapsed = 0.0;
};

struct SolveResult {
    DeploymentPlan plan;
    SolveTrace trace;
};

namespace detail {

inline std::vector<int> mask_modules(uint64_t mask) {
    std::vector<int> out;
    for (int m = 0; m < 64; ++m)
        if (mask >> m & 1) out.push_back(m);
    return out;
}

// Candidate ordering for deterministic tie-breaking: smaller merged stage
// first, then smaller merged bitmask, then smaller left-hand bitmask.
inline bool candidate_order(uint64_t mx, uint64_t my, uint64_t nx, uint64_t ny) {
    uint64_t m = mx | my, n = nx | ny;
    int cm = std::popcount(m), cn = std::popcount(n);
    if (cm != cn) return cm < cn;
    if (m != n) return m < n;
    return mx < nx;
}

}  // namespace detail

// The outer greedy agglomerative loop: start from topologically ordered
// singleton stages and repeatedly apply the legal merge with the largest
// positive gain until no merge helps.
inline SolveResult solve(const PerfContext& ctx, const ClusterSpec& cluster,
                         const SolveConfig& cfg = {}, EvalCache* cache = nullptr) {
    auto t0 = std::chrono::steady_clock::now();
    const ModelGraph& graph = *ctx.graph;
    if (graph.size() == 0) throw EmptyPlanError("model graph has no modules");
    if (graph.size() > 64) throw std::invalid_argument("solver supports up to 64 modules");

    SolveResult result;
    SolveTrace& trace = result.trace;
    auto reach = reachability_masks(graph);
    StageEvalConfig se_cfg{cfg.quota_levels, cfg.bisect_rel_tol};
    uint64_t model_fp = ctx.interference.fingerprint() ^ (ctx.include_self ? 0 : 1);

    EvalCache local_cache;
    EvalCache* cache_ptr = cache ? cache : &local_cache;

    auto evaluate = [&](uint64_t mask, bool* hit) -> std::optional<StageEvalResult> {
        EvalCache::Key key{mask, cfg.quota_levels, model_fp};
        if (cfg.enable_cache) {
            if (const StageEvalResult* found = cache_ptr->find(key)) {
                if (hit) *hit = true;
                trace.cache_hits++;
                return *found;
            }
        }
        if (hit) *hit = false;
        trace.stage_eval_calls++;
        auto r = stage_eval(ctx, cluster, detail::mask_modules(mask), se_cfg);
        if (r) {
            trace.feasibility_calls += r->stats.feasibility_calls;
            if (cfg.enable_cache) cache_ptr->insert(key, *r);
        }
        return r;
    };

    // Round 0: singleton stages in topological order.
    std::vector<uint64_t> stage_masks;
    std::vector<StageEvalResult> stage_results;
    for (const auto& stage : topological_singleton_stages(graph)) {
        uint64_t mask = uint64_t(1) << stage[0];
        auto r = evaluate(mask, nullptr);
        if (!r)
            throw StageInfeasibleError("module " + graph.modules[stage[0]].id +
                                       " cannot be placed alone on the cluster");
        stage_masks.push_back(mask);
        stage_results.push_back(std::move(*r));
    }

    // Per-module minimum base latency, for the early-prune bound.
    std::vector<double> min_base(graph.size());
    for (int m = 0; m < graph.size(); ++m) {
        double best = std::numeric_limits<double>::max();
        for (const auto& c : candidate_options(ctx, cluster, m, cfg.quota_levels))
            best = std::min(best, c.base_latency);
        min_base[m] = best;
    }

    while (stage_masks.size() > 1) {
        SolveTrace::Round round;
        // All legal pairs, scanned in tie-break order so "strictly greater"
        // selection yields the documented deterministic winner.
        std::vector<std::pair<size_t, size_t>> pairs;
        for (size_t x = 0; x < stage_masks.size(); ++x)
            for (size_t y = x + 1; y < stage_masks.size(); ++y)
                if (legal_merge(stage_masks, x, y, reach)) pairs.push_back({x, y});
        std::sort(pairs.begin(), pairs.end(), [&](const auto& a, const auto& b) {
            return detail::candidate_order(stage_masks[a.first], stage_masks[a.second],
                                           stage_masks[b.first], stage_masks[b.second]);
        });

        double delta_best = 0.0;
        int best_idx = -1;
        const StageEvalResult* best_merged = nullptr;
        std::vector<StageEvalResult> merged_results(pairs.size());
        for (size_t i = 0; i < pairs.size(); ++i) {
            auto [x, y] = pairs[i];
            SolveTrace::Candidate cand;
            cand.mask_x = stage_masks[x];
            cand.mask_y = stage_masks[y];
            double t_x = stage_results[x].stage_time;
            double t_y = stage_results[y].stage_time;
            if (cfg.enable_prune) {
                double t_lb = 0.0;
                for (int m : detail::mask_modules(cand.mask_x | cand.mask_y))
                    t_lb = std::max(t_lb, min_base[m]);
                if (early_prune(t_x, t_y, t_lb, delta_best)) {
                    cand.pruned = true;
                    trace.prunes++;
                    round.candidates.push_back(cand);
                    continue;
                }
            }
            auto merged = evaluate(cand.mask_x | cand.mask_y, &cand.cache_hit);
            if (!merged) {
                // Joint placement impossible (memory); treat as a no-gain merge.
                cand.gain = -std::numeric_limits<double>::infinity();
                round.candidates.push_back(cand);
                continue;
            }
            cand.gain = t_x + t_y - merged->stage_time;
            round.candidates.push_back(cand);
            if (cand.gain > delta_best) {
                delta_best = cand.gain;
                best_idx = static_cast<int>(i);
                merged_results[i] = std::move(*merged);
                best_merged = &merged_results[i];
            }
        }

        if (best_idx < 0) {
            trace.rounds.push_back(std::move(round));
            break;
        }
        auto [x, y] = pairs[best_idx];
        round.chosen_x = stage_masks[x];
        round.chosen_y = stage_masks[y];
        round.applied_gain = delta_best;
        stage_masks[x] |= stage_masks[y];
        stage_results[x] = *best_merged;
        stage_masks.erase(stage_masks.begin() + y);
        stage_results.erase(stage_results.begin() + y);
        trace.rounds.push_back(std::move(round));
    }

    for (size_t i = 0; i < stage_masks.size(); ++i) {
        result.plan.stages.push_back(stage_results[i].allocation);
        result.plan.predicted_stage_times.push_back(stage_results[i].stage_time);
        result.plan.predicted_iteration_time += stage_results[i].stage_time;
    }
    trace.elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace mosaic
