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

#include <unordered_map>

#include "mosaic/core.hpp"
#include "mosaic/stage_eval.hpp"

namespace mosaic {

struct OracleTooLargeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// All dependency-legal ordered partitions of the module set into stages.
// Each stage is a set of modules none of which reaches a module of the same
// stage, and every edge crosses stages forward. Enumeration: at each step the
// next stage is a non-empty subset of the currently available modules (those
// whose predecessors are all placed); any such subset is automatically an
// antichain. Limited to 8 modules: the count is the ordered Bell number,
// which explodes beyond that.
inline std::vector<std::vector<std::vector<int>>> enumerate_partitions(
    const ModelGraph& g) {
    const int n = g.size();
    if (n > 8)
        throw OracleTooLargeError("oracle enumeration limited to 8 modules, got " +
                                  std::to_string(n));
    auto reach = reachability_masks(g);
    std::vector<uint64_t> preds(n, 0);
    for (const auto& [u, v] : g.edges)
        preds[g.index_of(v)] |= uint64_t(1) << g.index_of(u);

    const uint64_t full = n == 64 ? ~uint64_t(0) : (uint64_t(1) << n) - 1;
    std::vector<std::vector<std::vector<int>>> out;
    std::vector<std::vector<int>> current;

    std::function<void(uint64_t)> rec = [&](uint64_t placed) {
        if (placed == full) {
            out.push_back(current);
            return;
        }
        uint64_t avail = 0;
        for (int m = 0; m < n; ++m)
            if (!(placed >> m & 1) && (preds[m] & ~placed) == 0)
                avail |= uint64_t(1) << m;
        // Non-empty subsets of the available set.
        for (uint64_t sub = avail; sub; sub = (sub - 1) & avail) {
            std::vector<int> stage;
            for (int m = 0; m < n; ++m)
                if (sub >> m & 1) stage.push_back(m);
            current.push_back(std::move(stage));
            rec(placed | sub);
            current.pop_back();
        }
    };
    rec(0);
    return out;
}

namespace detail {

// Exhaustive minimal stage time: branch and bound over option choices and
// placements, verified with the full interference model at the leaves. Kept
// structurally independent of the binary-search route of stage_eval so the
// two act as cross-checks.
class ExactStageSolver {
  public:
    ExactStageSolver(const PerfContext& ctx, const ClusterSpec& cluster,
                     int quota_levels)
        : ctx_(ctx), cluster_(cluster), levels_(quota_levels) {}

    // Returns nullopt when the modules cannot be co-placed at all.
    std::optional<StageEvalResult> solve(const std::vector<int>& modules) {
        modules_ = modules;
        options_.clear();
        for (int m : modules)
            options_.push_back(candidate_options(ctx_, cluster_, m, levels_));
        for (const auto& opts : options_)
            if (opts.empty()) return std::nullopt;
        best_time_ = std::numeric_limits<double>::max();
        best_alloc_.reset();
        used_units_.assign(cluster_.gpu_count, 0);
        used_mem_.assign(cluster_.gpu_count, 0.0);
        sum_b_.assign(cluster_.gpu_count, 0.0);
        residents_.assign(cluster_.gpu_count, {});
        chosen_.assign(modules_.size(), {});
        descend(0);
        if (!best_alloc_) return std::nullopt;
        return StageEvalResult{best_time_, *best_alloc_, SolverStats{}};
    }

  private:
    struct Chosen {
        CandidateOption cand;
        std::vector<int> gpus;
    };

    void descend(size_t i) {
        if (i == modules_.size()) {
            StageAllocation alloc;
            for (size_t j = 0; j < modules_.size(); ++j)
                alloc.entries.push_back(
                    {modules_[j], chosen_[j].cand.opt, chosen_[j].gpus});
            std::sort(alloc.entries.begin(), alloc.entries.end(),
                      [](const auto& a, const auto& b) { return a.module < b.module; });
            double t = stage_time(ctx_, alloc);
            if (t < best_time_) {
                best_time_ = t;
                best_alloc_ = std::move(alloc);
            }
            return;
        }
        const bool nonneg = ctx_.interference.non_negative();
        for (const auto& c : options_[i]) {
            // Sound bound: even alone, this option costs at least its base
            // latency plus the additive self term for non-negative models.
            double lb = c.base_latency;
            if (nonneg) {
                lb += ctx_.interference.e1;
                if (ctx_.include_self) lb += ctx_.interference.e2 * c.solo_bandwidth;
            }
            if (lb >= best_time_) continue;
            chosen_[i].cand = c;
            chosen_[i].gpus.clear();
            place(i, c, 0, c.opt.dp_degree);
        }
    }

    // Sound additive lower bound on any resident of GPU r (the product term
    // can shrink as residents arrive, so only the additive part is safe for
    // mid-search cuts with non-negative coefficients).
    bool admissible(int r) const {
        if (!ctx_.interference.non_negative()) return true;
        const auto& im = ctx_.interference;
        for (const auto& [slot, units] : residents_[r]) {
            double s = sum_b_[r];
            if (!ctx_.include_self) s -= chosen_[slot].cand.solo_bandwidth;
            double lb = chosen_[slot].cand.base_latency + im.e1 + im.e2 * s;
            if (lb >= best_time_) return false;
        }
        return true;
    }

    void place(size_t i, const CandidateOption& c, int from, int remaining) {
        if (remaining == 0) {
            for (int r : chosen_[i].gpus)
                if (!admissible(r)) return;
            descend(i + 1);
            return;
        }
        for (int r = from; r <= cluster_.gpu_count - remaining; ++r) {
            if (used_units_[r] + c.opt.quota_units > levels_) continue;
            if (used_mem_[r] + c.footprint > cluster_.memory_capacity * (1.0 + 1e-12))
                continue;
            used_units_[r] += c.opt.quota_units;
            used_mem_[r] += c.footprint;
            sum_b_[r] += c.solo_bandwidth;
            residents_[r].push_back({static_cast<int>(i), c.opt.quota_units});
            chosen_[i].gpus.push_back(r);
            place(i, c, r + 1, remaining - 1);
            chosen_[i].gpus.pop_back();
            residents_[r].pop_back();
            sum_b_[r] -= c.solo_bandwidth;
            used_units_[r] -= c.opt.quota_units;
            used_mem_[r] -= c.footprint;
        }
    }

    const PerfContext& ctx_;
    const ClusterSpec& cluster_;
    int levels_;
    std::vector<int> modules_;
    std::vector<std::vector<CandidateOption>> options_;
    double best_time_ = 0.0;
    std::optional<StageAllocation> best_alloc_;
    std::vector<int> used_units_;
    std::vector<double> used_mem_;
    std::vector<double> sum_b_;
    std::vector<std::vector<std::pair<int, int>>> residents_;
    std::vector<Chosen> chosen_;
};

}  // namespace detail

struct OracleResult {
    DeploymentPlan plan;
    double iteration_time = 0.0;
    long long partitions_examined = 0;
};

// Globally optimal plan by exhausting every dependency-legal staging and
// solving each distinct stage set exactly (memoized across partitions).
inline std::optional<OracleResult> brute_force_optimum(const PerfContext& ctx,
                                                       const ClusterSpec& cluster,
                                                       int quota_levels = 10) {
    const ModelGraph& g = *ctx.graph;
    auto partitions = enumerate_partitions(g);
    detail::ExactStageSolver solver(ctx, cluster, quota_levels);

    std::unordered_map<uint64_t, std::optional<StageEvalResult>> memo;
    auto stage_min = [&](const std::vector<int>& stage)
        -> const std::optional<StageEvalResult>& {
        uint64_t mask = 0;
        for (int m : stage) mask |= uint64_t(1) << m;
        auto it = memo.find(mask);
        if (it == memo.end()) it = memo.emplace(mask, solver.solve(stage)).first;
        return it->second;
    };

    std::optional<OracleResult> best;
    for (const auto& partition : partitions) {
        double total = 0.0;
        std::vector<const StageEvalResult*> stages;
        bool feasible = true;
        for (const auto& stage : partition) {
            const auto& r = stage_min(stage);
            if (!r) {
                feasible = false;
                break;
            }
            total += r->stage_time;
            stages.push_back(&*r);
            if (best && total >= best->iteration_time) {
                feasible = false;  // cannot improve; cheap cut
                break;
            }
        }
        if (!feasible || stages.size() != partition.size()) continue;
        if (!best || total < best->iteration_time) {
            OracleResult r;
            r.iteration_time = total;
            for (const auto* s : stages) {
                r.plan.stages.push_back(s->allocation);
                r.plan.predicted_stage_times.push_back(s->stage_time);
            }
            r.plan.predicted_iteration_time = total;
            best = std::move(r);
        }
    }
    if (best) best->partitions_examined = static_cast<long long>(partitions.size());
    return best;
}

}  // namespace mosaic
