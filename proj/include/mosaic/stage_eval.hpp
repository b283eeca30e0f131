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

#include <chrono>
#include <limits>
#include <optional>

#include "mosaic/core.hpp"
#include "mosaic/perf_model.hpp"

namespace mosaic {

struct StageInfeasibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SolverStats {
    long long feasibility_calls = 0;
    long long nodes = 0;
    long long backtracks = 0;
    double elapsed = 0.0;  // seconds

    SolverStats& operator+=(const SolverStats& o) {
        feasibility_calls += o.feasibility_calls;
        nodes += o.nodes;
        backtracks += o.backtracks;
        elapsed += o.elapsed;
        return *this;
    }
};

struct StageEvalConfig {
    int quota_levels = 10;          // 1 / granularity g
    double bisect_rel_tol = 1e-3;   // binary-search interval tolerance
};

struct StageEvalResult {
    double stage_time = 0.0;
    StageAllocation allocation;
    SolverStats stats;
};

// One quantized deployment choice of a module, annotated with everything the
// placement search needs.
struct CandidateOption {
    DeploymentOption opt;
    double base_latency = 0.0;
    double solo_bandwidth = 0.0;  // B(m, a)
    double footprint = 0.0;       // bytes per GPU replica
};

// All (d, a) pairs on the profiled d-set and the granularity lattice inside
// the surface hull, minus options whose replica footprint cannot fit a GPU.
// Sorted by base latency ascending, then (d, units) for determinism.
inline std::vector<CandidateOption> candidate_options(const PerfContext& ctx,
                                                      const ClusterSpec& cluster,
                                                      int module, int quota_levels) {
    const ScalingSurface& surf = ctx.surface(module);
    std::vector<CandidateOption> out;
    for (double dv : surf.d_values()) {
        int d = static_cast<int>(dv);
        if (d > cluster.gpu_count) continue;
        for (int units = 1; units <= quota_levels; ++units) {
            double a = static_cast<double>(units) / quota_levels;
            if (a < surf.min_a() - kAxisTolerance || a > surf.max_a() + kAxisTolerance)
                continue;
            DeploymentOption opt{d, units, quota_levels};
            double fp = ctx.footprint(module, opt);
            if (fp > cluster.memory_capacity) continue;
            auto s = surf.lookup(d, a);
            out.push_back(CandidateOption{opt, s.latency, ctx.solo_bandwidth(module, opt), fp});
        }
    }
    std::sort(out.begin(), out.end(), [](const CandidateOption& x, const CandidateOption& y) {
        if (x.base_latency != y.base_latency) return x.base_latency < y.base_latency;
        if (x.opt.dp_degree != y.opt.dp_degree) return x.opt.dp_degree < y.opt.dp_degree;
        return x.opt.quota_units < y.opt.quota_units;
    });
    return out;
}

namespace detail {

// Backtracking selection-and-placement search for one target latency tau.
// Exact quota arithmetic in granularity units; fail-first module ordering;
// GPU symmetry broken per recursion level by trying at most one GPU of each
// identical load signature. Interference pruning uses a sound lower bound
// (the product term can shrink when residents are added, so only the additive
// part participates in mid-search bounds); complete assignments are verified
// against the full model.
class FeasibilitySearch {
  public:
    FeasibilitySearch(const PerfContext& ctx, const ClusterSpec& cluster,
                      const std::vector<int>& modules,
                      const std::vector<std::vector<CandidateOption>>& options,
                      int quota_levels, SolverStats& stats)
        : ctx_(ctx), cluster_(cluster), modules_(modules), all_options_(options),
          stats_(stats), levels_(quota_levels) {}

    std::optional<StageAllocation> run(double tau) {
        ++stats_.feasibility_calls;
        tau_ = tau;
        const bool nonneg = ctx_.interference.non_negative();
        prune_interference_ = nonneg;

        filtered_.assign(modules_.size(), {});
        for (size_t i = 0; i < modules_.size(); ++i) {
            for (const auto& c : all_options_[i]) {
                double bound = c.base_latency;
                if (nonneg) {
                    bound += ctx_.interference.e1;
                    if (ctx_.include_self) bound += ctx_.interference.e2 * c.solo_bandwidth;
                }
                if (bound <= tau * (1.0 + 1e-12)) filtered_[i].push_back(c);
            }
            if (filtered_[i].empty()) return std::nullopt;
        }

        order_.resize(modules_.size());
        for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        std::sort(order_.begin(), order_.end(), [&](size_t a, size_t b) {
            if (filtered_[a].size() != filtered_[b].size())
                return filtered_[a].size() < filtered_[b].size();
            return modules_[a] < modules_[b];
        });

        // Suffix sums of minimal quota demand, for the global capacity prune.
        min_demand_suffix_.assign(order_.size() + 1, 0);
        for (int i = static_cast<int>(order_.size()) - 1; i >= 0; --i) {
            int best = std::numeric_limits<int>::max();
            for (const auto& c : filtered_[order_[i]])
                best = std::min(best, c.opt.quota_units * c.opt.dp_degree);
            min_demand_suffix_[i] = min_demand_suffix_[i + 1] + best;
        }

        used_units_.assign(cluster_.gpu_count, 0);
        used_mem_.assign(cluster_.gpu_count, 0.0);
        sum_b_.assign(cluster_.gpu_count, 0.0);
        residents_.assign(cluster_.gpu_count, {});
        chosen_.assign(modules_.size(), Chosen{});

        if (assign(0)) {
            StageAllocation alloc;
            for (size_t i = 0; i < modules_.size(); ++i)
                alloc.entries.push_back({modules_[i], chosen_[i].opt, chosen_[i].gpus});
            std::sort(alloc.entries.begin(), alloc.entries.end(),
                      [](const auto& a, const auto& b) { return a.module < b.module; });
            return alloc;
        }
        return std::nullopt;
    }

  private:
    struct Chosen {
        DeploymentOption opt;
        double solo_bandwidth = 0.0;
        double base_latency = 0.0;
        std::vector<int> gpus;
    };

    bool assign(size_t pos) {
        if (pos == order_.size()) return verify_complete();
        int free_units = 0;
        for (int u : used_units_) free_units += levels_ - u;
        if (min_demand_suffix_[pos] > free_units) return false;

        size_t slot = order_[pos];
        for (const auto& c : filtered_[slot]) {
            chosen_[slot].opt = c.opt;
            chosen_[slot].solo_bandwidth = c.solo_bandwidth;
            chosen_[slot].base_latency = c.base_latency;
            chosen_[slot].gpus.clear();
            if (place(pos, slot, c, 0, c.opt.dp_degree)) return true;
        }
        return false;
    }

    // Choose `remaining` more GPUs with index >= from.
    bool place(size_t pos, size_t slot, const CandidateOption& c, int from, int remaining) {
        if (remaining == 0) {
            ++stats_.nodes;
            if (!admissible_after_placement(slot)) {
                ++stats_.backtracks;
                return false;
            }
            if (assign(pos + 1)) return true;
            ++stats_.backtracks;
            return false;
        }
        if (cluster_.gpu_count - from < remaining) return false;
        // Homogeneous GPUs: at each level try only the first GPU of every
        // distinct resident signature (load is a function of the residents).
        std::vector<std::vector<std::pair<int, int>>> tried;
        for (int r = from; r <= cluster_.gpu_count - remaining; ++r) {
            if (used_units_[r] + c.opt.quota_units > levels_) continue;
            if (used_mem_[r] + c.footprint > cluster_.memory_capacity * (1.0 + 1e-12))
                continue;
            if (std::find(tried.begin(), tried.end(), residents_[r]) != tried.end())
                continue;
            tried.push_back(residents_[r]);

            push_module(r, slot, c);
            chosen_[slot].gpus.push_back(r);
            if (place(pos, slot, c, r + 1, remaining - 1)) return true;
            chosen_[slot].gpus.pop_back();
            pop_module(r, slot, c);
        }
        return false;
    }

    void push_module(int r, size_t slot, const CandidateOption& c) {
        used_units_[r] += c.opt.quota_units;
        used_mem_[r] += c.footprint;
        sum_b_[r] += c.solo_bandwidth;
        residents_[r].push_back({static_cast<int>(slot), c.opt.quota_units});
    }
    void pop_module(int r, size_t slot, const CandidateOption& c) {
        (void)slot;
        used_units_[r] -= c.opt.quota_units;
        used_mem_[r] -= c.footprint;
        sum_b_[r] -= c.solo_bandwidth;
        residents_[r].pop_back();
    }

    // Sound latency lower bound for every module touching the GPUs the new
    // module landed on.
    bool admissible_after_placement(size_t placed_slot) {
        if (!prune_interference_) return true;
        const auto& im = ctx_.interference;
        for (int r : chosen_[placed_slot].gpus) {
            for (const auto& [slot, units] : residents_[r]) {
                double s = sum_b_[r];
                if (!ctx_.include_self) s -= chosen_[slot].solo_bandwidth;
                double lb = chosen_[slot].base_latency + im.e1 + im.e2 * s;
                if (lb > tau_ * (1.0 + 1e-12)) return false;
            }
        }
        return true;
    }

    bool verify_complete() {
        StageAllocation alloc;
        for (size_t i = 0; i < modules_.size(); ++i)
            alloc.entries.push_back({modules_[i], chosen_[i].opt, chosen_[i].gpus});
        std::sort(alloc.entries.begin(), alloc.entries.end(),
                  [](const auto& a, const auto& b) { return a.module < b.module; });
        for (const auto& e : alloc.entries) {
            if (rectified_latency(ctx_, alloc, e.module) > tau_ * (1.0 + 1e-12))
                return false;
        }
        return true;
    }

    const PerfContext& ctx_;
    const ClusterSpec& cluster_;
    const std::vector<int>& modules_;
    const std::vector<std::vector<CandidateOption>>& all_options_;
    SolverStats& stats_;

    int levels_ = 10;
    double tau_ = 0.0;
    bool prune_interference_ = true;
    std::vector<std::vector<CandidateOption>> filtered_;
    std::vector<size_t> order_;
    std::vector<int> min_demand_suffix_;
    std::vector<int> used_units_;
    std::vector<double> used_mem_;
    std::vector<double> sum_b_;
    std::vector<std::vector<std::pair<int, int>>> residents_;  // per GPU: (slot, units)
    std::vector<Chosen> chosen_;
};

}  // namespace detail

// Solo (no co-residents beyond the module itself) rectified latency of one
// candidate option.
inline double solo_rectified(const PerfContext& ctx, const CandidateOption& c) {
    double b = c.solo_bandwidth;
    double delta = ctx.include_self ? ctx.interference.delta(b, b)
                                    : ctx.interference.delta(0.0, 0.0);
    return c.base_latency + delta;
}

// Minimal stage latency and its allocation, via binary search on a target
// latency converted into feasibility tests. The search bisects, then jumps
// the upper bound down to the achieved value of each feasible allocation and
// finishes with confirmation probes just below the incumbent, which pins the
// exact optimum on the finite option/placement lattice.
inline std::optional<StageEvalResult> stage_eval(const PerfContext& ctx,
                                                 const ClusterSpec& cluster,
                                                 const std::vector<int>& modules,
                                                 const StageEvalConfig& cfg = {}) {
    auto t0 = std::chrono::steady_clock::now();
    SolverStats stats;

    std::vector<std::vector<CandidateOption>> options;
    options.reserve(modules.size());
    for (int m : modules) {
        options.push_back(candidate_options(ctx, cluster, m, cfg.quota_levels));
        if (options.back().empty())
            throw StageInfeasibleError("module " + ctx.graph->modules[m].id +
                                       " has no feasible deployment option");
    }

    const bool nonneg = ctx.interference.non_negative();
    double tau_lo = 0.0;
    double tau_hi = 0.0;
    for (size_t i = 0; i < modules.size(); ++i) {
        double lo = std::numeric_limits<double>::max();
        double solo = std::numeric_limits<double>::max();
        for (const auto& c : options[i]) {
            double bound = c.base_latency;
            if (nonneg) {
                bound += ctx.interference.e1;
                if (ctx.include_self) bound += ctx.interference.e2 * c.solo_bandwidth;
            }
            lo = std::min(lo, bound);
            solo = std::min(solo, solo_rectified(ctx, c));
        }
        if (nonneg) tau_lo = std::max(tau_lo, lo);
        tau_hi += solo;
    }

    detail::FeasibilitySearch search(ctx, cluster, modules, options, cfg.quota_levels,
                                     stats);

    auto finish = [&](double time, StageAllocation alloc) {
        stats.elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return StageEvalResult{time, std::move(alloc), stats};
    };

    std::optional<StageAllocation> best = search.run(tau_hi);
    for (int attempt = 0; !best && attempt < 60; ++attempt) {
        tau_hi *= 2.0;
        best = search.run(tau_hi);
    }
    if (!best) {
        stats.elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return std::nullopt;
    }
    double t_best = stage_time(ctx, *best);

    double lo = std::min(tau_lo, t_best);
    while (t_best - lo > cfg.bisect_rel_tol * std::abs(t_best)) {
        double mid = 0.5 * (lo + t_best);
        if (mid >= t_best * (1.0 - 1e-12)) break;
        auto r = search.run(mid);
        if (r) {
            best = std::move(r);
            t_best = stage_time(ctx, *best);
        } else {
            lo = mid;
        }
    }
    // Confirmation probes: each success lands on a strictly smaller achieved
    // value, so this terminates on the finite value set.
    for (int guard = 0; guard < 1000; ++guard) {
        double probe = t_best * (1.0 - 1e-9);
        if (probe <= lo) break;
        auto r = search.run(probe);
        if (!r) break;
        best = std::move(r);
        t_best = stage_time(ctx, *best);
    }

    return finish(t_best, std::move(*best));
}

}  // namespace mosaic
