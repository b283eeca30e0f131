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

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <set>
#include <tuple>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mosaic/core.hpp"

namespace mosaic {

// ---------------------------------------------------------------------------
// Scaling surface: profiled latency / bandwidth / memory over (d, a).
// ---------------------------------------------------------------------------

struct SurfacePoint {
    int d = 1;
    double a = 1.0;
    double latency = 0.0;         // seconds
    double bandwidth_util = 0.0;  // fraction in [0,1]
    double memory = 0.0;          // bytes per GPU replica
    double sm_active = 1.0;       // fraction of the latency the SM partition computes
};

struct SurfaceRangeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr double kAxisTolerance = 1e-12;

class ScalingSurface {
  public:
    ScalingSurface() = default;

    // Points may arrive in any order; the grid must be complete.
    ScalingSurface(std::string module_id, std::vector<SurfacePoint> pts)
        : module_id_(std::move(module_id)) {
        for (const auto& p : pts) {
            if (p.latency <= 0) throw std::invalid_argument("surface latency must be > 0");
            if (p.bandwidth_util < 0 || p.bandwidth_util > 1)
                throw std::invalid_argument("bandwidth_util must be in [0,1]");
            if (p.memory <= 0) throw std::invalid_argument("surface memory must be > 0");
            if (p.sm_active < 0 || p.sm_active > 1)
                throw std::invalid_argument("sm_active must be in [0,1]");
            insert_axis(d_values_, static_cast<double>(p.d));
            insert_axis(a_values_, p.a);
        }
        grid_.assign(d_values_.size() * a_values_.size(), SurfacePoint{});
        std::vector<bool> filled(grid_.size(), false);
        for (const auto& p : pts) {
            size_t idx = cell(d_index(p.d), a_index(p.a));
            if (filled[idx]) throw std::invalid_argument("duplicate surface point");
            grid_[idx] = p;
            filled[idx] = true;
        }
        for (bool f : filled)
            if (!f) throw std::invalid_argument("incomplete surface grid for " + module_id_);
    }

    const std::string& module_id() const { return module_id_; }
    const std::vector<double>& d_values() const { return d_values_; }
    const std::vector<double>& a_values() const { return a_values_; }
    double min_a() const { return a_values_.front(); }
    double max_a() const { return a_values_.back(); }
    int min_d() const { return static_cast<int>(d_values_.front()); }
    int max_d() const { return static_cast<int>(d_values_.back()); }

    const SurfacePoint& at(size_t di, size_t ai) const { return grid_[cell(di, ai)]; }

    std::vector<SurfacePoint> points() const {
        std::vector<SurfacePoint> out;
        out.reserve(grid_.size());
        for (const auto& p : grid_) out.push_back(p);
        return out;
    }

    // Latency is expected to be non-increasing in the quota for a fixed DP
    // degree; violations are reported, not rejected.
    std::vector<std::string> monotonicity_warnings() const {
        std::vector<std::string> out;
        for (size_t di = 0; di < d_values_.size(); ++di) {
            for (size_t ai = 1; ai < a_values_.size(); ++ai) {
                if (at(di, ai).latency > at(di, ai - 1).latency * (1.0 + 1e-12)) {
                    std::ostringstream os;
                    os << module_id_ << ": latency increases from a=" << a_values_[ai - 1]
                       << " to a=" << a_values_[ai] << " at d=" << d_values_[di];
                    out.push_back(os.str());
                }
            }
        }
        return out;
    }

    struct BaseSample {
        double latency;
        double bandwidth_util;
        double memory;
        double sm_active;
    };

    // Exact at grid points, bilinear in (log2 d, a) between them. Queries
    // outside the profiled hull are rejected.
    BaseSample lookup(int d, double a) const {
        if (d < min_d() || d > max_d()) {
            throw SurfaceRangeError(module_id_ + ": d=" + std::to_string(d) +
                                    " outside profiled range");
        }
        if (a < min_a() - kAxisTolerance || a > max_a() + kAxisTolerance) {
            throw SurfaceRangeError(module_id_ + ": a=" + std::to_string(a) +
                                    " outside profiled range");
        }
        auto [dlo, dhi, wd] = bracket_log2(d_values_, static_cast<double>(d));
        auto [alo, ahi, wa] = bracket_linear(a_values_, a);
        if (dlo == dhi && alo == ahi) return sample(dlo, alo);  // bit-exact on grid
        auto blend = [&](auto proj) {
            double v00 = proj(at(dlo, alo)), v01 = proj(at(dlo, ahi));
            double v10 = proj(at(dhi, alo)), v11 = proj(at(dhi, ahi));
            double lo = v00 + (v01 - v00) * wa;
            double hi = v10 + (v11 - v10) * wa;
            return lo + (hi - lo) * wd;
        };
        return BaseSample{blend([](const SurfacePoint& p) { return p.latency; }),
                          blend([](const SurfacePoint& p) { return p.bandwidth_util; }),
                          blend([](const SurfacePoint& p) { return p.memory; }),
                          blend([](const SurfacePoint& p) { return p.sm_active; })};
    }

  private:
    BaseSample sample(size_t di, size_t ai) const {
        const auto& p = at(di, ai);
        return BaseSample{p.latency, p.bandwidth_util, p.memory, p.sm_active};
    }

    static void insert_axis(std::vector<double>& axis, double v) {
        for (double x : axis)
            if (std::abs(x - v) <= kAxisTolerance) return;
        axis.insert(std::lower_bound(axis.begin(), axis.end(), v), v);
    }

    size_t d_index(int d) const {
        for (size_t i = 0; i < d_values_.size(); ++i)
            if (std::abs(d_values_[i] - d) <= kAxisTolerance) return i;
        throw SurfaceRangeError("d not on grid");
    }
    size_t a_index(double a) const {
        for (size_t i = 0; i < a_values_.size(); ++i)
            if (std::abs(a_values_[i] - a) <= kAxisTolerance) return i;
        throw SurfaceRangeError("a not on grid");
    }

    // Returns (lo index, hi index, weight toward hi). Weight in log2 space for
    // the DP axis, linear for the quota axis.
    static std::tuple<size_t, size_t, double> bracket_log2(const std::vector<double>& axis,
                                                           double v) {
        return bracket(axis, v, [](double x) { return std::log2(x); });
    }
    static std::tuple<size_t, size_t, double> bracket_linear(const std::vector<double>& axis,
                                                             double v) {
        return bracket(axis, v, [](double x) { return x; });
    }
    template <typename F>
    static std::tuple<size_t, size_t, double> bracket(const std::vector<double>& axis,
                                                      double v, F scale) {
        for (size_t i = 0; i < axis.size(); ++i)
            if (std::abs(axis[i] - v) <= kAxisTolerance * std::max(1.0, std::abs(v)))
                return {i, i, 0.0};
        size_t hi = std::upper_bound(axis.begin(), axis.end(), v) - axis.begin();
        size_t lo = hi - 1;
        double w = (scale(v) - scale(axis[lo])) / (scale(axis[hi]) - scale(axis[lo]));
        return {lo, hi, w};
    }

    size_t cell(size_t di, size_t ai) const { return di * a_values_.size() + ai; }

    std::string module_id_;
    std::vector<double> d_values_;  // ascending
    std::vector<double> a_values_;  // ascending
    std::vector<SurfacePoint> grid_;
};

// Surfaces for all modules of one graph, addressable by index or id.
class SurfaceSet {
  public:
    SurfaceSet() = default;
    explicit SurfaceSet(std::vector<ScalingSurface> surfaces)
        : surfaces_(std::move(surfaces)) {
        for (size_t i = 0; i < surfaces_.size(); ++i)
            by_id_[surfaces_[i].module_id()] = i;
    }

    const ScalingSurface& by_id(const std::string& id) const {
        auto it = by_id_.find(id);
        if (it == by_id_.end())
            throw std::out_of_range("no surface for module " + id);
        return surfaces_[it->second];
    }
    bool has(const std::string& id) const { return by_id_.count(id) > 0; }
    const std::vector<ScalingSurface>& all() const { return surfaces_; }

  private:
    std::vector<ScalingSurface> surfaces_;
    std::map<std::string, size_t> by_id_;
};

// ---------------------------------------------------------------------------
// Interference model: delta = e1 + e2 * sum(B) + e3 * prod(B) over the GPU's
// co-resident modules.
// ---------------------------------------------------------------------------

struct InterferenceModel {
    double e1 = 0.0;  // seconds
    double e2 = 0.0;  // seconds
    double e3 = 0.0;  // seconds
    double r_squared = 1.0;
    int sample_count = 0;
    bool additive_only = false;

    double delta(double sum_b, double prod_b) const {
        return e1 + e2 * sum_b + (additive_only ? 0.0 : e3 * prod_b);
    }
    bool non_negative() const { return e1 >= 0 && e2 >= 0 && (additive_only || e3 >= 0); }

    // Stable identity for caches keyed on the model in use.
    uint64_t fingerprint() const {
        auto mix = [](uint64_t h, uint64_t v) {
            h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
            return h;
        };
        auto bits = [](double x) {
            uint64_t u;
            static_assert(sizeof(u) == sizeof(x));
            std::memcpy(&u, &x, sizeof(u));
            return u;
        };
        uint64_t h = additive_only ? 2 : 1;
        h = mix(h, bits(e1));
        h = mix(h, bits(e2));
        h = mix(h, bits(e3));
        return h;
    }
};

// One colocation observation: the full resident set of a GPU (victim
// included), the victim's solo base latency and its observed latency.
struct ColocationSample {
    std::string victim;
    std::vector<std::pair<std::string, double>> residents;  // (module id, quota)
    double observed = 0.0;  // seconds
    double base = 0.0;      // seconds
};

enum class FitErrorCode { InsufficientSamples, DegenerateDesignMatrix };

struct FitError : std::runtime_error {
    FitErrorCode code;
    FitError(FitErrorCode c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

namespace detail {

// Gaussian elimination with partial pivoting; returns false on singularity.
// The pivot threshold is relative to the matrix scale so that rank-deficient
// normal matrices (whose residual pivots are pure roundoff) are rejected.
template <size_t N>
bool solve_linear(std::array<std::array<double, N>, N> m, std::array<double, N>& rhs) {
    double scale = 0.0;
    for (const auto& row : m)
        for (double v : row) scale = std::max(scale, std::abs(v));
    const double tol = scale * 1e-12;
    for (size_t col = 0; col < N; ++col) {
        size_t piv = col;
        for (size_t r = col + 1; r < N; ++r)
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
        if (std::abs(m[piv][col]) <= tol) return false;
        std::swap(m[piv], m[col]);
        std::swap(rhs[piv], rhs[col]);
        for (size_t r = 0; r < N; ++r) {
            if (r == col) continue;
            double f = m[r][col] / m[col][col];
            for (size_t c = col; c < N; ++c) m[r][c] -= f * m[col][c];
            rhs[r] -= f * rhs[col];
        }
    }
    for (size_t i = 0; i < N; ++i) rhs[i] /= m[i][i];
    return true;
}

}  // namespace detail

// Sum and product of solo bandwidth utilizations over one GPU's resident set.
inline std::pair<double, double> contention_features(
    const std::vector<std::pair<std::string, double>>& residents,
    const SurfaceSet& surfaces) {
    double sum = 0.0, prod = 1.0;
    for (const auto& [id, a] : residents) {
        double b = surfaces.by_id(id).lookup(1, a).bandwidth_util;
        sum += b;
        prod *= b;
    }
    return {sum, prod};
}

// Closed-form least squares over (1, sum B, prod B) against observed - base.
// The additive-only variant drops the product column and is kept as the
// ablation baseline.
inline InterferenceModel fit_interference(const std::vector<ColocationSample>& samples,
                                          const SurfaceSet& surfaces,
                                          bool additive_only = false) {
    const size_t min_samples = additive_only ? 6 : 9;
    if (samples.size() < min_samples)
        throw FitError(FitErrorCode::InsufficientSamples,
                       "need at least " + std::to_string(min_samples) + " samples, got " +
                           std::to_string(samples.size()));
    std::set<size_t> cardinalities;
    for (const auto& s : samples) cardinalities.insert(s.residents.size());
    if (cardinalities.size() < 2)
        throw FitError(FitErrorCode::InsufficientSamples,
                       "samples must span at least 2 colocation cardinalities");

    std::vector<std::array<double, 3>> rows;
    std::vector<double> y;
    rows.reserve(samples.size());
    for (const auto& s : samples) {
        auto [sum, prod] = contention_features(s.residents, surfaces);
        rows.push_back({1.0, sum, prod});
        y.push_back(s.observed - s.base);
    }

    InterferenceModel model;
    model.additive_only = additive_only;
    model.sample_count = static_cast<int>(samples.size());
    std::vector<double> fitted(y.size(), 0.0);
    if (additive_only) {
        std::array<std::array<double, 2>, 2> ata{};
        std::array<double, 2> aty{};
        for (size_t i = 0; i < rows.size(); ++i) {
            std::array<double, 2> x{rows[i][0], rows[i][1]};
            for (int r = 0; r < 2; ++r) {
                aty[r] += x[r] * y[i];
                for (int c = 0; c < 2; ++c) ata[r][c] += x[r] * x[c];
            }
        }
        if (!detail::solve_linear<2>(ata, aty))
            throw FitError(FitErrorCode::DegenerateDesignMatrix,
                           "degenerate design matrix (constant sum B)");
        model.e1 = aty[0];
        model.e2 = aty[1];
        model.e3 = 0.0;
        for (size_t i = 0; i < rows.size(); ++i)
            fitted[i] = model.e1 + model.e2 * rows[i][1];
    } else {
        std::array<std::array<double, 3>, 3> ata{};
        std::array<double, 3> aty{};
        for (size_t i = 0; i < rows.size(); ++i) {
            for (int r = 0; r < 3; ++r) {
                aty[r] += rows[i][r] * y[i];
                for (int c = 0; c < 3; ++c) ata[r][c] += rows[i][r] * rows[i][c];
            }
        }
        if (!detail::solve_linear<3>(ata, aty))
            throw FitError(FitErrorCode::DegenerateDesignMatrix,
                           "degenerate design matrix (identical sum B and prod B)");
        model.e1 = aty[0];
        model.e2 = aty[1];
        model.e3 = aty[2];
        for (size_t i = 0; i < rows.size(); ++i)
            fitted[i] = model.e1 + model.e2 * rows[i][1] + model.e3 * rows[i][2];
    }

    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= y.size();
    double ss_tot = 0.0, ss_res = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        ss_tot += (y[i] - mean) * (y[i] - mean);
        ss_res += (y[i] - fitted[i]) * (y[i] - fitted[i]);
    }
    model.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : (ss_res > 0 ? -1e300 : 1.0);
    return model;
}

// ---------------------------------------------------------------------------
// Rectified latency
// ---------------------------------------------------------------------------

// Binds everything latency estimation needs. include_self controls whether the
// victim module participates in its own GPU's contention features (it does by
// default, matching the resident-set definition of the interference term).
struct PerfContext {
    const ModelGraph* graph = nullptr;
    const SurfaceSet* surfaces = nullptr;
    InterferenceModel interference;
    bool include_self = true;

    const ScalingSurface& surface(int module) const {
        return surfaces->by_id(graph->modules[module].id);
    }

    double solo_bandwidth(int module, const DeploymentOption& opt) const {
        return surface(module).lookup(1, opt.quota()).bandwidth_util;
    }

    double base_latency(int module, const DeploymentOption& opt) const {
        return surface(module).lookup(opt.dp_degree, opt.quota()).latency;
    }

    // Per-GPU replica footprint: profiled activation/gradient memory plus the
    // module's quota-independent parameter state.
    double footprint(int module, const DeploymentOption& opt) const {
        return surface(module).lookup(opt.dp_degree, opt.quota()).memory +
               graph->modules[module].memory_base;
    }

    double interference_delta(double sum_b, double prod_b) const {
        return interference.delta(sum_b, prod_b);
    }
};

// Rectified latency of one module inside a stage allocation: base latency at
// its option plus the worst per-GPU interference delta over its placement.
inline double rectified_latency(const PerfContext& ctx, const StageAllocation& stage,
                                int module) {
    const StageAllocation::Entry* self = stage.find(module);
    if (!self) throw std::invalid_argument("module not in stage");
    double base = ctx.base_latency(module, self->option);
    double worst = -1e300;
    for (int r : self->gpus) {
        double sum = 0.0, prod = 1.0;
        int residents = 0;
        for (const auto& e : stage.entries) {
            bool on_gpu = std::find(e.gpus.begin(), e.gpus.end(), r) != e.gpus.end();
            if (!on_gpu) continue;
            if (e.module == module && !ctx.include_self) continue;
            double b = ctx.solo_bandwidth(e.module, e.option);
            sum += b;
            prod *= b;
            ++residents;
        }
        if (residents == 0) prod = 0.0;  // no contention at all
        worst = std::max(worst, ctx.interference_delta(sum, prod));
    }
    return base + worst;
}

// Ablation path: identical pipeline with the multiplicative term suppressed.
inline double additive_only_latency(PerfContext ctx, const StageAllocation& stage,
                                    int module) {
    ctx.interference.additive_only = true;
    return rectified_latency(ctx, stage, module);
}

// Stage time implied by the model: the slowest rectified module.
inline double stage_time(const PerfContext& ctx, const StageAllocation& stage) {
    double worst = 0.0;
    for (const auto& e : stage.entries)
        worst = std::max(worst, rectified_latency(ctx, stage, e.module));
    return worst;
}

}  // namespace mosaic
