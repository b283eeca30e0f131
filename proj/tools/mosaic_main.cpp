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
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "mosaic/bench.hpp"
#include "mosaic/io.hpp"
#include "mosaic/oracle.hpp"
#include "mosaic/profiler.hpp"
#include "mosaic/simulator.hpp"
#include "mosaic/solver.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitIo = 4;

uint64_t default_seed() {
    if (const char* env = std::getenv("MOSAIC_SEED"))
        return std::strtoull(env, nullptr, 10);
    return 1;
}

mosaic::ModuleWorkload workload_from_json(const nlohmann::json& j) {
    mosaic::ModuleWorkload w;
    w.id = j.at("id").get<std::string>();
    w.flops_per_iter = j.at("flops_per_iter").get<double>();
    w.bytes_per_iter = j.at("bytes_per_iter").get<double>();
    w.gradient_bytes = j.value("gradient_bytes", 0.0);
    w.sm_efficiency_knee = j.value("sm_efficiency_knee", 0.5);
    w.memory_act_base = j.value("memory_act_base", 1e9);
    w.memory_per_quota = j.value("memory_per_quota", 2e9);
    if (w.flops_per_iter <= 0 || w.bytes_per_iter <= 0)
        throw std::invalid_argument("workload " + w.id +
                                    ": flops_per_iter and bytes_per_iter must be > 0");
    if (w.sm_efficiency_knee <= 0 || w.sm_efficiency_knee > 1)
        throw std::invalid_argument("workload " + w.id + ": knee must be in (0,1]");
    return w;
}

struct LoadedScenario {
    mosaic::ModelGraph graph;
    mosaic::ClusterSpec cluster;
    mosaic::SurfaceSet surfaces;
    mosaic::InterferenceModel interference;
};

LoadedScenario load_scenario(const std::string& model_path, const std::string& cluster_path,
                             const std::string& profile_path,
                             const std::string& interference_path) {
    LoadedScenario s;
    s.graph = mosaic::model_from_json(mosaic::load_json(model_path));
    s.cluster = mosaic::cluster_from_json(mosaic::load_json(cluster_path));
    s.surfaces = mosaic::surfaces_from_json(mosaic::load_json(profile_path));
    auto j = mosaic::load_json(interference_path);
    // A fit output carries both variants; accept either shape.
    s.interference = j.contains("full") ? mosaic::interference_from_json(j["full"])
                                        : mosaic::interference_from_json(j);
    for (const auto& m : s.graph.modules)
        if (!s.surfaces.has(m.id))
            throw mosaic::IoError("profile is missing a surface for module " + m.id);
    return s;
}

int cmd_profile(const std::string& preset, int modules, const std::string& workloads_path,
                int gpus, uint64_t seed, int sample_count, double noise_sigma,
                const std::string& out_dir) {
    mosaic::ClusterSpec cluster;
    cluster.gpu_count = gpus;
    mosaic::ModelGraph graph;
    std::vector<mosaic::ModuleWorkload> workloads;
    if (!workloads_path.empty()) {
        auto j = mosaic::load_json(workloads_path);
        for (const auto& jm : j.at("modules")) {
            workloads.push_back(workload_from_json(jm));
            mosaic::ModuleSpec spec;
            spec.id = workloads.back().id;
            spec.name = jm.value("name", spec.id);
            spec.memory_base = jm.value("memory_base", 0.0);
            graph.modules.push_back(std::move(spec));
        }
        for (const auto& je : j.value("edges", nlohmann::json::array()))
            graph.edges.push_back({je[0].get<std::string>(), je[1].get<std::string>()});
        if (auto err = mosaic::validate_graph(graph))
            throw std::invalid_argument(err->message);
    } else {
        mosaic::WorkloadPreset p = mosaic::make_preset(preset, modules);
        graph = std::move(p.graph);
        workloads = std::move(p.workloads);
    }

    mosaic::SurfaceSet surfaces = mosaic::generate_surfaces(workloads, cluster);
    mosaic::SampleGenConfig gen;
    gen.seed = seed;
    gen.count = sample_count;
    gen.noise_sigma = noise_sigma;
    auto samples = mosaic::generate_colocation_samples(
        workloads, surfaces, mosaic::default_ground_truth(), gen);

    mosaic::save_json(out_dir + "/model.json", mosaic::to_json(graph));
    mosaic::save_json(out_dir + "/cluster.json", mosaic::to_json(cluster));
    mosaic::save_json(out_dir + "/profile.json", mosaic::to_json(surfaces));
    mosaic::save_json(out_dir + "/samples.json", mosaic::to_json(samples));
    std::cout << "profiled " << graph.size() << " modules on " << gpus
              << " GPUs -> " << out_dir << "/{model,cluster,profile,samples}.json\n";
    return kExitOk;
}

int cmd_fit(const std::string& samples_path, const std::string& profile_path,
            const std::string& out_path) {
    auto samples = mosaic::samples_from_json(mosaic::load_json(samples_path));
    auto surfaces = mosaic::surfaces_from_json(mosaic::load_json(profile_path));
    mosaic::InterferenceModel full = mosaic::fit_interference(samples, surfaces, false);
    mosaic::InterferenceModel additive = mosaic::fit_interference(samples, surfaces, true);
    nlohmann::json j;
    j["version"] = mosaic::kFormatVersion;
    j["full"] = mosaic::to_json(full);
    j["additive"] = mosaic::to_json(additive);
    mosaic::save_json(out_path, j);
    std::cout << "model      e1            e2            e3            r_squared\n";
    auto line = [](const char* name, const mosaic::InterferenceModel& m) {
        std::printf("%-10s %-13.6e %-13.6e %-13.6e %.6f\n", name, m.e1, m.e2, m.e3,
                    m.r_squared);
    };
    line("full", full);
    line("additive", additive);
    return kExitOk;
}

int cmd_plan(const std::string& model_path, const std::string& cluster_path,
             const std::string& profile_path, const std::string& interference_path,
             double granularity, bool no_prune, bool no_cache,
             const std::string& out_path, const std::string& trace_path) {
    LoadedScenario s = load_scenario(model_path, cluster_path, profile_path,
                                     interference_path);
    mosaic::PerfContext ctx{&s.graph, &s.surfaces, s.interference};
    mosaic::SolveConfig cfg;
    cfg.quota_levels = static_cast<int>(std::lround(1.0 / granularity));
    cfg.enable_prune = !no_prune;
    cfg.enable_cache = !no_cache;
    auto solved = mosaic::solve(ctx, s.cluster, cfg);
    if (auto err = mosaic::validate_plan(solved.plan, s.graph, s.cluster))
        throw std::runtime_error("planner produced an invalid plan: " + err->message);
    mosaic::save_json(out_path, mosaic::to_json(solved.plan, s.graph));
    if (!trace_path.empty())
        mosaic::save_json(trace_path, mosaic::to_json(solved.trace));
    std::cout << "stages: " << solved.plan.stages.size() << "\n";
    for (size_t si = 0; si < solved.plan.stages.size(); ++si) {
        std::cout << "  stage " << si << " (" << std::scientific
                  << solved.plan.predicted_stage_times[si] << " s):";
        for (const auto& e : solved.plan.stages[si].entries)
            std::cout << ' ' << s.graph.modules[e.module].id << "(d=" << e.option.dp_degree
                      << ",a=" << std::defaultfloat << e.option.quota() << ")";
        std::cout << "\n";
    }
    std::cout << "predicted iteration time: " << std::scientific
              << solved.plan.predicted_iteration_time << " s\n"
              << std::defaultfloat << "stage evals: " << solved.trace.stage_eval_calls
              << ", feasibility calls: " << solved.trace.feasibility_calls
              << ", prunes: " << solved.trace.prunes
              << ", cache hits: " << solved.trace.cache_hits << "\n";
    return kExitOk;
}

int cmd_simulate(const std::string& plan_path, const std::string& model_path,
                 const std::string& cluster_path, const std::string& profile_path,
                 const std::string& interference_path, const std::string& mode,
                 int iters, uint64_t seed, double noise, const std::string& baseline,
                 const std::string& out_path, const std::string& timeline_path) {
    LoadedScenario s = load_scenario(model_path, cluster_path, profile_path,
                                     interference_path);
    mosaic::PerfContext ctx{&s.graph, &s.surfaces, s.interference};
    mosaic::SimConfig cfg;
    cfg.iterations = iters;
    cfg.seed = seed;
    cfg.perturbation_sigma = noise;
    cfg.stream_mode = mode == "on_demand" ? mosaic::StreamMode::OnDemand
                                          : mosaic::StreamMode::Pooled;

    mosaic::DeploymentPlan plan;
    if (!baseline.empty()) {
        auto policy = baseline == "megatron" ? mosaic::BaselinePolicy::Megatron
                                             : mosaic::BaselinePolicy::DistMM;
        plan = mosaic::make_baseline_plan(ctx, s.cluster, policy);
    } else {
        plan = mosaic::plan_from_json(mosaic::load_json(plan_path), s.graph);
    }
    if (auto err = mosaic::validate_plan(plan, s.graph, s.cluster)) {
        std::cerr << "plan validation failed: " << err->message << "\n";
        return kExitValidation;
    }
    auto report = mosaic::simulate(ctx, s.cluster, plan, cfg);
    if (!out_path.empty()) mosaic::save_json(out_path, mosaic::to_json(report));
    if (!timeline_path.empty())
        mosaic::save_text(timeline_path, mosaic::timeline_csv(report, s.graph));
    std::cout << "iteration time: " << std::scientific << report.iteration_time << " s\n"
              << std::defaultfloat;
    std::cout << "per-GPU busy fraction:";
    for (double b : report.per_gpu_busy_fraction) std::cout << ' ' << b;
    std::cout << "\nmean busy fraction: " << report.mean_busy_fraction << "\n";
    return kExitOk;
}

int cmd_oracle(const std::string& model_path, const std::string& cluster_path,
               const std::string& profile_path, const std::string& interference_path,
               double granularity, const std::string& out_path) {
    LoadedScenario s = load_scenario(model_path, cluster_path, profile_path,
                                     interference_path);
    mosaic::PerfContext ctx{&s.graph, &s.surfaces, s.interference};
    int levels = static_cast<int>(std::lround(1.0 / granularity));
    auto oracle = mosaic::brute_force_optimum(ctx, s.cluster, levels);
    if (!oracle) {
        std::cerr << "no feasible plan exists\n";
        return kExitInfeasible;
    }
    mosaic::SolveConfig cfg;
    cfg.quota_levels = levels;
    auto solved = mosaic::solve(ctx, s.cluster, cfg);
    if (!out_path.empty())
        mosaic::save_json(out_path, mosaic::to_json(oracle->plan, s.graph));
    std::cout << "oracle time: " << std::scientific << oracle->iteration_time
              << " s over " << std::defaultfloat << oracle->partitions_examined
              << " partitions\n"
              << "planner time: " << std::scientific
              << solved.plan.predicted_iteration_time << " s\n"
              << std::defaultfloat << "optimality ratio: "
              << oracle->iteration_time / solved.plan.predicted_iteration_time << "\n";
    return kExitOk;
}

int cmd_bench(const std::string& suite, int seeds, const std::string& preset, int modules,
              int gpus, const std::string& out_path) {
    mosaic::BenchResult table;
    if (suite == "optimality") {
        auto stats = mosaic::bench_optimality(seeds, modules > 0 ? modules : 4, gpus, 4);
        table = stats.table;
        std::cout << "exact fraction: " << stats.exact_fraction
                  << ", median ratio: " << stats.median_ratio << "\n";
    } else if (suite == "scale") {
        table = mosaic::bench_scale(preset, {2, 4, 8});
    } else if (suite == "granularity") {
        mosaic::WorkloadPreset p = mosaic::make_preset(preset, modules);
        mosaic::ClusterSpec cluster;
        cluster.gpu_count = gpus;
        mosaic::SurfaceSet surfaces = mosaic::generate_surfaces(p.workloads, cluster);
        table = mosaic::granularity_table(
            mosaic::bench_granularity(p.graph, surfaces, cluster));
    } else if (suite == "ablation") {
        table = mosaic::bench_ablation(seeds);
    } else {
        throw mosaic::UnknownSuiteError("unknown suite: " + suite);
    }
    std::string csv = table.csv();
    if (!out_path.empty())
        mosaic::save_text(out_path, csv);
    else
        std::cout << csv;
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"planner and simulator for temporal-spatial GPU multiplexing of "
                 "DAG-structured multimodal training"};
    app.require_subcommand(1);
    uint64_t seed = default_seed();

    // profile
    auto* profile = app.add_subcommand("profile", "generate synthetic scaling surfaces");
    std::string preset = "clip", workloads_path, out_dir = ".";
    int modules = 0, gpus = 4, sample_count = 200;
    double noise_sigma = 0.0;
    profile->add_option("--preset", preset, "preset name or 'custom'");
    profile->add_option("--modules", modules, "module budget for trimmable presets");
    profile->add_option("--workloads", workloads_path, "custom workload JSON file");
    profile->add_option("--gpus", gpus, "GPU count")->check(CLI::PositiveNumber);
    profile->add_option("--samples", sample_count, "colocation sample count");
    profile->add_option("--noise", noise_sigma, "colocation sample noise sigma");
    profile->add_option("--seed", seed, "RNG seed");
    profile->add_option("--out", out_dir, "output directory");

    // fit
    auto* fit = app.add_subcommand("fit", "fit the interference model");
    std::string samples_path, profile_path, fit_out = "interference.json";
    fit->add_option("--samples", samples_path, "colocation samples JSON")->required();
    fit->add_option("--profile", profile_path, "surfaces JSON")->required();
    fit->add_option("--out", fit_out, "output path");

    // plan
    auto* plan = app.add_subcommand("plan", "solve for a deployment plan");
    std::string model_path, cluster_path, interference_path;
    std::string plan_out = "plan.json", trace_out;
    double granularity = 0.1;
    bool no_prune = false, no_cache = false;
    plan->add_option("--model", model_path, "model JSON")->required();
    plan->add_option("--cluster", cluster_path, "cluster JSON")->required();
    plan->add_option("--profile", profile_path, "surfaces JSON")->required();
    plan->add_option("--interference", interference_path, "interference JSON")->required();
    plan->add_option("--granularity", granularity, "quota granularity g")
        ->check(CLI::Range(1e-3, 1.0));
    plan->add_flag("--no-prune", no_prune, "disable merge-candidate pruning");
    plan->add_flag("--no-cache", no_cache, "disable the stage-eval cache");
    plan->add_option("--out", plan_out, "plan output path");
    plan->add_option("--trace", trace_out, "trace output path");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "replay a plan");
    std::string plan_path, mode = "pooled", baseline, report_out, timeline_out;
    int iters = 1;
    double sim_noise = 0.0;
    simulate->add_option("--plan", plan_path, "plan JSON (omit with --baseline)");
    simulate->add_option("--model", model_path, "model JSON")->required();
    simulate->add_option("--cluster", cluster_path, "cluster JSON")->required();
    simulate->add_option("--profile", profile_path, "surfaces JSON")->required();
    simulate->add_option("--interference", interference_path, "interference JSON")
        ->required();
    simulate->add_option("--mode", mode, "pooled | on_demand")
        ->check(CLI::IsMember({"pooled", "on_demand"}));
    simulate->add_option("--iters", iters, "iterations")->check(CLI::PositiveNumber);
    simulate->add_option("--seed", seed, "RNG seed");
    simulate->add_option("--noise", sim_noise, "duration perturbation sigma");
    simulate->add_option("--baseline", baseline, "megatron | distmm")
        ->check(CLI::IsMember({"megatron", "distmm"}));
    simulate->add_option("--out", report_out, "report output path");
    simulate->add_option("--timeline", timeline_out, "timeline CSV path");

    // oracle
    auto* oracle = app.add_subcommand("oracle", "brute-force optimum (<= 8 modules)");
    std::string oracle_out;
    double oracle_g = 0.25;
    oracle->add_option("--model", model_path, "model JSON")->required();
    oracle->add_option("--cluster", cluster_path, "cluster JSON")->required();
    oracle->add_option("--profile", profile_path, "surfaces JSON")->required();
    oracle->add_option("--interference", interference_path, "interference JSON")
        ->required();
    oracle->add_option("--granularity", oracle_g, "quota granularity g");
    oracle->add_option("--out", oracle_out, "oracle plan output path");

    // bench
    auto* bench = app.add_subcommand("bench", "run a benchmark suite");
    std::string suite, bench_preset = "ofasys", bench_out;
    int bench_seeds = 20, bench_modules = 0, bench_gpus = 4;
    bench->add_option("suite", suite, "optimality | scale | granularity | ablation")
        ->required();
    bench->add_option("--seeds", bench_seeds, "seed count");
    bench->add_option("--preset", bench_preset, "preset for scale/granularity");
    bench->add_option("--modules", bench_modules, "module count");
    bench->add_option("--gpus", bench_gpus, "GPU count");
    bench->add_option("--out", bench_out, "CSV output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (profile->parsed())
            return cmd_profile(preset, modules, workloads_path, gpus, seed, sample_count,
                               noise_sigma, out_dir);
        if (fit->parsed()) return cmd_fit(samples_path, profile_path, fit_out);
        if (plan->parsed())
            return cmd_plan(model_path, cluster_path, profile_path, interference_path,
                            granularity, no_prune, no_cache, plan_out, trace_out);
        if (simulate->parsed())
            return cmd_simulate(plan_path, model_path, cluster_path, profile_path,
                                interference_path, mode, iters, seed, sim_noise, baseline,
                                report_out, timeline_out);
        if (oracle->parsed())
            return cmd_oracle(model_path, cluster_path, profile_path, interference_path,
                              oracle_g, oracle_out);
        if (bench->parsed())
            return cmd_bench(suite, bench_seeds, bench_preset, bench_modules, bench_gpus,
                             bench_out);
    } catch (const mosaic::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const mosaic::StageInfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const mosaic::InfeasibleBaselineError& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const mosaic::OracleTooLargeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitOk;
}
