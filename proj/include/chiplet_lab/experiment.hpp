#pragma once

// Sweep driver: every (workload, arch) pair is loaded, mapped, simulated and
// analysed independently, then the successful pairs are aggregated.
//
//   out_dir/<workload>/<arch>/trace.csv, run.json, breakdown.csv, ...
//   out_dir/breakdown.csv, mcast_hist.csv, hop_hist.csv, nop_box.csv,
//           heatmap.csv, summary.json

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "chiplet_lab/analyzer.hpp"
#include "chiplet_lab/arch.hpp"
#include "chiplet_lab/mapper.hpp"
#include "chiplet_lab/netsim.hpp"
#include "chiplet_lab/report.hpp"
#include "chiplet_lab/workload.hpp"

namespace chiplet_lab {

struct ExperimentSpec {
    std::vector<std::filesystem::path> workloads;
    std::vector<std::string> archs;
    MappingPolicy policy;
    std::filesystem::path out_dir;
    SimOptions sim;
    bool normalize_grid = false;
    int jobs = 1;
    ReportFormat format = ReportFormat::Csv;
    HeatmapAverage heatmap_avg = HeatmapAverage::MeanOfFractions;
    HopMetric hop_metric = HopMetric::TreeLinks;
};

struct PairResult {
    std::filesystem::path workload_path;
    std::string arch;
    std::optional<MetricsReport> report;
    std::string error; // empty on success
};

struct RunResult {
    int exit_status = 0;
    std::vector<PairResult> pairs; // workload-major, in input order
    std::vector<MetricsReport> reports;
};

/// Everything a single pair produces, kept in memory.
struct PairOutput {
    LayerGraph graph;
    ArchConfig cfg;
    std::vector<TileAssignment> assignments;
    std::vector<Message> messages;
    TimedTrace trace;
    MetricsReport report;
};

inline PairOutput run_pair(const LayerGraph& graph, const ArchConfig& cfg, const MappingPolicy& policy,
                           const SimOptions& sim, HopMetric metric = HopMetric::TreeLinks) {
    PairOutput out{graph, cfg, {}, {}, {}, {}};
    out.assignments = place_layers(graph, cfg, policy);
    out.messages = build_messages(graph, out.assignments, cfg);
    out.trace = simulate(out.messages, out.assignments, graph, cfg, sim);
    out.report = analyze(out.trace, graph.name, cfg.label(), metric);
    return out;
}

inline void write_pair(const PairOutput& p, const std::filesystem::path& dir, const MappingPolicy& policy,
                       const SimOptions& sim, ReportFormat format) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    atomic_write(dir / "trace.csv", trace_csv(p.trace));
    const RunMeta meta{p.graph.name, p.cfg.label(), render(p.cfg), policy.to_string(), sim,
                       p.trace.makespan, p.trace.compute_cycles};
    atomic_write(dir / "run.json", to_json(meta).dump(2) + '\n');
    const std::vector<MetricsReport> one{p.report};
    emit_report(one, format, dir);
}

inline RunResult run(const ExperimentSpec& spec, std::ostream& log) {
    if (spec.workloads.empty()) throw ConfigError("no workloads given");
    if (spec.archs.empty()) throw ConfigError("no architectures given");
    if (spec.out_dir.empty()) throw ConfigError("no output directory given");
    std::error_code ec;
    std::filesystem::create_directories(spec.out_dir, ec);
    if (ec) throw IoError("cannot create '" + spec.out_dir.string() + "': " + ec.message());

    RunResult result;
    for (const auto& w : spec.workloads)
        for (const auto& a : spec.archs) result.pairs.push_back({w, a, std::nullopt, {}});

    std::mutex log_mu;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < result.pairs.size(); k = next++) {
            auto& pr = result.pairs[k];
            try {
                const auto graph = load_workload(pr.workload_path);
                const auto cfg = resolve_arch(pr.arch, spec.normalize_grid);
                const auto out = run_pair(graph, cfg, spec.policy, spec.sim, spec.hop_metric);
                write_pair(out, spec.out_dir / graph.name / cfg.label(), spec.policy, spec.sim, spec.format);
                pr.report = out.report;
                std::lock_guard lock(log_mu);
                log << "ok   " << graph.name << " @ " << cfg.label() << ": " << out.messages.size() << " messages, "
                    << out.report.n_multicast << " multicast, makespan " << out.trace.makespan << "\n";
            } catch (const std::exception& e) {
                pr.error = e.what();
                std::lock_guard lock(log_mu);
                log << "FAIL " << pr.workload_path.string() << " @ " << pr.arch << ": " << e.what() << "\n";
            }
        }
    };
    const int jobs = std::max(1, std::min<int>(spec.jobs, static_cast<int>(result.pairs.size())));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    }

    for (const auto& pr : result.pairs) {
        if (pr.report)
            result.reports.push_back(*pr.report);
        else
            result.exit_status = 1;
    }
    emit_report(result.reports, spec.format, spec.out_dir, spec.heatmap_avg);
    return result;
}

} // namespace chiplet_lab
