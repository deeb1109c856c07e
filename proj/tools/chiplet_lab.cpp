// chiplet-lab: map DNN workloads onto chiplet arrays, simulate the resulting
// network-on-package traffic, and report communication metrics.
//
//   chiplet-lab run --workloads 'workloads/*.json' --arch 1x2 --arch 3x3 --arch 6x3 --out results
//   chiplet-lab analyze --dir results/resnet50/3x3
//   chiplet-lab route --arch 3x3 --src D:0:0 --dst C:2:1 --dst C:3:2

#include <glob.h>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "chiplet_lab/chiplet_lab.hpp"

namespace {

using namespace chiplet_lab;

std::vector<std::filesystem::path> expand_globs(const std::vector<std::string>& patterns) {
    std::vector<std::filesystem::path> out;
    for (const auto& pat : patterns) {
        glob_t g{};
        const int rc = ::glob(pat.c_str(), 0, nullptr, &g);
        if (rc == 0) {
            for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
        } else {
            // No match: keep the literal so the pair fails loudly.
            out.emplace_back(pat);
        }
        ::globfree(&g);
    }
    return out;
}

HopMetric parse_hop_metric(const std::string& s) {
    if (s == "links") return HopMetric::TreeLinks;
    if (s == "depth") return HopMetric::LongestPath;
    throw ParseError("unknown hop metric '" + s + "' (expected links|depth)");
}

HeatmapAverage parse_heatmap_avg(const std::string& s) {
    if (s == "mean-of-fractions") return HeatmapAverage::MeanOfFractions;
    if (s == "fraction-of-means") return HeatmapAverage::FractionOfMeans;
    throw ParseError("unknown heatmap averaging '" + s + "'");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Chiplet network-on-package traffic characterization"};
    app.require_subcommand(1);

    // run
    auto* run_cmd = app.add_subcommand("run", "Sweep workloads x architectures");
    std::vector<std::string> workload_globs, archs;
    std::string policy = "all", out_dir, format = "csv", hop_metric = "links", heatmap_avg = "mean-of-fractions";
    bool store_and_forward = false, serial_multicast = false, normalize = false;
    int jobs = 1;
    run_cmd->add_option("--workloads", workload_globs, "Workload JSON files (glob patterns allowed)")->required();
    run_cmd->add_option("--arch", archs, "Array as <rows>x<cols> or an architecture config file")->required();
    run_cmd->add_option("--policy", policy, "Mapping policy: all | pipeline:<seg_size>");
    run_cmd->add_option("--out", out_dir, "Output directory (default: $CHIPLET_LAB_OUT)");
    run_cmd->add_flag("--store-and-forward", store_and_forward, "Pay serialization at every hop");
    run_cmd->add_flag("--serial-multicast", serial_multicast, "Send multicasts as back-to-back unicasts");
    run_cmd->add_flag("--normalize", normalize, "Read AxB as rows=min(A,B), cols=max(A,B)");
    run_cmd->add_option("--jobs", jobs, "Pairs simulated concurrently")->check(CLI::PositiveNumber);
    run_cmd->add_option("--format", format, "Report format: csv | json");
    run_cmd->add_option("--hop-metric", hop_metric, "Multicast hop metric: links | depth");
    run_cmd->add_option("--heatmap-avg", heatmap_avg, "mean-of-fractions | fraction-of-means");

    // analyze
    auto* analyze_cmd = app.add_subcommand("analyze", "Recompute metrics from a dumped pair directory");
    std::string pair_dir, analyze_out;
    std::string analyze_metric = "links";
    analyze_cmd->add_option("--dir", pair_dir, "Directory holding trace.csv and run.json")->required();
    analyze_cmd->add_option("--out", analyze_out, "Write reports here instead of printing the summary");
    analyze_cmd->add_option("--hop-metric", analyze_metric, "links | depth");

    // route
    auto* route_cmd = app.add_subcommand("route", "Print the XY route or multicast tree between nodes");
    std::string route_arch, route_src;
    std::vector<std::string> route_dsts;
    route_cmd->add_option("--arch", route_arch, "Array as <rows>x<cols>")->required();
    route_cmd->add_option("--src", route_src, "Source node, e.g. C:1:0 or D:0:0")->required();
    route_cmd->add_option("--dst", route_dsts, "Destination node(s)")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            ExperimentSpec spec;
            spec.workloads = expand_globs(workload_globs);
            spec.archs = archs;
            spec.policy = MappingPolicy::parse(policy);
            if (out_dir.empty())
                if (const char* env = std::getenv("CHIPLET_LAB_OUT")) out_dir = env;
            if (out_dir.empty()) throw ConfigError("no output directory: pass --out or set CHIPLET_LAB_OUT");
            spec.out_dir = out_dir;
            spec.sim.store_and_forward = store_and_forward;
            spec.sim.serial_multicast = serial_multicast;
            spec.normalize_grid = normalize;
            spec.jobs = jobs;
            spec.format = parse_report_format(format);
            spec.hop_metric = parse_hop_metric(hop_metric);
            spec.heatmap_avg = parse_heatmap_avg(heatmap_avg);
            const auto result = run(spec, std::cerr);
            std::cerr << result.reports.size() << "/" << result.pairs.size() << " pairs succeeded\n";
            return result.exit_status;
        }
        if (*analyze_cmd) {
            const auto report = reanalyze(pair_dir, parse_hop_metric(analyze_metric));
            const std::vector<MetricsReport> one{report};
            if (analyze_out.empty())
                std::cout << summary_json(one);
            else
                emit_report(one, ReportFormat::Csv, analyze_out);
            return 0;
        }
        if (*route_cmd) {
            const auto cfg = parse_arch(route_arch);
            const auto src = parse_node(route_src);
            std::vector<NodeId> dsts;
            for (const auto& d : route_dsts) dsts.push_back(parse_node(d));
            const auto tree = multicast_tree(src, dsts, cfg);
            std::cout << "links " << tree.hop_count() << ", depth " << tree.depth << "\n";
            for (const auto& l : tree.links)
                std::cout << "  (" << l.from.x << "," << l.from.y << ") -> (" << l.to.x << "," << l.to.y << ")\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
