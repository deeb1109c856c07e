#pragma once

// File formats:
//   trace.csv       msg_id,layer_id,class,src,dsts,bytes,hops,is_multicast,start,end
//   run.json        run metadata needed to re-analyze a trace.csv
//   breakdown.csv   workload,config,noc_cycles,nop_cycles,dram_cycles,
//                   total_comm_cycles,makespan,frac_noc,frac_nop,frac_dram
//   mcast_hist.csv  workload,config,n_dsts,messages
//   hop_hist.csv    workload,config,kind,hops,messages
//   nop_box.csv     config,n,min,q1,median,q3,max
//   heatmap.csv     workload,n_configs,noc,nop,dram,compute
//   summary.json    array of MetricsReport objects

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "chiplet_lab/analyzer.hpp"
#include "chiplet_lab/arch.hpp"
#include "chiplet_lab/detail/strings.hpp"
#include "chiplet_lab/error.hpp"
#include "chiplet_lab/mapper.hpp"
#include "chiplet_lab/netsim.hpp"

namespace chiplet_lab {

inline constexpr std::string_view kTraceHeader = "msg_id,layer_id,class,src,dsts,bytes,hops,is_multicast,start,end";
inline constexpr std::string_view kBreakdownHeader =
    "workload,config,noc_cycles,nop_cycles,dram_cycles,total_comm_cycles,makespan,frac_noc,frac_nop,frac_dram";
inline constexpr std::string_view kMcastHeader = "workload,config,n_dsts,messages";
inline constexpr std::string_view kHopHeader = "workload,config,kind,hops,messages";
inline constexpr std::string_view kNopBoxHeader = "config,n,min,q1,median,q3,max";
inline constexpr std::string_view kHeatmapHeader = "workload,n_configs,noc,nop,dram,compute";

/// Writes via a temporary sibling and rename, so readers never see a partial file.
inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// --- trace dump ------------------------------------------------------------

inline std::string trace_csv(std::span<const TraceRow> rows) {
    std::string out(kTraceHeader);
    out += '\n';
    for (const auto& r : rows) {
        out += std::to_string(r.msg_id) + ',' + r.layer_id + ',' + to_string(r.cls) + ',' + to_string(r.src) + ',';
        for (std::size_t i = 0; i < r.dsts.size(); ++i) {
            if (i) out += '|';
            out += to_string(r.dsts[i]);
        }
        out += ',' + std::to_string(r.bytes) + ',' + std::to_string(r.hops) + ',' + (r.is_multicast ? "1" : "0") +
               ',' + std::to_string(r.start) + ',' + std::to_string(r.end) + '\n';
    }
    return out;
}

inline std::string trace_csv(const TimedTrace& t) {
    const auto rows = to_rows(t);
    return trace_csv(rows);
}

inline std::vector<TraceRow> parse_trace_csv(std::string_view text) {
    std::vector<TraceRow> rows;
    const auto lines = detail::split(text, '\n');
    if (lines.empty() || detail::trim(lines[0]) != kTraceHeader) throw ParseError("trace: missing or wrong header");
    for (std::size_t n = 1; n < lines.size(); ++n) {
        const auto line = detail::trim(lines[n]);
        if (line.empty()) continue;
        const auto f = detail::split(line, ',');
        auto bad = [n](const std::string& what) { return ParseError("trace line " + std::to_string(n + 1) + ": " + what); };
        if (f.size() != 10) throw bad("expected 10 columns, got " + std::to_string(f.size()));
        TraceRow r;
        auto num = [&](std::string_view s, const char* col) {
            auto v = detail::parse_int<std::int64_t>(s);
            if (!v) throw bad(std::string("bad ") + col);
            return *v;
        };
        r.msg_id = static_cast<std::uint64_t>(num(f[0], "msg_id"));
        r.layer_id = std::string(f[1]);
        r.cls = parse_traffic_class(f[2]);
        r.src = parse_node(f[3]);
        for (auto d : detail::split(f[4], '|')) r.dsts.push_back(parse_node(d));
        r.bytes = num(f[5], "bytes");
        r.hops = num(f[6], "hops");
        r.is_multicast = num(f[7], "is_multicast") != 0;
        r.start = num(f[8], "start");
        r.end = num(f[9], "end");
        rows.push_back(std::move(r));
    }
    return rows;
}

// --- run metadata -----------------------------------------------------------

struct RunMeta {
    std::string workload;
    std::string config;
    std::string arch; // render(ArchConfig)
    std::string policy;
    SimOptions sim;
    std::int64_t makespan = 0;
    std::int64_t compute_cycles = 0;
    bool operator==(const RunMeta&) const = default;
};

inline nlohmann::json to_json(const RunMeta& m) {
    return {{"workload", m.workload},
            {"config", m.config},
            {"arch", m.arch},
            {"policy", m.policy},
            {"store_and_forward", m.sim.store_and_forward},
            {"serial_multicast", m.sim.serial_multicast},
            {"makespan", m.makespan},
            {"compute_cycles", m.compute_cycles}};
}

inline RunMeta run_meta_from_json(const nlohmann::json& j) {
    try {
        RunMeta m;
        m.workload = j.at("workload").get<std::string>();
        m.config = j.at("config").get<std::string>();
        m.arch = j.at("arch").get<std::string>();
        m.policy = j.at("policy").get<std::string>();
        m.sim.store_and_forward = j.at("store_and_forward").get<bool>();
        m.sim.serial_multicast = j.at("serial_multicast").get<bool>();
        m.makespan = j.at("makespan").get<std::int64_t>();
        m.compute_cycles = j.at("compute_cycles").get<std::int64_t>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("run metadata: ") + e.what());
    }
}

/// Recomputes the metrics of a pair directory from trace.csv and run.json.
inline MetricsReport reanalyze(const std::filesystem::path& dir, HopMetric metric = HopMetric::TreeLinks) {
    const auto meta = run_meta_from_json(nlohmann::json::parse(read_file(dir / "run.json")));
    auto rows = parse_trace_csv(read_file(dir / "trace.csv"));
    const auto cfg = parse_arch(meta.arch);
    const auto busy = recompute_busy(rows, cfg, meta.sim);
    if (metric == HopMetric::LongestPath) apply_longest_path(rows, cfg);
    return make_report(meta.workload, meta.config, rows, busy, meta.makespan, meta.compute_cycles);
}

// --- reports ---------------------------------------------------------------

inline std::vector<MetricsReport> sorted_reports(std::span<const MetricsReport> reports) {
    std::vector<MetricsReport> out(reports.begin(), reports.end());
    std::sort(out.begin(), out.end(), [](const MetricsReport& a, const MetricsReport& b) {
        return std::tie(a.workload, a.config) < std::tie(b.workload, b.config);
    });
    return out;
}

inline std::string breakdown_csv(std::span<const MetricsReport> reports) {
    using detail::format_double;
    std::string out(kBreakdownHeader);
    out += '\n';
    for (const auto& r : sorted_reports(reports))
        out += r.workload + ',' + r.config + ',' + std::to_string(r.noc_cycles) + ',' + std::to_string(r.nop_cycles) +
               ',' + std::to_string(r.dram_cycles) + ',' + std::to_string(r.total_comm_cycles) + ',' +
               std::to_string(r.makespan) + ',' + format_double(r.frac_noc) + ',' + format_double(r.frac_nop) + ',' +
               format_double(r.frac_dram) + '\n';
    return out;
}

inline std::string mcast_hist_csv(std::span<const MetricsReport> reports) {
    std::string out(kMcastHeader);
    out += '\n';
    for (const auto& r : sorted_reports(reports))
        for (const auto& [n, count] : r.mcast_hist)
            out += r.workload + ',' + r.config + ',' + std::to_string(n) + ',' + std::to_string(count) + '\n';
    return out;
}

inline std::string hop_hist_csv(std::span<const MetricsReport> reports) {
    std::string out(kHopHeader);
    out += '\n';
    for (const auto& r : sorted_reports(reports))
        for (const auto& [key, count] : r.hop_hist)
            out += r.workload + ',' + r.config + ',' + to_string(key.first) + ',' + std::to_string(key.second) + ',' +
                   std::to_string(count) + '\n';
    return out;
}

inline std::string nop_box_csv(std::span<const MetricsReport> reports) {
    using detail::format_double;
    std::string out(kNopBoxHeader);
    out += '\n';
    for (const auto& [config, b] : nop_ratio_stats(reports))
        out += config + ',' + std::to_string(b.n) + ',' + format_double(b.min) + ',' + format_double(b.q1) + ',' +
               format_double(b.median) + ',' + format_double(b.q3) + ',' + format_double(b.max) + '\n';
    return out;
}

inline std::string heatmap_csv(std::span<const MetricsReport> reports, HeatmapAverage avg) {
    using detail::format_double;
    std::string out(kHeatmapHeader);
    out += '\n';
    for (const auto& h : heatmap(reports, avg))
        out += h.workload + ',' + std::to_string(h.n_configs) + ',' + format_double(h.noc) + ',' +
               format_double(h.nop) + ',' + format_double(h.dram) + ',' + format_double(h.compute) + '\n';
    return out;
}

inline nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json mh = nlohmann::json::array();
    for (const auto& [n, c] : r.mcast_hist) mh.push_back({{"n_dsts", n}, {"messages", c}});
    nlohmann::json hh = nlohmann::json::array();
    for (const auto& [k, c] : r.hop_hist) hh.push_back({{"kind", to_string(k.first)}, {"hops", k.second}, {"messages", c}});
    return {{"workload", r.workload},
            {"config", r.config},
            {"noc_cycles", r.noc_cycles},
            {"nop_cycles", r.nop_cycles},
            {"dram_cycles", r.dram_cycles},
            {"total_comm_cycles", r.total_comm_cycles},
            {"makespan", r.makespan},
            {"compute_cycles", r.compute_cycles},
            {"frac_noc", r.frac_noc},
            {"frac_nop", r.frac_nop},
            {"frac_dram", r.frac_dram},
            {"zero_comm", r.zero_comm},
            {"exec_frac_noc", r.exec_frac_noc},
            {"exec_frac_nop", r.exec_frac_nop},
            {"exec_frac_dram", r.exec_frac_dram},
            {"exec_frac_compute", r.exec_frac_compute},
            {"n_messages", r.n_messages},
            {"n_unicast", r.n_unicast},
            {"n_multicast", r.n_multicast},
            {"mcast_hist", mh},
            {"hop_hist", hh}};
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
    try {
        MetricsReport r;
        r.workload = j.at("workload").get<std::string>();
        r.config = j.at("config").get<std::string>();
        r.noc_cycles = j.at("noc_cycles").get<std::int64_t>();
        r.nop_cycles = j.at("nop_cycles").get<std::int64_t>();
        r.dram_cycles = j.at("dram_cycles").get<std::int64_t>();
        r.total_comm_cycles = j.at("total_comm_cycles").get<std::int64_t>();
        r.makespan = j.at("makespan").get<std::int64_t>();
        r.compute_cycles = j.at("compute_cycles").get<std::int64_t>();
        r.frac_noc = j.at("frac_noc").get<double>();
        r.frac_nop = j.at("frac_nop").get<double>();
        r.frac_dram = j.at("frac_dram").get<double>();
        r.zero_comm = j.at("zero_comm").get<bool>();
        r.exec_frac_noc = j.at("exec_frac_noc").get<double>();
        r.exec_frac_nop = j.at("exec_frac_nop").get<double>();
        r.exec_frac_dram = j.at("exec_frac_dram").get<double>();
        r.exec_frac_compute = j.at("exec_frac_compute").get<double>();
        r.n_messages = j.at("n_messages").get<std::int64_t>();
        r.n_unicast = j.at("n_unicast").get<std::int64_t>();
        r.n_multicast = j.at("n_multicast").get<std::int64_t>();
        for (const auto& e : j.at("mcast_hist")) r.mcast_hist[e.at("n_dsts").get<std::int64_t>()] = e.at("messages").get<std::int64_t>();
        for (const auto& e : j.at("hop_hist")) {
            const auto kind = e.at("kind").get<std::string>();
            if (kind != "unicast" && kind != "multicast") throw ParseError("summary: unknown message kind '" + kind + "'");
            r.hop_hist[{kind == "unicast" ? MessageKind::Unicast : MessageKind::Multicast, e.at("hops").get<std::int64_t>()}] =
                e.at("messages").get<std::int64_t>();
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("summary: ") + e.what());
    }
}

inline std::string summary_json(std::span<const MetricsReport> reports) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : sorted_reports(reports)) arr.push_back(to_json(r));
    return arr.dump(2) + '\n';
}

inline std::vector<MetricsReport> parse_summary_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("summary: ") + e.what());
    }
    if (!j.is_array()) throw ParseError("summary: expected a JSON array");
    std::vector<MetricsReport> out;
    for (const auto& e : j) out.push_back(report_from_json(e));
    return out;
}

enum class ReportFormat { Csv, Json };

inline ReportFormat parse_report_format(std::string_view s) {
    if (s == "csv") return ReportFormat::Csv;
    if (s == "json") return ReportFormat::Json;
    throw ParseError("unknown report format '" + std::string(s) + "' (expected csv|json)");
}

/// Writes the report set into `out_dir`. `csv` writes the CSV tables and
/// summary.json; `json` writes summary.json only. Returns the files written.
inline std::vector<std::filesystem::path> emit_report(std::span<const MetricsReport> reports, ReportFormat format,
                                                      const std::filesystem::path& out_dir,
                                                      HeatmapAverage avg = HeatmapAverage::MeanOfFractions) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
    std::vector<std::filesystem::path> written;
    auto put = [&](const char* name, const std::string& content) {
        atomic_write(out_dir / name, content);
        written.push_back(out_dir / name);
    };
    if (format == ReportFormat::Csv) {
        put("breakdown.csv", breakdown_csv(reports));
        put("mcast_hist.csv", mcast_hist_csv(reports));
        put("hop_hist.csv", hop_hist_csv(reports));
        if (!reports.empty()) put("nop_box.csv", nop_box_csv(reports));
        put("heatmap.csv", heatmap_csv(reports, avg));
    }
    put("summary.json", summary_json(reports));
    return written;
}

} // namespace chiplet_lab
