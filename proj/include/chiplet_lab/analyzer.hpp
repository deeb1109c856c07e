#pragma once

// Communication metrics over a simulated trace:
//   * time breakdown across NoC / NoP / DRAM
//   * unicast and multicast message counts
//   * NoP hops per message, per kind
//   * destination-set sizes of multicasts
// plus box statistics of the NoP share across workloads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chiplet_lab/arch.hpp"
#include "chiplet_lab/error.hpp"
#include "chiplet_lab/mapper.hpp"
#include "chiplet_lab/netsim.hpp"

namespace chiplet_lab {

enum class MessageKind { Unicast, Multicast };

inline const char* to_string(MessageKind k) { return k == MessageKind::Unicast ? "unicast" : "multicast"; }

enum class HopMetric { TreeLinks, LongestPath };

/// One line of a trace dump; what the analyzer needs from a record.
struct TraceRow {
    std::uint64_t msg_id = 0;
    std::string layer_id;
    TrafficClass cls = TrafficClass::Weight;
    NodeId src;
    std::vector<NodeId> dsts;
    std::int64_t bytes = 0;
    std::int64_t hops = 0;
    bool is_multicast = false;
    std::int64_t start = 0;
    std::int64_t end = 0;

    bool operator==(const TraceRow&) const = default;
};

inline std::vector<TraceRow> to_rows(const TimedTrace& t, HopMetric metric = HopMetric::TreeLinks) {
    std::vector<TraceRow> rows;
    rows.reserve(t.records.size());
    for (const auto& r : t.records) {
        const auto hops = metric == HopMetric::TreeLinks ? static_cast<std::int64_t>(hop_count(r)) : r.route.depth;
        rows.push_back({r.message.id, r.message.layer_id, r.message.cls, r.message.src, r.message.dsts,
                        r.message.bytes, hops, is_multicast(r), r.start, r.end});
    }
    return rows;
}

struct TimeBreakdown {
    double frac_noc = 0;
    double frac_nop = 0;
    double frac_dram = 0;
    bool zero_comm = false; // no communication at all; fractions are 0
};

inline TimeBreakdown time_breakdown(const BusyLedger& busy) {
    const auto total = busy.total();
    if (total <= 0) return {0, 0, 0, true};
    const double t = static_cast<double>(total);
    return {static_cast<double>(busy.noc) / t, static_cast<double>(busy.nop) / t,
            static_cast<double>(busy.dram) / t, false};
}

inline TimeBreakdown time_breakdown(const TimedTrace& t) { return time_breakdown(t.busy); }

struct MulticastHistogram {
    std::map<std::int64_t, std::int64_t> by_dsts; // |dsts| -> messages (|dsts| >= 2)
    std::int64_t n_multicast = 0;
    std::int64_t n_messages = 0;

    /// Share of multicasts with exactly `n` destinations, in percent.
    double percent(std::int64_t n) const {
        if (n_multicast == 0) return 0;
        auto it = by_dsts.find(n);
        return it == by_dsts.end() ? 0.0 : 100.0 * static_cast<double>(it->second) / static_cast<double>(n_multicast);
    }
};

inline MulticastHistogram multicast_histogram(std::span<const TraceRow> rows) {
    MulticastHistogram h;
    h.n_messages = static_cast<std::int64_t>(rows.size());
    for (const auto& r : rows) {
        if (r.dsts.size() < 2) continue;
        ++h.by_dsts[static_cast<std::int64_t>(r.dsts.size())];
        ++h.n_multicast;
    }
    return h;
}

inline MulticastHistogram multicast_histogram(const TimedTrace& t) {
    const auto rows = to_rows(t);
    return multicast_histogram(rows);
}

using HopHistogram = std::map<std::pair<MessageKind, std::int64_t>, std::int64_t>;

inline HopHistogram hop_histogram(std::span<const TraceRow> rows) {
    HopHistogram h;
    for (const auto& r : rows)
        ++h[{r.dsts.size() >= 2 ? MessageKind::Multicast : MessageKind::Unicast, r.hops}];
    return h;
}

inline HopHistogram hop_histogram(const TimedTrace& t, HopMetric metric = HopMetric::TreeLinks) {
    const auto rows = to_rows(t, metric);
    return hop_histogram(rows);
}

/// Mean hop count of one message kind; 0 when there are none.
inline double mean_hops(const HopHistogram& h, MessageKind kind) {
    std::int64_t n = 0, sum = 0;
    for (const auto& [key, count] : h)
        if (key.first == kind) {
            n += count;
            sum += key.second * count;
        }
    return n == 0 ? 0.0 : static_cast<double>(sum) / static_cast<double>(n);
}

struct MetricsReport {
    std::string workload;
    std::string config;
    std::int64_t noc_cycles = 0;
    std::int64_t nop_cycles = 0;
    std::int64_t dram_cycles = 0;
    std::int64_t total_comm_cycles = 0;
    std::int64_t makespan = 0;
    std::int64_t compute_cycles = 0;
    double frac_noc = 0, frac_nop = 0, frac_dram = 0; // over total_comm_cycles
    bool zero_comm = false;
    // Over total_comm_cycles + compute_cycles (overall execution view).
    double exec_frac_noc = 0, exec_frac_nop = 0, exec_frac_dram = 0, exec_frac_compute = 0;
    std::int64_t n_messages = 0;
    std::int64_t n_unicast = 0;
    std::int64_t n_multicast = 0;
    std::map<std::int64_t, std::int64_t> mcast_hist;
    HopHistogram hop_hist;

    bool operator==(const MetricsReport&) const = default;
};

inline MetricsReport make_report(std::string workload, std::string config, std::span<const TraceRow> rows,
                                 const BusyLedger& busy, std::int64_t makespan, std::int64_t compute_cycles) {
    MetricsReport r;
    r.workload = std::move(workload);
    r.config = std::move(config);
    r.noc_cycles = busy.noc;
    r.nop_cycles = busy.nop;
    r.dram_cycles = busy.dram;
    r.total_comm_cycles = busy.total();
    r.makespan = makespan;
    r.compute_cycles = compute_cycles;
    const auto tb = time_breakdown(busy);
    r.frac_noc = tb.frac_noc;
    r.frac_nop = tb.frac_nop;
    r.frac_dram = tb.frac_dram;
    r.zero_comm = tb.zero_comm;
    const auto exec_total = static_cast<double>(r.total_comm_cycles + compute_cycles);
    if (exec_total > 0) {
        r.exec_frac_noc = static_cast<double>(busy.noc) / exec_total;
        r.exec_frac_nop = static_cast<double>(busy.nop) / exec_total;
        r.exec_frac_dram = static_cast<double>(busy.dram) / exec_total;
        r.exec_frac_compute = static_cast<double>(compute_cycles) / exec_total;
    }
    const auto mh = multicast_histogram(rows);
    r.n_messages = mh.n_messages;
    r.n_multicast = mh.n_multicast;
    r.n_unicast = mh.n_messages - mh.n_multicast;
    r.mcast_hist = mh.by_dsts;
    r.hop_hist = hop_histogram(rows);
    return r;
}

inline MetricsReport analyze(const TimedTrace& t, std::string workload, std::string config,
                             HopMetric metric = HopMetric::TreeLinks) {
    const auto rows = to_rows(t, metric);
    return make_report(std::move(workload), std::move(config), rows, t.busy, t.makespan, t.compute_cycles);
}

/// Busy ledger rebuilt from dumped rows (the dump does not carry occupancy).
inline BusyLedger recompute_busy(std::span<const TraceRow> rows, const ArchConfig& cfg, const SimOptions& opt) {
    BusyLedger b;
    for (const auto& r : rows) {
        Message m;
        m.src = r.src;
        m.dsts = r.dsts;
        m.bytes = r.bytes;
        const auto route = multicast_tree(m.src, m.dsts, cfg);
        b.nop += nop_cycles(m, route, cfg, opt);
        const auto ep = endpoint_cycles(m, cfg, opt);
        b.noc += ep.noc;
        b.dram += ep.dram;
    }
    return b;
}

/// Replaces each row's hop count by the longest root-to-leaf path.
inline void apply_longest_path(std::vector<TraceRow>& rows, const ArchConfig& cfg) {
    for (auto& r : rows) r.hops = multicast_tree(r.src, r.dsts, cfg).depth;
}

// ---------------------------------------------------------------------------

struct BoxStats {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
    std::size_t n = 0;
    bool operator==(const BoxStats&) const = default;
};

/// Quantile by linear interpolation between order statistics (Hyndman-Fan type 7).
inline double quantile_type7(std::vector<double> xs, double p) {
    if (xs.empty()) throw Error("quantile of an empty sample");
    std::sort(xs.begin(), xs.end());
    const double h = (static_cast<double>(xs.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

inline BoxStats box_stats(const std::vector<double>& xs) {
    if (xs.empty()) throw Error("box statistics of an empty group");
    BoxStats b;
    b.n = xs.size();
    b.min = *std::min_element(xs.begin(), xs.end());
    b.max = *std::max_element(xs.begin(), xs.end());
    b.q1 = quantile_type7(xs, 0.25);
    b.median = quantile_type7(xs, 0.5);
    b.q3 = quantile_type7(xs, 0.75);
    return b;
}

/// Five-number summary of frac_nop across workloads, per config.
inline std::map<std::string, BoxStats> nop_ratio_stats(std::span<const MetricsReport> reports) {
    std::map<std::string, std::vector<double>> groups;
    for (const auto& r : reports) groups[r.config].push_back(r.frac_nop);
    std::map<std::string, BoxStats> out;
    for (const auto& [config, xs] : groups) out.emplace(config, box_stats(xs));
    return out;
}

enum class HeatmapAverage { MeanOfFractions, FractionOfMeans };

struct HeatmapRow {
    std::string workload;
    double noc = 0, nop = 0, dram = 0, compute = 0;
    std::size_t n_configs = 0;
};

/// Per-workload share of overall execution time, averaged across configs.
inline std::vector<HeatmapRow> heatmap(std::span<const MetricsReport> reports, HeatmapAverage avg) {
    std::map<std::string, std::vector<const MetricsReport*>> by_workload;
    for (const auto& r : reports) by_workload[r.workload].push_back(&r);
    std::vector<HeatmapRow> out;
    for (const auto& [w, rs] : by_workload) {
        HeatmapRow row;
        row.workload = w;
        row.n_configs = rs.size();
        if (avg == HeatmapAverage::MeanOfFractions) {
            for (const auto* r : rs) {
                row.noc += r->exec_frac_noc;
                row.nop += r->exec_frac_nop;
                row.dram += r->exec_frac_dram;
                row.compute += r->exec_frac_compute;
            }
            const double n = static_cast<double>(rs.size());
            row.noc /= n;
            row.nop /= n;
            row.dram /= n;
            row.compute /= n;
        } else {
            double noc = 0, nop = 0, dram = 0, comp = 0;
            for (const auto* r : rs) {
                noc += static_cast<double>(r->noc_cycles);
                nop += static_cast<double>(r->nop_cycles);
                dram += static_cast<double>(r->dram_cycles);
                comp += static_cast<double>(r->compute_cycles);
            }
            const double total = noc + nop + dram + comp;
            if (total > 0) {
                row.noc = noc / total;
                row.nop = nop / total;
                row.dram = dram / total;
                row.compute = comp / total;
            }
        }
        out.push_back(row);
    }
    return out;
}

} // namespace chiplet_lab
