#pragma once

// Network-on-package model: XY routing on the extended mesh, multicast
// trees, and an analytic event-driven schedule.
//
// Timing model (per message, cut-through):
//   serialization = ceil(bytes / nop_bw)
//   latency       = hop_latency * depth + serialization
// where depth is the longest root-to-leaf path (the hop count of a
// unicast). Every link of the route is held for the serialization window; a
// link carries one message at a time, granted in order of (eligibility, msg
// id). With store-and-forward the serialization term is paid per hop and
// link d of a path is held d-1 hop windows after the start.
//
// Busy-cycle attribution, accumulated independently per resource:
//   NoP  = sum over links of cycles held
//   NoC  = ceil(bytes / noc_bw) per compute endpoint (sender or receiver)
//   DRAM = ceil(bytes / dram_bw) per DRAM endpoint

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "chiplet_lab/arch.hpp"
#include "chiplet_lab/error.hpp"
#include "chiplet_lab/mapper.hpp"
#include "chiplet_lab/workload.hpp"

namespace chiplet_lab {

struct Coord {
    int x = 0;
    int y = 0;
    auto operator<=>(const Coord&) const = default;
};

inline Coord coord(const NodeId& n) { return {n.x, n.y}; }

/// Directed link between adjacent routers.
struct Link {
    Coord from;
    Coord to;
    auto operator<=>(const Link&) const = default;
};

struct RouteTree {
    NodeId root;
    std::vector<Link> links;    // sorted, unique; each link appears once
    std::vector<NodeId> leaves; // destination set
    int depth = 0;              // longest root-to-leaf path

    std::size_t hop_count() const { return links.size(); }
};

/// X-first dimension-order path between two routers.
inline std::vector<Link> xy_path(Coord a, Coord b) {
    std::vector<Link> out;
    Coord cur = a;
    while (cur.x != b.x) {
        Coord next{cur.x + (b.x > cur.x ? 1 : -1), cur.y};
        out.push_back({cur, next});
        cur = next;
    }
    while (cur.y != b.y) {
        Coord next{cur.x, cur.y + (b.y > cur.y ? 1 : -1)};
        out.push_back({cur, next});
        cur = next;
    }
    return out;
}

inline void require_node(const ArchConfig& cfg, const NodeId& n) {
    if (!contains(cfg, n)) throw RoutingError("node " + to_string(n) + " does not exist in " + cfg.label());
}

inline RouteTree xy_route(const NodeId& src, const NodeId& dst, const ArchConfig& cfg) {
    require_node(cfg, src);
    require_node(cfg, dst);
    RouteTree t;
    t.root = src;
    t.links = xy_path(coord(src), coord(dst));
    t.depth = static_cast<int>(t.links.size());
    std::sort(t.links.begin(), t.links.end());
    if (src != dst) t.leaves = {dst};
    return t;
}

/// Union of the XY paths from src to each destination.
inline RouteTree multicast_tree(const NodeId& src, std::span<const NodeId> dsts, const ArchConfig& cfg) {
    require_node(cfg, src);
    if (dsts.empty()) throw RoutingError("multicast from " + to_string(src) + " has no destinations");
    RouteTree t;
    t.root = src;
    for (const auto& d : dsts) {
        require_node(cfg, d);
        if (d == src) throw RoutingError("destination set contains the source " + to_string(src));
        auto path = xy_path(coord(src), coord(d));
        t.depth = std::max(t.depth, static_cast<int>(path.size()));
        t.links.insert(t.links.end(), path.begin(), path.end());
        t.leaves.push_back(d);
    }
    std::sort(t.links.begin(), t.links.end());
    t.links.erase(std::unique(t.links.begin(), t.links.end()), t.links.end());
    std::sort(t.leaves.begin(), t.leaves.end());
    t.leaves.erase(std::unique(t.leaves.begin(), t.leaves.end()), t.leaves.end());
    return t;
}

inline RouteTree route_message(const Message& m, const ArchConfig& cfg) {
    return multicast_tree(m.src, m.dsts, cfg);
}

struct SimOptions {
    bool store_and_forward = false;
    bool serial_multicast = false; // multicasts become back-to-back unicasts
    bool operator==(const SimOptions&) const = default;
};

struct Occupancy {
    Link link;
    std::int64_t begin = 0;
    std::int64_t end = 0;
};

struct TraceRecord {
    Message message; // message.ready holds the cycle it became eligible
    RouteTree route;
    std::int64_t start = 0;
    std::int64_t end = 0;
    std::vector<Occupancy> occupancy;
};

struct BusyLedger {
    std::int64_t noc = 0;
    std::int64_t nop = 0;
    std::int64_t dram = 0;

    std::int64_t total() const { return noc + nop + dram; }
    bool operator==(const BusyLedger&) const = default;
};

struct LayerTiming {
    std::int64_t ready = 0;         // all preds complete
    std::int64_t compute_start = 0;
    std::int64_t compute_end = 0;
    std::int64_t done = 0;
};

struct TimedTrace {
    std::vector<TraceRecord> records; // ordered by message id
    BusyLedger busy;
    std::map<Link, std::int64_t> link_busy;
    std::vector<LayerTiming> layers; // parallel to graph.layers
    std::int64_t compute_cycles = 0; // sum of per-layer compute durations
    std::int64_t makespan = 0;
};

inline std::size_t hop_count(const TraceRecord& r) { return r.route.hop_count(); }
inline bool is_multicast(const TraceRecord& r) { return r.message.is_multicast(); }

inline std::int64_t serialization_cycles(std::int64_t bytes, double bw) {
    return static_cast<std::int64_t>(std::ceil(static_cast<double>(bytes) / bw));
}

/// Endpoint cycles a message charges to the NoC and DRAM resources.
inline BusyLedger endpoint_cycles(const Message& m, const ArchConfig& cfg, const SimOptions& opt) {
    BusyLedger b;
    auto charge = [&](const NodeId& n, std::int64_t times) {
        if (n.kind == NodeKind::Compute)
            b.noc += times * serialization_cycles(m.bytes, cfg.noc_bw);
        else
            b.dram += times * serialization_cycles(m.bytes, cfg.dram_bw);
    };
    // A source-serial multicast pushes one copy per destination.
    charge(m.src, opt.serial_multicast ? static_cast<std::int64_t>(m.dsts.size()) : 1);
    for (const auto& d : m.dsts) charge(d, 1);
    return b;
}

/// NoP link cycles a message occupies, from its route alone.
inline std::int64_t nop_cycles(const Message& m, const RouteTree& route, const ArchConfig& cfg, const SimOptions& opt) {
    const auto ser = serialization_cycles(m.bytes, cfg.nop_bw);
    if (!opt.serial_multicast || m.dsts.size() < 2) return static_cast<std::int64_t>(route.hop_count()) * ser;
    std::int64_t links = 0;
    for (const auto& d : m.dsts) links += static_cast<std::int64_t>(xy_path(coord(m.src), coord(d)).size());
    return links * ser;
}

namespace detail {

inline bool post_compute(TrafficClass c) {
    return c == TrafficClass::PartialSum || c == TrafficClass::OutputAct || c == TrafficClass::Spill;
}

// Hop depth of every link in a tree rooted at `root` (1 for links leaving it).
inline std::map<Link, int> link_depths(const NodeId& root, std::span<const NodeId> dsts) {
    std::map<Link, int> depth;
    for (const auto& d : dsts) {
        const auto path = xy_path(coord(root), coord(d));
        for (std::size_t k = 0; k < path.size(); ++k) depth.emplace(path[k], static_cast<int>(k) + 1);
    }
    return depth;
}

class LinkTable {
public:
    explicit LinkTable(const ArchConfig& cfg) : cols_(cfg.grid_cols()), free_(static_cast<std::size_t>(cfg.grid_cols() * cfg.grid_rows() * 4), 0) {}

    std::int64_t& free_at(const Link& l) { return free_[index(l)]; }

private:
    std::size_t index(const Link& l) const {
        int dir = 0;
        if (l.to.x > l.from.x) dir = 0;
        else if (l.to.x < l.from.x) dir = 1;
        else if (l.to.y > l.from.y) dir = 2;
        else dir = 3;
        return static_cast<std::size_t>((l.from.y * cols_ + l.from.x) * 4 + dir);
    }

    int cols_;
    std::vector<std::int64_t> free_;
};

} // namespace detail

/// Event-driven schedule of `messages` for a mapped workload.
///
/// A layer's weight and input messages become eligible once all its preds
/// have completed; its compute starts when they have all arrived and its
/// chiplets are free; partial-sum, output and spill messages follow the
/// compute; the layer completes when those have been delivered.
/// `assignments` may be empty, in which case each layer computes on a single
/// unconstrained chiplet.
inline TimedTrace simulate(const std::vector<Message>& messages, const std::vector<TileAssignment>& assignments,
                           const LayerGraph& g, const ArchConfig& cfg, const SimOptions& opt = {}) {
    cfg.validate();
    const std::size_t n_layers = g.layers.size();
    if (!assignments.empty()) check_assignments(g, assignments, cfg);

    std::vector<std::vector<std::size_t>> pre(n_layers), post(n_layers);
    std::vector<std::size_t> msg_layer(messages.size());
    for (std::size_t k = 0; k < messages.size(); ++k) {
        const auto& m = messages[k];
        if (!g.has(m.layer_id)) throw MappingError("message " + std::to_string(m.id) + " references unknown layer '" + m.layer_id + "'");
        if (m.bytes < 1) throw MappingError("message " + std::to_string(m.id) + " carries no bytes");
        const auto li = g.index_of(m.layer_id);
        msg_layer[k] = li;
        (detail::post_compute(m.cls) ? post : pre)[li].push_back(k);
    }

    std::vector<std::int64_t> compute_len(n_layers, 0);
    const std::int64_t rate = cfg.pe_count * cfg.macs_per_pe_cycle;
    if (!assignments.empty()) {
        const auto dem = layer_demands(g, assignments);
        for (std::size_t i = 0; i < n_layers; ++i)
            for (const auto& d : dem[i]) compute_len[i] = std::max(compute_len[i], ceil_div(d.macs, rate));
    } else {
        for (std::size_t i = 0; i < n_layers; ++i) compute_len[i] = ceil_div(layer_macs(g.layers[i]), rate);
    }

    TimedTrace trace;
    trace.records.resize(messages.size());
    trace.layers.resize(n_layers);
    detail::LinkTable links(cfg);
    std::map<NodeId, std::int64_t> chiplet_free;

    std::vector<std::size_t> preds_left(n_layers), pre_left(n_layers), post_left(n_layers);
    std::vector<bool> done(n_layers, false);
    for (std::size_t i = 0; i < n_layers; ++i) {
        preds_left[i] = g.preds[i].size();
        pre_left[i] = pre[i].size();
        post_left[i] = post[i].size();
    }

    enum EventKind : int { MessageDone = 0, ComputeDone = 1, MessageEligible = 2 };
    using Event = std::tuple<std::int64_t, int, std::uint64_t, std::size_t>; // time, kind, tie, payload
    std::priority_queue<Event, std::vector<Event>, std::greater<>> events;

    auto reserve = [&](std::size_t k, std::int64_t t) {
        const Message& m = messages[k];
        TraceRecord& rec = trace.records[k];
        rec.message = m;
        rec.message.ready = t;
        rec.route = route_message(m, cfg);
        const auto ser = serialization_cycles(m.bytes, cfg.nop_bw);
        const auto hop_window = cfg.hop_latency + ser;

        // Each unit is one injected copy: the whole tree, or one path per
        // destination in source-serial mode.
        std::vector<std::vector<NodeId>> units;
        if (opt.serial_multicast && m.dsts.size() > 1)
            for (const auto& d : m.dsts) units.push_back({d});
        else
            units.push_back(m.dsts);

        std::int64_t earliest = t;
        rec.start = -1;
        rec.end = t;
        for (const auto& unit : units) {
            const auto depth = detail::link_depths(m.src, unit);
            std::int64_t hops = 0; // longest root-to-leaf path
            for (const auto& [l, d] : depth) hops = std::max<std::int64_t>(hops, d);
            auto offset = [&](int d) -> std::int64_t { return opt.store_and_forward ? (d - 1) * hop_window : 0; };
            std::int64_t start = earliest;
            for (const auto& [l, d] : depth) start = std::max(start, links.free_at(l) - offset(d));
            for (const auto& [l, d] : depth) {
                const auto b = start + offset(d);
                links.free_at(l) = b + ser;
                rec.occupancy.push_back({l, b, b + ser});
                trace.link_busy[l] += ser;
                trace.busy.nop += ser;
            }
            const auto latency = opt.store_and_forward ? hops * hop_window : cfg.hop_latency * hops + ser;
            if (rec.start < 0) rec.start = start;
            rec.end = std::max(rec.end, start + latency);
            earliest = start + ser; // next copy leaves the source after this one
        }
        const auto ep = endpoint_cycles(m, cfg, opt);
        trace.busy.noc += ep.noc;
        trace.busy.dram += ep.dram;
        events.emplace(rec.end, MessageDone, m.id, k);
    };

    auto start_compute = [&](std::size_t i, std::int64_t t) {
        std::int64_t start = t;
        std::vector<NodeId> chiplets;
        if (!assignments.empty())
            for (const auto& p : assignments[i].parts) chiplets.push_back(p.chiplet);
        for (const auto& c : chiplets) start = std::max(start, chiplet_free[c]);
        const auto end = start + compute_len[i];
        for (const auto& c : chiplets) chiplet_free[c] = end;
        trace.layers[i].compute_start = start;
        trace.layers[i].compute_end = end;
        trace.compute_cycles += compute_len[i];
        events.emplace(end, ComputeDone, i, i);
    };

    auto release = [&](std::size_t i, std::int64_t t) {
        trace.layers[i].ready = t;
        if (pre[i].empty()) {
            start_compute(i, t);
            return;
        }
        for (auto k : pre[i]) events.emplace(t, MessageEligible, messages[k].id, k);
    };

    auto complete = [&](std::size_t i, std::int64_t t) {
        done[i] = true;
        trace.layers[i].done = t;
        for (auto s : g.consumers[i])
            if (--preds_left[s] == 0) release(s, t);
    };

    for (std::size_t i = 0; i < n_layers; ++i)
        if (preds_left[i] == 0) release(i, 0);

    while (!events.empty()) {
        const auto [t, kind, tie, payload] = events.top();
        events.pop();
        switch (kind) {
        case MessageEligible: reserve(payload, t); break;
        case MessageDone: {
            const auto i = msg_layer[payload];
            if (detail::post_compute(messages[payload].cls)) {
                if (--post_left[i] == 0) complete(i, t);
            } else if (--pre_left[i] == 0) {
                start_compute(i, t);
            }
            break;
        }
        case ComputeDone:
            if (post[payload].empty()) {
                complete(payload, t);
            } else {
                for (auto k : post[payload]) events.emplace(t, MessageEligible, messages[k].id, k);
            }
            break;
        }
        trace.makespan = std::max(trace.makespan, t);
    }

    for (std::size_t i = 0; i < n_layers; ++i)
        if (!done[i]) throw DeadlockError(g.layers[i].id);

    std::sort(trace.records.begin(), trace.records.end(),
              [](const TraceRecord& a, const TraceRecord& b) { return a.message.id < b.message.id; });
    return trace;
}

} // namespace chiplet_lab
