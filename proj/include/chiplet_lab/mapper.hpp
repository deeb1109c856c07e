#pragma once

// Spatial partitioning of layers onto compute chiplets and the communication
// each partitioning implies.
//
// A layer split n ways uses one of three strategies:
//   SplitK   partition output channels (Conv K, Fc M, LSTM hidden units, ...)
//   SplitHW  partition output rows (Conv/Pool H, Fc/Matmul/LSTM batch N, ...)
//   SplitC   partition the reduction dimension; parts produce partial sums
//            that are reduced on the first part (star reduction)
//
// build_messages turns the partitioning into Weight / InputAct / PartialSum /
// OutputAct / Spill messages. Data is tracked as boxes over each layer's
// output tensor: for every producer part, the region it holds is cut into
// cells keyed by the set of consumer chiplets that need them, and each
// distinct destination set becomes one message (a multicast when it has two
// or more chiplets). Data never moves to the chiplet already holding it.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chiplet_lab/arch.hpp"
#include "chiplet_lab/detail/strings.hpp"
#include "chiplet_lab/error.hpp"
#include "chiplet_lab/region.hpp"
#include "chiplet_lab/workload.hpp"

namespace chiplet_lab {

enum class Strategy { SplitK, SplitHW, SplitC };

inline const char* to_string(Strategy s) {
    switch (s) {
    case Strategy::SplitK: return "SplitK";
    case Strategy::SplitHW: return "SplitHW";
    case Strategy::SplitC: return "SplitC";
    }
    return "?";
}

enum class TrafficClass { Weight, InputAct, OutputAct, PartialSum, Spill };

inline const char* to_string(TrafficClass c) {
    switch (c) {
    case TrafficClass::Weight: return "weight";
    case TrafficClass::InputAct: return "input_act";
    case TrafficClass::OutputAct: return "output_act";
    case TrafficClass::PartialSum: return "partial_sum";
    case TrafficClass::Spill: return "spill";
    }
    return "?";
}

inline TrafficClass parse_traffic_class(std::string_view s) {
    if (s == "weight") return TrafficClass::Weight;
    if (s == "input_act") return TrafficClass::InputAct;
    if (s == "output_act") return TrafficClass::OutputAct;
    if (s == "partial_sum") return TrafficClass::PartialSum;
    if (s == "spill") return TrafficClass::Spill;
    throw ParseError("unknown traffic class '" + std::string(s) + "'");
}

struct Range {
    std::int64_t begin = 0;
    std::int64_t end = 0;

    std::int64_t size() const { return end - begin; }
    bool operator==(const Range&) const = default;
};

struct Part {
    NodeId chiplet;
    Range slice; // along the strategy's split dimension
    bool operator==(const Part&) const = default;
};

struct TileAssignment {
    std::string layer_id;
    Strategy strategy = Strategy::SplitK;
    std::vector<Part> parts; // parts[0] is the reduction root under SplitC
};

struct Message {
    std::uint64_t id = 0;
    NodeId src;
    std::vector<NodeId> dsts; // sorted, unique, never contains src
    std::int64_t bytes = 0;
    TrafficClass cls = TrafficClass::Weight;
    std::string layer_id;
    std::int64_t ready = 0; // earliest start; dependencies are resolved by the simulator

    bool is_multicast() const { return dsts.size() >= 2; }
    bool operator==(const Message&) const = default;
};

struct MappingPolicy {
    enum class Kind { AllChiplets, PipelineSegments };
    Kind kind = Kind::AllChiplets;
    int seg_size = 1;

    static MappingPolicy parse(std::string_view text) {
        if (text == "all") return {};
        constexpr std::string_view prefix = "pipeline:";
        if (text.substr(0, prefix.size()) == prefix) {
            const auto n = detail::parse_int<int>(text.substr(prefix.size()));
            if (!n || *n < 1) throw ParseError("invalid pipeline segment size in '" + std::string(text) + "'");
            return {Kind::PipelineSegments, *n};
        }
        throw ParseError("unknown mapping policy '" + std::string(text) + "' (expected all|pipeline:<n>)");
    }
    std::string to_string() const {
        return kind == Kind::AllChiplets ? "all" : "pipeline:" + std::to_string(seg_size);
    }
};

/// Extent of the dimension `s` partitions; 0 when the strategy does not apply.
inline std::int64_t split_extent(const Layer& l, Strategy s) {
    switch (s) {
    case Strategy::SplitK: return output_shape(l).c;
    case Strategy::SplitHW: return output_shape(l).h;
    case Strategy::SplitC:
        switch (l.op) {
        case OpKind::Conv: return l.as<ConvDims>().groups == 1 ? l.as<ConvDims>().C : 0;
        case OpKind::Fc:
        case OpKind::Matmul: return l.as<MatDims>().K;
        case OpKind::LstmCell: return input_shape(l).c;
        default: return 0;
        }
    }
    return 0;
}

inline std::vector<Range> even_slices(std::int64_t extent, std::int64_t n) {
    std::vector<Range> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) out.push_back({i * extent / n, (i + 1) * extent / n});
    return out;
}

/// What one part of a layer needs and produces, in elements and tensor boxes.
struct PartDemand {
    std::int64_t weight_elems = 0;  // read from DRAM (0 for streamed operands)
    bool shared_weights = false;    // every part needs the full weight tensor
    std::vector<Box> input;         // input-slot space
    std::vector<Box> operand;       // operand-slot space (streamed Matmul only)
    std::optional<Box> output;      // output-space region held afterwards
    std::int64_t partial_elems = 0; // SplitC partial result sent to the root
    std::int64_t macs = 0;

    std::int64_t resident_elems() const {
        std::int64_t v = weight_elems + total_volume(input) + total_volume(operand) + partial_elems;
        if (output) v += output->volume();
        return v;
    }
};

namespace detail {

// Input rows needed to produce output rows [o0, o1) of a same-padded window op.
inline std::pair<std::int64_t, std::int64_t> halo_rows(std::int64_t o0, std::int64_t o1, std::int64_t in_h,
                                                       std::int64_t stride, std::int64_t k) {
    const std::int64_t out_h = ceil_div(in_h, stride);
    const std::int64_t pad = same_pad_before(in_h, out_h, stride, k);
    return {std::max<std::int64_t>(0, o0 * stride - pad), std::min(in_h, (o1 - 1) * stride - pad + k)};
}

inline std::int64_t share(std::int64_t total, const Range& r, std::int64_t extent) {
    return total / extent * r.size() + (total % extent) * r.size() / extent;
}

} // namespace detail

inline PartDemand part_demand(const Layer& l, Strategy s, const Range& r, bool is_root, bool streamed_operand = false) {
    PartDemand d;
    const Shape in = input_shape(l);
    const Shape out = output_shape(l);
    const std::int64_t extent = split_extent(l, s);
    const std::int64_t macs = layer_macs(l);
    d.macs = extent > 0 ? detail::share(macs, r, extent) : macs;

    auto out_box = [&]() -> std::optional<Box> {
        switch (s) {
        case Strategy::SplitK: return Box{r.begin, r.end, 0, out.h, 0, out.w};
        case Strategy::SplitHW: return Box{0, out.c, r.begin, r.end, 0, out.w};
        case Strategy::SplitC: return is_root ? std::optional<Box>(full_box(out)) : std::nullopt;
        }
        return std::nullopt;
    };
    d.output = out_box();

    switch (l.op) {
    case OpKind::Conv: {
        const auto& c = l.as<ConvDims>();
        const std::int64_t cpg = c.C / c.groups;
        const std::int64_t kpg = c.K / c.groups;
        if (s == Strategy::SplitK) {
            const std::int64_t g0 = r.begin / kpg;
            const std::int64_t g1 = (r.end - 1) / kpg + 1;
            d.input = {{g0 * cpg, g1 * cpg, 0, in.h, 0, in.w}};
            d.weight_elems = r.size() * cpg * c.R * c.S;
        } else if (s == Strategy::SplitHW) {
            const auto [h0, h1] = detail::halo_rows(r.begin, r.end, c.H, c.stride, c.R);
            d.input = {{0, in.c, h0, h1, 0, in.w}};
            d.weight_elems = tensor_elems(l, TensorKind::Weight);
            d.shared_weights = true;
        } else {
            d.input = {{r.begin, r.end, 0, in.h, 0, in.w}};
            d.weight_elems = c.K * r.size() * c.R * c.S;
            d.partial_elems = is_root ? 0 : out.volume();
        }
        break;
    }
    case OpKind::Pool: {
        const auto& p = l.as<PoolDims>();
        if (s == Strategy::SplitK) {
            d.input = {{r.begin, r.end, 0, in.h, 0, in.w}};
        } else {
            const auto [h0, h1] = detail::halo_rows(r.begin, r.end, p.H, p.stride, p.window);
            d.input = {{0, in.c, h0, h1, 0, in.w}};
        }
        break;
    }
    case OpKind::EltwiseAdd:
    case OpKind::Concat:
        d.input = {*d.output};
        break;
    case OpKind::Fc:
    case OpKind::Matmul: {
        const auto& m = l.as<MatDims>();
        Box op_box;
        if (s == Strategy::SplitK) {
            d.input = {full_box(in)};
            op_box = {r.begin, r.end, 0, m.K, 0, 1};
        } else if (s == Strategy::SplitHW) {
            d.input = {{0, in.c, r.begin, r.end, 0, 1}};
            op_box = full_box(operand_shape(l));
            d.shared_weights = !streamed_operand;
        } else {
            d.input = {{r.begin, r.end, 0, in.h, 0, 1}};
            op_box = {0, m.M, r.begin, r.end, 0, 1};
            d.partial_elems = is_root ? 0 : out.volume();
        }
        if (streamed_operand)
            d.operand = {op_box};
        else
            d.weight_elems = op_box.volume();
        break;
    }
    case OpKind::LstmCell: {
        const auto& c = l.as<LstmDims>();
        if (s == Strategy::SplitK) {
            d.input = {full_box(in)};
            d.weight_elems = 4 * r.size() * in.c;
        } else if (s == Strategy::SplitHW) {
            d.input = {{0, in.c, r.begin, r.end, 0, 1}};
            d.weight_elems = tensor_elems(l, TensorKind::Weight);
            d.shared_weights = true;
        } else {
            d.input = {{r.begin, r.end, 0, in.h, 0, 1}};
            d.weight_elems = 4 * c.hidden * r.size();
            // Gate pre-activations are reduced before the nonlinearity.
            d.partial_elems = is_root ? 0 : 4 * c.hidden * c.N;
        }
        break;
    }
    case OpKind::Embedding: {
        const auto& e = l.as<EmbedDims>();
        if (s == Strategy::SplitK) {
            d.input = {full_box(in)};
            d.weight_elems = e.tokens * r.size();
        } else {
            d.input = {{0, 1, r.begin, r.end, 0, 1}};
            d.weight_elems = r.size() * e.dim;
        }
        break;
    }
    }
    return d;
}

/// Bytes delivered to a layer's parts when it is split `n_parts` ways with
/// `s`, all data arriving from one off-layer source. nullopt if infeasible.
inline std::optional<std::int64_t> strategy_cost(const Layer& l, Strategy s, int n_parts, bool streamed_operand = false) {
    const std::int64_t extent = split_extent(l, s);
    if (extent < n_parts) return std::nullopt;
    std::int64_t elems = 0;
    const auto slices = even_slices(extent, n_parts);
    for (std::size_t p = 0; p < slices.size(); ++p) {
        const auto d = part_demand(l, s, slices[p], p == 0, streamed_operand);
        elems += d.weight_elems + total_volume(d.input) + total_volume(d.operand) + d.partial_elems;
    }
    return elems * l.bytes_per_elem;
}

/// Strategy minimising delivered bytes; ties resolve SplitK < SplitHW < SplitC.
inline Strategy choose_strategy(const Layer& l, int n_parts, bool streamed_operand = false) {
    if (n_parts < 1) throw MappingError("layer '" + l.id + "': n_parts must be >= 1");
    if (n_parts == 1) return Strategy::SplitK;
    std::optional<Strategy> best;
    std::int64_t best_cost = 0;
    for (auto s : {Strategy::SplitK, Strategy::SplitHW, Strategy::SplitC}) {
        const auto cost = strategy_cost(l, s, n_parts, streamed_operand);
        if (cost && (!best || *cost < best_cost)) {
            best = s;
            best_cost = *cost;
        }
    }
    if (!best)
        throw MappingError("layer '" + l.id + "' (" + to_string(l.op) + ") cannot be partitioned " +
                           std::to_string(n_parts) + " ways under any strategy");
    return *best;
}

inline TileAssignment assign_layer(const LayerGraph& g, std::size_t i, const std::vector<NodeId>& region) {
    const Layer& l = g.layers[i];
    const int n = static_cast<int>(region.size());
    TileAssignment a;
    a.layer_id = l.id;
    a.strategy = choose_strategy(l, n, operand_streamed(g, i));
    const auto slices = even_slices(split_extent(l, a.strategy), n);
    for (int p = 0; p < n; ++p) a.parts.push_back({region[static_cast<std::size_t>(p)], slices[static_cast<std::size_t>(p)]});
    return a;
}

/// One TileAssignment per layer, parallel to graph.layers.
inline std::vector<TileAssignment> place_layers(const LayerGraph& g, const ArchConfig& cfg, const MappingPolicy& policy) {
    const auto chiplets = compute_nodes(cfg);
    std::vector<TileAssignment> out;
    out.reserve(g.layers.size());
    if (policy.kind == MappingPolicy::Kind::AllChiplets) {
        for (std::size_t i = 0; i < g.layers.size(); ++i) out.push_back(assign_layer(g, i, chiplets));
        return out;
    }
    if (g.layers.empty()) return out;
    const std::size_t seg = std::min<std::size_t>(static_cast<std::size_t>(policy.seg_size), g.layers.size());
    const std::size_t n_segments = (g.layers.size() + seg - 1) / seg;
    const std::size_t n_chiplets = chiplets.size();
    if (n_segments > n_chiplets)
        throw ConfigError("pipeline:" + std::to_string(policy.seg_size) + " needs " + std::to_string(n_segments) +
                          " regions but the " + cfg.label() + " array has only " + std::to_string(n_chiplets) +
                          " chiplets");
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const std::size_t s = i / seg;
        const auto lo = s * n_chiplets / n_segments;
        const auto hi = (s + 1) * n_chiplets / n_segments;
        const std::vector<NodeId> region(chiplets.begin() + static_cast<std::ptrdiff_t>(lo),
                                         chiplets.begin() + static_cast<std::ptrdiff_t>(hi));
        out.push_back(assign_layer(g, i, region));
    }
    return out;
}

namespace detail {

// Cuts `held` into cells and returns, per set of consumer indices needing a
// cell, the total volume of such cells. Cells nobody needs are dropped.
inline std::map<std::vector<std::size_t>, std::int64_t>
partition_by_demand(const Box& held, const std::vector<std::vector<Box>>& needs) {
    std::vector<std::vector<Box>> clipped(needs.size());
    std::vector<std::int64_t> cs{held.c0, held.c1}, hs{held.h0, held.h1}, ws{held.w0, held.w1};
    for (std::size_t j = 0; j < needs.size(); ++j) {
        for (const auto& b : needs[j]) {
            if (auto x = intersect(held, b)) {
                clipped[j].push_back(*x);
                cs.push_back(x->c0); cs.push_back(x->c1);
                hs.push_back(x->h0); hs.push_back(x->h1);
                ws.push_back(x->w0); ws.push_back(x->w1);
            }
        }
    }
    std::map<std::vector<std::size_t>, std::int64_t> out;
    if (std::all_of(clipped.begin(), clipped.end(), [](const auto& v) { return v.empty(); })) return out;
    for (auto* v : {&cs, &hs, &ws}) {
        std::sort(v->begin(), v->end());
        v->erase(std::unique(v->begin(), v->end()), v->end());
    }
    std::vector<std::size_t> who;
    for (std::size_t a = 0; a + 1 < cs.size(); ++a)
        for (std::size_t b = 0; b + 1 < hs.size(); ++b)
            for (std::size_t c = 0; c + 1 < ws.size(); ++c) {
                const Box cell{cs[a], cs[a + 1], hs[b], hs[b + 1], ws[c], ws[c + 1]};
                who.clear();
                for (std::size_t j = 0; j < clipped.size(); ++j)
                    for (const auto& x : clipped[j])
                        if (contains(x, cell)) {
                            who.push_back(j);
                            break;
                        }
                if (!who.empty()) out[who] += cell.volume();
            }
    return out;
}

class MessageSink {
public:
    explicit MessageSink(std::vector<Message>& out) : out_(out) {}

    void emit(const NodeId& src, std::vector<NodeId> dsts, std::int64_t bytes, TrafficClass cls, const std::string& layer) {
        std::sort(dsts.begin(), dsts.end());
        dsts.erase(std::unique(dsts.begin(), dsts.end()), dsts.end());
        dsts.erase(std::remove(dsts.begin(), dsts.end(), src), dsts.end());
        if (dsts.empty() || bytes <= 0) return;
        out_.push_back({out_.size(), src, std::move(dsts), bytes, cls, layer, 0});
    }

    // Sends the cells of `held` to the consumer chiplets needing them, one
    // message per distinct destination set after removing the source.
    void scatter(const NodeId& src, const Box& held, const std::vector<std::vector<Box>>& needs,
                 const std::vector<NodeId>& consumers, std::int64_t bytes_per_elem, const std::string& layer) {
        std::map<std::vector<NodeId>, std::int64_t> grouped;
        for (const auto& [who, vol] : partition_by_demand(held, needs)) {
            std::vector<NodeId> dsts;
            for (auto j : who)
                if (consumers[j] != src) dsts.push_back(consumers[j]);
            if (dsts.empty()) continue;
            std::sort(dsts.begin(), dsts.end());
            grouped[dsts] += vol;
        }
        for (auto& [dsts, vol] : grouped) emit(src, dsts, vol * bytes_per_elem, TrafficClass::InputAct, layer);
    }

private:
    std::vector<Message>& out_;
};

} // namespace detail

/// Per-part demands of every layer, parallel to `assignments`.
inline std::vector<std::vector<PartDemand>> layer_demands(const LayerGraph& g, const std::vector<TileAssignment>& assignments) {
    std::vector<std::vector<PartDemand>> out(g.layers.size());
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const auto& a = assignments[i];
        for (std::size_t p = 0; p < a.parts.size(); ++p)
            out[i].push_back(part_demand(g.layers[i], a.strategy, a.parts[p].slice, p == 0, operand_streamed(g, i)));
    }
    return out;
}

/// True when some part's working set (weights + inputs + outputs) exceeds
/// the global buffer, forcing the layer's output out to DRAM.
inline bool spills(const std::vector<PartDemand>& demands, std::int64_t bytes_per_elem, const ArchConfig& cfg) {
    for (const auto& d : demands)
        if (d.resident_elems() * bytes_per_elem > cfg.gbuf_bytes) return true;
    return false;
}

inline void check_assignments(const LayerGraph& g, const std::vector<TileAssignment>& assignments, const ArchConfig& cfg) {
    if (assignments.size() != g.layers.size())
        throw MappingError("expected " + std::to_string(g.layers.size()) + " assignments, got " +
                           std::to_string(assignments.size()));
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const auto& a = assignments[i];
        if (a.layer_id != g.layers[i].id)
            throw MappingError("assignment " + std::to_string(i) + " is for '" + a.layer_id + "', expected '" +
                               g.layers[i].id + "'");
        if (a.parts.empty()) throw MappingError("layer '" + a.layer_id + "' has no parts");
        std::int64_t next = 0;
        for (const auto& p : a.parts) {
            if (p.chiplet.kind != NodeKind::Compute || !contains(cfg, p.chiplet))
                throw MappingError("layer '" + a.layer_id + "' placed on non-compute node " + to_string(p.chiplet));
            if (p.slice.begin != next || p.slice.size() < 1)
                throw MappingError("layer '" + a.layer_id + "' slices are not disjoint and contiguous");
            next = p.slice.end;
        }
        if (next != split_extent(g.layers[i], a.strategy))
            throw MappingError("layer '" + a.layer_id + "' slices do not cover the split dimension");
    }
}

/// Deterministic message list for a mapped workload. Per layer, in order:
/// weights, input activations, partial sums, then output / spill traffic.
inline std::vector<Message> build_messages(const LayerGraph& g, const std::vector<TileAssignment>& assignments,
                                           const ArchConfig& cfg) {
    check_assignments(g, assignments, cfg);
    const auto demands = layer_demands(g, assignments);
    std::vector<bool> spilled(g.layers.size(), false);
    std::vector<Message> out;
    detail::MessageSink sink(out);

    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const Layer& l = g.layers[i];
        const auto& a = assignments[i];
        const auto& dem = demands[i];
        const NodeId home = dram_home(cfg, i);
        std::vector<NodeId> chiplets;
        for (const auto& p : a.parts) chiplets.push_back(p.chiplet);

        // (a) weights
        if (!dem.empty() && dem[0].shared_weights) {
            sink.emit(home, chiplets, dem[0].weight_elems * l.bytes_per_elem, TrafficClass::Weight, l.id);
        } else {
            for (std::size_t p = 0; p < dem.size(); ++p)
                sink.emit(home, {chiplets[p]}, dem[p].weight_elems * l.bytes_per_elem, TrafficClass::Weight, l.id);
        }

        // (b) input activations (and streamed Matmul operands)
        for (const auto& seg : input_segments(g, i)) {
            const Box window{seg.c_offset, seg.c_offset + seg.shape.c, 0, seg.shape.h, 0, seg.shape.w};
            const Shape src_shape = seg.pred ? output_shape(g.layers[*seg.pred]) : seg.shape;
            std::vector<std::vector<Box>> needs(dem.size());
            for (std::size_t p = 0; p < dem.size(); ++p) {
                for (const auto& b : seg.slot == Slot::Input ? dem[p].input : dem[p].operand) {
                    auto x = intersect(b, window);
                    if (!x) continue;
                    x->c0 -= seg.c_offset;
                    x->c1 -= seg.c_offset;
                    for (const auto& r : reshape(*x, seg.shape, src_shape)) needs[p].push_back(r);
                }
            }
            if (seg.pred && !spilled[*seg.pred]) {
                const auto& pa = assignments[*seg.pred];
                const auto& pd = demands[*seg.pred];
                const auto bpe = g.layers[*seg.pred].bytes_per_elem;
                for (std::size_t q = 0; q < pa.parts.size(); ++q)
                    if (pd[q].output) sink.scatter(pa.parts[q].chiplet, *pd[q].output, needs, chiplets, bpe, l.id);
            } else {
                const NodeId src = seg.pred ? dram_home(cfg, *seg.pred) : home;
                const auto bpe = seg.pred ? g.layers[*seg.pred].bytes_per_elem : l.bytes_per_elem;
                sink.scatter(src, full_box(src_shape), needs, chiplets, bpe, l.id);
            }
        }

        // (c) partial sums, star into the first part
        if (a.strategy == Strategy::SplitC)
            for (std::size_t p = 1; p < dem.size(); ++p)
                sink.emit(chiplets[p], {chiplets[0]}, dem[p].partial_elems * l.bytes_per_elem,
                          TrafficClass::PartialSum, l.id);

        // (d) results of exit layers, or spills of oversized layers
        spilled[i] = !g.is_exit(i) && spills(dem, l.bytes_per_elem, cfg);
        if (g.is_exit(i) || spilled[i]) {
            const auto cls = g.is_exit(i) ? TrafficClass::OutputAct : TrafficClass::Spill;
            for (std::size_t p = 0; p < dem.size(); ++p)
                if (dem[p].output) sink.emit(chiplets[p], {home}, dem[p].output->volume() * l.bytes_per_elem, cls, l.id);
        }
    }
    return out;
}

} // namespace chiplet_lab
