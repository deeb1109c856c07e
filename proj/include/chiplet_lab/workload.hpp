#pragma once

// DNN workloads as layer DAGs.
//
// Every activation tensor is viewed as (channels, rows, cols):
//   Conv / Pool / EltwiseAdd / Concat   (C, H, W)
//   Fc / Matmul / LstmCell              (features, N, 1)
//   Embedding                           (dim, tokens, 1), indices (1, tokens, 1)
// Convolutions and pools use "same" padding: out = ceil(in / stride).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "chiplet_lab/error.hpp"
#include "chiplet_lab/region.hpp"

namespace chiplet_lab {

enum class OpKind { Conv, Fc, Pool, EltwiseAdd, Concat, Matmul, LstmCell, Embedding };

inline const char* to_string(OpKind op) {
    switch (op) {
    case OpKind::Conv: return "Conv";
    case OpKind::Fc: return "Fc";
    case OpKind::Pool: return "Pool";
    case OpKind::EltwiseAdd: return "EltwiseAdd";
    case OpKind::Concat: return "Concat";
    case OpKind::Matmul: return "Matmul";
    case OpKind::LstmCell: return "LstmCell";
    case OpKind::Embedding: return "Embedding";
    }
    return "?";
}

inline std::optional<OpKind> parse_op(std::string_view s) {
    static const std::map<std::string_view, OpKind> table{
        {"Conv", OpKind::Conv},         {"Fc", OpKind::Fc},
        {"Pool", OpKind::Pool},         {"EltwiseAdd", OpKind::EltwiseAdd},
        {"Concat", OpKind::Concat},     {"Matmul", OpKind::Matmul},
        {"LstmCell", OpKind::LstmCell}, {"Embedding", OpKind::Embedding}};
    if (auto it = table.find(s); it != table.end()) return it->second;
    return std::nullopt;
}

struct ConvDims {
    std::int64_t C = 1, K = 1, R = 1, S = 1, H = 1, W = 1;
    std::int64_t stride = 1;
    std::int64_t groups = 1;
};
struct MatDims {
    std::int64_t M = 1, K = 1, N = 1;
};
struct PoolDims {
    std::int64_t C = 1, H = 1, W = 1, window = 1, stride = 1;
};
struct LstmDims {
    std::int64_t hidden = 1, input = 1, N = 1;
};
struct ElemDims {
    std::int64_t C = 1, H = 1, W = 1;
};
struct EmbedDims {
    std::int64_t vocab = 1, dim = 1, tokens = 1;
};

using Dims = std::variant<ConvDims, MatDims, PoolDims, LstmDims, ElemDims, EmbedDims>;

struct Layer {
    std::string id;
    OpKind op = OpKind::Conv;
    Dims dims;
    std::vector<std::string> preds;
    std::int64_t bytes_per_elem = 1;

    template <class T>
    const T& as() const { return std::get<T>(dims); }
};

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

inline Shape input_shape(const Layer& l) {
    switch (l.op) {
    case OpKind::Conv: { const auto& d = l.as<ConvDims>(); return {d.C, d.H, d.W}; }
    case OpKind::Pool: { const auto& d = l.as<PoolDims>(); return {d.C, d.H, d.W}; }
    case OpKind::EltwiseAdd:
    case OpKind::Concat: { const auto& d = l.as<ElemDims>(); return {d.C, d.H, d.W}; }
    case OpKind::Fc:
    case OpKind::Matmul: { const auto& d = l.as<MatDims>(); return {d.K, d.N, 1}; }
    case OpKind::LstmCell: { const auto& d = l.as<LstmDims>(); return {d.input + d.hidden, d.N, 1}; }
    case OpKind::Embedding: { const auto& d = l.as<EmbedDims>(); return {1, d.tokens, 1}; }
    }
    return {};
}

inline Shape output_shape(const Layer& l) {
    switch (l.op) {
    case OpKind::Conv: {
        const auto& d = l.as<ConvDims>();
        return {d.K, ceil_div(d.H, d.stride), ceil_div(d.W, d.stride)};
    }
    case OpKind::Pool: {
        const auto& d = l.as<PoolDims>();
        return {d.C, ceil_div(d.H, d.stride), ceil_div(d.W, d.stride)};
    }
    case OpKind::EltwiseAdd:
    case OpKind::Concat: { const auto& d = l.as<ElemDims>(); return {d.C, d.H, d.W}; }
    case OpKind::Fc:
    case OpKind::Matmul: { const auto& d = l.as<MatDims>(); return {d.M, d.N, 1}; }
    case OpKind::LstmCell: { const auto& d = l.as<LstmDims>(); return {d.hidden, d.N, 1}; }
    case OpKind::Embedding: { const auto& d = l.as<EmbedDims>(); return {d.dim, d.tokens, 1}; }
    }
    return {};
}

/// The M x K operand of a Matmul, stored as (M, K, 1).
inline Shape operand_shape(const Layer& l) {
    const auto& d = l.as<MatDims>();
    return {d.M, d.K, 1};
}

/// Top padding of a "same"-padded window op along one spatial axis.
inline std::int64_t same_pad_before(std::int64_t in, std::int64_t out, std::int64_t stride, std::int64_t k) {
    return std::max<std::int64_t>((out - 1) * stride + k - in, 0) / 2;
}

inline std::int64_t layer_macs(const Layer& l) {
    switch (l.op) {
    case OpKind::Conv: {
        const auto& d = l.as<ConvDims>();
        const auto out = output_shape(l);
        return d.K * (d.C / d.groups) * d.R * d.S * out.h * out.w;
    }
    case OpKind::Fc:
    case OpKind::Matmul: { const auto& d = l.as<MatDims>(); return d.M * d.K * d.N; }
    case OpKind::LstmCell: { const auto& d = l.as<LstmDims>(); return 4 * d.hidden * (d.hidden + d.input) * d.N; }
    default: return 0;
    }
}

enum class TensorKind { Input, Output, Weight };

inline std::int64_t tensor_elems(const Layer& l, TensorKind which) {
    switch (which) {
    case TensorKind::Input:
        // Both addends of an elementwise add are inputs.
        return input_shape(l).volume() * (l.op == OpKind::EltwiseAdd ? 2 : 1);
    case TensorKind::Output: return output_shape(l).volume();
    case TensorKind::Weight:
        switch (l.op) {
        case OpKind::Conv: {
            const auto& d = l.as<ConvDims>();
            return d.K * (d.C / d.groups) * d.R * d.S;
        }
        case OpKind::Fc:
        case OpKind::Matmul: { const auto& d = l.as<MatDims>(); return d.M * d.K; }
        case OpKind::LstmCell: { const auto& d = l.as<LstmDims>(); return 4 * d.hidden * (d.input + d.hidden); }
        // Only the looked-up rows of the table move.
        case OpKind::Embedding: { const auto& d = l.as<EmbedDims>(); return d.dim * d.tokens; }
        default: return 0;
        }
    }
    return 0;
}

inline std::int64_t tensor_bytes(const Layer& l, TensorKind which) {
    return tensor_elems(l, which) * l.bytes_per_elem;
}

// ---------------------------------------------------------------------------

enum class Slot { Input, Operand };

/// One contiguous channel range of a layer's input (or Matmul operand),
/// supplied by a predecessor's output or, when `pred` is empty, by DRAM.
struct SourceSegment {
    Slot slot = Slot::Input;
    std::optional<std::size_t> pred; // index into LayerGraph::layers
    std::int64_t c_offset = 0;
    Shape shape; // extent within the slot: (channels, rows, cols)
};

struct LayerGraph {
    std::string name;
    std::int64_t bytes_per_elem = 1;
    std::vector<Layer> layers; // topological order
    std::vector<std::string> entry;
    std::vector<std::string> exit;
    std::vector<std::vector<std::size_t>> preds;     // parallel to layers
    std::vector<std::vector<std::size_t>> consumers; // parallel to layers

    std::size_t index_of(std::string_view id) const {
        auto it = index_.find(std::string(id));
        if (it == index_.end()) throw WorkloadError(std::string(id), "unknown layer");
        return it->second;
    }
    bool has(std::string_view id) const { return index_.count(std::string(id)) != 0; }
    const Layer& layer(std::string_view id) const { return layers[index_of(id)]; }
    bool is_exit(std::size_t i) const { return consumers[i].empty(); }

    std::unordered_map<std::string, std::size_t> index_;
};

/// How a layer's input (and Matmul operand) is assembled from its preds.
inline std::vector<SourceSegment> input_segments(const LayerGraph& g, std::size_t i) {
    const Layer& l = g.layers[i];
    const auto& preds = g.preds[i];
    const Shape in = input_shape(l);
    std::vector<SourceSegment> out;
    if (preds.empty()) {
        out.push_back({Slot::Input, std::nullopt, 0, in});
        return out;
    }
    switch (l.op) {
    case OpKind::EltwiseAdd:
        for (auto p : preds) out.push_back({Slot::Input, p, 0, in});
        break;
    case OpKind::Concat: {
        std::int64_t off = 0;
        for (auto p : preds) {
            const Shape ps = output_shape(g.layers[p]);
            out.push_back({Slot::Input, p, off, {ps.c, in.h, in.w}});
            off += ps.c;
        }
        break;
    }
    case OpKind::LstmCell: {
        std::int64_t off = 0;
        for (auto p : preds) {
            const std::int64_t feats = output_shape(g.layers[p]).volume() / in.h;
            out.push_back({Slot::Input, p, off, {feats, in.h, 1}});
            off += feats;
        }
        // Recurrent state not produced on-package (initial state) is read from DRAM.
        if (off < in.c) out.push_back({Slot::Input, std::nullopt, off, {in.c - off, in.h, 1}});
        break;
    }
    case OpKind::Matmul:
        out.push_back({Slot::Input, preds[0], 0, in});
        if (preds.size() > 1) out.push_back({Slot::Operand, preds[1], 0, operand_shape(l)});
        break;
    default:
        out.push_back({Slot::Input, preds[0], 0, in});
        break;
    }
    return out;
}

/// True when a Matmul's M x K operand is produced on-package instead of read
/// from DRAM as weights.
inline bool operand_streamed(const LayerGraph& g, std::size_t i) {
    return g.layers[i].op == OpKind::Matmul && g.preds[i].size() > 1;
}

/// Bytes of `consumer`'s inputs supplied by `pred`.
inline std::int64_t input_share_bytes(const LayerGraph& g, std::size_t consumer, std::size_t pred) {
    std::int64_t elems = 0;
    for (const auto& seg : input_segments(g, consumer))
        if (seg.pred == pred) elems += seg.shape.volume();
    return elems * g.layers[pred].bytes_per_elem;
}

namespace detail {

inline void check_dims(const Layer& l) {
    auto positive = [&l](std::int64_t v, const char* name) {
        if (v < 1) throw WorkloadError(l.id, std::string("dimension ") + name + " must be >= 1");
    };
    std::visit(
        [&](const auto& d) {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, ConvDims>) {
                positive(d.C, "C"); positive(d.K, "K"); positive(d.R, "R"); positive(d.S, "S");
                positive(d.H, "H"); positive(d.W, "W"); positive(d.stride, "stride"); positive(d.groups, "groups");
                if (d.C % d.groups != 0 || d.K % d.groups != 0)
                    throw WorkloadError(l.id, "groups must divide C and K");
            } else if constexpr (std::is_same_v<T, MatDims>) {
                positive(d.M, "M"); positive(d.K, "K"); positive(d.N, "N");
            } else if constexpr (std::is_same_v<T, PoolDims>) {
                positive(d.C, "C"); positive(d.H, "H"); positive(d.W, "W");
                positive(d.window, "window"); positive(d.stride, "stride");
            } else if constexpr (std::is_same_v<T, LstmDims>) {
                positive(d.hidden, "hidden"); positive(d.input, "input"); positive(d.N, "N");
            } else if constexpr (std::is_same_v<T, ElemDims>) {
                positive(d.C, "C"); positive(d.H, "H"); positive(d.W, "W");
            } else {
                positive(d.vocab, "vocab"); positive(d.dim, "dim"); positive(d.tokens, "tokens");
            }
        },
        l.dims);
    if (l.bytes_per_elem < 1) throw WorkloadError(l.id, "bytes_per_elem must be >= 1");
}

inline void check_arity(const Layer& l) {
    const auto n = l.preds.size();
    auto fail = [&l](const std::string& what) { throw WorkloadError(l.id, what); };
    switch (l.op) {
    case OpKind::EltwiseAdd:
        if (n != 2) fail("EltwiseAdd needs exactly 2 preds, has " + std::to_string(n));
        break;
    case OpKind::Concat:
        if (n < 2) fail("Concat needs at least 2 preds, has " + std::to_string(n));
        break;
    case OpKind::Matmul:
    case OpKind::LstmCell:
        if (n > 2) fail(std::string(to_string(l.op)) + " takes at most 2 preds");
        break;
    default:
        if (n > 1) fail(std::string(to_string(l.op)) + " takes at most 1 pred");
        break;
    }
}

inline void check_compat(const LayerGraph& g, std::size_t i) {
    const Layer& l = g.layers[i];
    if (g.preds[i].empty()) return;
    const Shape in = input_shape(l);
    auto mismatch = [&](std::size_t p, const std::string& what) {
        throw WorkloadError(l.id, "dimension mismatch with pred '" + g.layers[p].id + "': " + what);
    };
    if (l.op == OpKind::Concat) {
        std::int64_t channels = 0;
        for (auto p : g.preds[i]) {
            const Shape ps = output_shape(g.layers[p]);
            if (ps.h != in.h || ps.w != in.w)
                mismatch(p, "spatial extent " + std::to_string(ps.h) + "x" + std::to_string(ps.w) +
                                " != " + std::to_string(in.h) + "x" + std::to_string(in.w));
            channels += ps.c;
        }
        if (channels != in.c)
            throw WorkloadError(l.id, "dimension mismatch: preds supply " + std::to_string(channels) +
                                          " channels, layer declares " + std::to_string(in.c));
        return;
    }
    if (l.op == OpKind::LstmCell) {
        const auto& d = l.as<LstmDims>();
        std::int64_t feats = 0;
        for (auto p : g.preds[i]) {
            const auto vol = output_shape(g.layers[p]).volume();
            if (vol % d.N != 0) mismatch(p, "output volume not divisible by batch N");
            feats += vol / d.N;
        }
        if (feats != d.input && feats != d.input + d.hidden)
            throw WorkloadError(l.id, "dimension mismatch: preds supply " + std::to_string(feats) +
                                          " features, expected input (" + std::to_string(d.input) +
                                          ") or input+hidden (" + std::to_string(d.input + d.hidden) + ")");
        return;
    }
    for (const auto& seg : input_segments(g, i)) {
        if (!seg.pred) continue;
        const auto vol = output_shape(g.layers[*seg.pred]).volume();
        if (vol != seg.shape.volume())
            mismatch(*seg.pred, "produces " + std::to_string(vol) + " elements, layer expects " +
                                    std::to_string(seg.shape.volume()));
    }
}

inline void check_id(const std::string& id) {
    if (id.empty()) throw WorkloadError(id, "empty layer id");
    if (id.find_first_of(",|\n\r\" ") != std::string::npos)
        throw WorkloadError(id, "layer id may not contain ',', '|', quotes or whitespace");
}

} // namespace detail

/// Validates `layers` and returns the graph in topological order (stable
/// with respect to the given order).
inline LayerGraph make_graph(std::string name, std::int64_t bytes_per_elem, std::vector<Layer> layers) {
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        detail::check_id(layers[i].id);
        if (!pos.emplace(layers[i].id, i).second) throw WorkloadError(layers[i].id, "duplicate layer id");
        detail::check_dims(layers[i]);
        detail::check_arity(layers[i]);
    }
    std::vector<std::vector<std::size_t>> succ(layers.size());
    std::vector<std::size_t> indeg(layers.size(), 0);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        for (const auto& p : layers[i].preds) {
            auto it = pos.find(p);
            if (it == pos.end()) throw WorkloadError(layers[i].id, "dangling pred id '" + p + "'");
            succ[it->second].push_back(i);
            ++indeg[i];
        }
    }
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (indeg[i] == 0) ready.push(i);
    std::vector<std::size_t> order;
    order.reserve(layers.size());
    while (!ready.empty()) {
        const auto i = ready.top();
        ready.pop();
        order.push_back(i);
        for (auto s : succ[i])
            if (--indeg[s] == 0) ready.push(s);
    }
    if (order.size() != layers.size()) {
        for (std::size_t i = 0; i < layers.size(); ++i)
            if (indeg[i] != 0) throw WorkloadError(layers[i].id, "cycle detected");
    }

    LayerGraph g;
    g.name = std::move(name);
    g.bytes_per_elem = bytes_per_elem;
    g.layers.reserve(layers.size());
    for (auto i : order) g.layers.push_back(std::move(layers[i]));
    for (std::size_t i = 0; i < g.layers.size(); ++i) g.index_.emplace(g.layers[i].id, i);
    g.preds.resize(g.layers.size());
    g.consumers.resize(g.layers.size());
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        for (const auto& p : g.layers[i].preds) {
            const auto pi = g.index_.at(p);
            g.preds[i].push_back(pi);
            g.consumers[pi].push_back(i);
        }
    }
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        if (g.preds[i].empty()) g.entry.push_back(g.layers[i].id);
        if (g.consumers[i].empty()) g.exit.push_back(g.layers[i].id);
        detail::check_compat(g, i);
    }
    return g;
}

namespace detail {

inline Dims parse_dims(const std::string& id, OpKind op, const nlohmann::json& j) {
    if (!j.is_object()) throw WorkloadError(id, "'dims' must be an object");
    std::set<std::string> seen;
    auto get = [&](const char* key, std::optional<std::int64_t> def) -> std::int64_t {
        seen.insert(key);
        auto it = j.find(key);
        if (it == j.end()) {
            if (def) return *def;
            throw WorkloadError(id, std::string("missing dimension '") + key + "'");
        }
        if (!it->is_number_integer()) throw WorkloadError(id, std::string("dimension '") + key + "' must be an integer");
        return it->get<std::int64_t>();
    };
    Dims dims;
    switch (op) {
    case OpKind::Conv:
        dims = ConvDims{get("C", {}), get("K", {}), get("R", {}), get("S", {}),
                        get("H", {}), get("W", {}), get("stride", 1), get("groups", 1)};
        break;
    case OpKind::Fc:
    case OpKind::Matmul: dims = MatDims{get("M", {}), get("K", {}), get("N", 1)}; break;
    case OpKind::Pool:
        dims = PoolDims{get("C", {}), get("H", {}), get("W", {}), get("window", {}), get("stride", {})};
        break;
    case OpKind::LstmCell: dims = LstmDims{get("hidden", {}), get("input", {}), get("N", 1)}; break;
    case OpKind::EltwiseAdd:
    case OpKind::Concat: dims = ElemDims{get("C", {}), get("H", 1), get("W", 1)}; break;
    case OpKind::Embedding: dims = EmbedDims{get("vocab", {}), get("dim", {}), get("tokens", {})}; break;
    }
    for (const auto& [k, v] : j.items())
        if (!seen.count(k)) throw WorkloadError(id, "unknown dimension '" + k + "' for " + to_string(op));
    return dims;
}

} // namespace detail

/// Parses a workload JSON document:
/// {"name": str, "bytes_per_elem": int, "layers": [{"id", "op", "dims", "preds"}]}
inline LayerGraph parse_workload(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ParseError("workload document must be a JSON object");
    if (!doc.contains("name") || !doc["name"].is_string()) throw ParseError("workload needs a string 'name'");
    if (!doc.contains("layers") || !doc["layers"].is_array()) throw ParseError("workload needs a 'layers' array");
    std::int64_t bpe = 1;
    if (doc.contains("bytes_per_elem")) {
        if (!doc["bytes_per_elem"].is_number_integer()) throw ParseError("'bytes_per_elem' must be an integer");
        bpe = doc["bytes_per_elem"].get<std::int64_t>();
        if (bpe < 1) throw ParseError("'bytes_per_elem' must be >= 1");
    }
    std::vector<Layer> layers;
    for (const auto& lj : doc["layers"]) {
        if (!lj.is_object() || !lj.contains("id") || !lj["id"].is_string())
            throw ParseError("every layer needs a string 'id'");
        Layer l;
        l.id = lj["id"].get<std::string>();
        if (!lj.contains("op") || !lj["op"].is_string()) throw WorkloadError(l.id, "missing 'op'");
        const auto op = parse_op(lj["op"].get<std::string>());
        if (!op) throw WorkloadError(l.id, "unknown op '" + lj["op"].get<std::string>() + "'");
        l.op = *op;
        if (!lj.contains("dims")) throw WorkloadError(l.id, "missing 'dims'");
        l.dims = detail::parse_dims(l.id, l.op, lj["dims"]);
        if (lj.contains("preds")) {
            if (!lj["preds"].is_array()) throw WorkloadError(l.id, "'preds' must be an array");
            for (const auto& p : lj["preds"]) {
                if (!p.is_string()) throw WorkloadError(l.id, "pred ids must be strings");
                l.preds.push_back(p.get<std::string>());
            }
        }
        l.bytes_per_elem = bpe;
        if (lj.contains("bytes_per_elem")) {
            if (!lj["bytes_per_elem"].is_number_integer()) throw WorkloadError(l.id, "'bytes_per_elem' must be an integer");
            l.bytes_per_elem = lj["bytes_per_elem"].get<std::int64_t>();
        }
        for (const auto& [k, v] : lj.items())
            if (k != "id" && k != "op" && k != "dims" && k != "preds" && k != "bytes_per_elem")
                throw WorkloadError(l.id, "unknown field '" + k + "'");
        layers.push_back(std::move(l));
    }
    return make_graph(doc["name"].get<std::string>(), bpe, std::move(layers));
}

inline LayerGraph load_workload(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open workload file '" + path.string() + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return parse_workload(doc);
}

} // namespace chiplet_lab
