#pragma once

// Multi-chiplet package model.
//
// Compute chiplets form a rows x cols mesh. The mesh is extended by one
// auxiliary column on each side (x = 0 and x = cols + 1) that hosts the DRAM
// chiplets, so every node sits on a router of a (cols + 2) x grid_rows grid:
//
//     x:   0     1 .. cols    cols+1
//        [D0]  [C] .. [C]     [D1]
//        [D2]  [C] .. [C]     [D3]
//              [C] .. [C]
//
// DRAM chiplets alternate west/east, top to bottom, and each edge column is
// vertically centred on the compute rows. When an edge column needs more DRAM
// slots than there are compute rows the grid grows downward; the extra grid
// positions are routers with no chiplet attached.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "chiplet_lab/detail/strings.hpp"
#include "chiplet_lab/error.hpp"

namespace chiplet_lab {

enum class NodeKind : std::uint8_t { Compute, Dram };

struct NodeId {
    NodeKind kind = NodeKind::Compute;
    int x = 0;
    int y = 0;

    auto operator<=>(const NodeId&) const = default;
};

inline NodeId compute_node(int x, int y) { return {NodeKind::Compute, x, y}; }
inline NodeId dram_node(int x, int y) { return {NodeKind::Dram, x, y}; }

// "C:1:0" / "D:0:1"; no commas so it can live inside a CSV cell.
inline std::string to_string(const NodeId& n) {
    return std::string(n.kind == NodeKind::Compute ? "C:" : "D:") + std::to_string(n.x) + ":" +
           std::to_string(n.y);
}

inline NodeId parse_node(std::string_view text) {
    const auto parts = detail::split(text, ':');
    if (parts.size() != 3 || (parts[0] != "C" && parts[0] != "D"))
        throw ParseError("malformed node id '" + std::string(text) + "'");
    const auto x = detail::parse_int<int>(parts[1]);
    const auto y = detail::parse_int<int>(parts[2]);
    if (!x || !y) throw ParseError("malformed node id '" + std::string(text) + "'");
    return {parts[0] == "C" ? NodeKind::Compute : NodeKind::Dram, *x, *y};
}

struct ArchConfig {
    int rows = 1;
    int cols = 1;
    int dram_count = 4;
    // Bandwidths are bytes per cycle.
    double nop_bw = 4.0;
    double noc_bw = 8.0;
    double dram_bw = 16.0;
    std::int64_t hop_latency = 1;
    std::int64_t pe_count = 256;
    std::int64_t macs_per_pe_cycle = 1;
    std::int64_t gbuf_bytes = 2 * 1024 * 1024;
    double clock_hz = 1e9; // reporting only

    bool operator==(const ArchConfig&) const = default;

    int compute_count() const { return rows * cols; }
    int node_count() const { return compute_count() + dram_count; }
    int west_dram_count() const { return (dram_count + 1) / 2; }
    int east_dram_count() const { return dram_count / 2; }
    int grid_cols() const { return cols + 2; }
    int grid_rows() const { return std::max(rows, west_dram_count()); }
    std::string label() const { return std::to_string(rows) + "x" + std::to_string(cols); }

    void validate() const {
        if (rows < 1 || cols < 1) throw ConfigError("grid dimensions must be >= 1, got " + label());
        if (dram_count < 1) throw ConfigError("dram_count must be >= 1");
        if (!(nop_bw > 0) || !(noc_bw > 0) || !(dram_bw > 0))
            throw ConfigError("bandwidths must be > 0");
        if (hop_latency < 0) throw ConfigError("hop_latency must be >= 0");
        if (pe_count < 1 || macs_per_pe_cycle < 1) throw ConfigError("compute throughput must be >= 1");
        if (gbuf_bytes < 1) throw ConfigError("gbuf_bytes must be >= 1");
        if (!(clock_hz > 0)) throw ConfigError("clock_hz must be > 0");
    }
};

/// DRAM chiplets in placement order (alternating west/east, top to bottom).
inline std::vector<NodeId> dram_nodes(const ArchConfig& cfg) {
    const int west = cfg.west_dram_count();
    const int east = cfg.east_dram_count();
    const int west_top = (cfg.grid_rows() - west) / 2;
    const int east_top = (cfg.grid_rows() - east) / 2;
    std::vector<NodeId> out;
    out.reserve(static_cast<std::size_t>(cfg.dram_count));
    for (int i = 0; i < cfg.dram_count; ++i) {
        const int slot = i / 2;
        if (i % 2 == 0)
            out.push_back(dram_node(0, west_top + slot));
        else
            out.push_back(dram_node(cfg.cols + 1, east_top + slot));
    }
    return out;
}

/// Compute chiplets in row-major order.
inline std::vector<NodeId> compute_nodes(const ArchConfig& cfg) {
    std::vector<NodeId> out;
    out.reserve(static_cast<std::size_t>(cfg.compute_count()));
    for (int y = 0; y < cfg.rows; ++y)
        for (int x = 1; x <= cfg.cols; ++x) out.push_back(compute_node(x, y));
    return out;
}

/// Every node: compute chiplets row-major, then DRAM chiplets in placement order.
inline std::vector<NodeId> nodes(const ArchConfig& cfg) {
    auto out = compute_nodes(cfg);
    const auto drams = dram_nodes(cfg);
    out.insert(out.end(), drams.begin(), drams.end());
    return out;
}

inline bool contains(const ArchConfig& cfg, const NodeId& n) {
    if (n.kind == NodeKind::Compute) return n.x >= 1 && n.x <= cfg.cols && n.y >= 0 && n.y < cfg.rows;
    const auto drams = dram_nodes(cfg);
    return std::find(drams.begin(), drams.end(), n) != drams.end();
}

/// Round-robin DRAM affinity for a layer (by topological index).
inline NodeId dram_home(const ArchConfig& cfg, std::size_t layer_index) {
    const auto drams = dram_nodes(cfg);
    return drams[layer_index % drams.size()];
}

namespace detail {

inline std::pair<int, int> parse_grid(std::string_view token, bool normalize) {
    const auto x = token.find('x');
    if (x == std::string_view::npos)
        throw ParseError("expected <rows>x<cols>, got '" + std::string(token) + "'");
    const auto a = parse_int<int>(token.substr(0, x));
    const auto b = parse_int<int>(token.substr(x + 1));
    if (!a || !b || *a < 1 || *b < 1)
        throw ParseError("invalid grid '" + std::string(token) + "': dimensions must be positive integers");
    if (normalize) return {std::min(*a, *b), std::max(*a, *b)};
    return {*a, *b};
}

inline bool looks_like_grid(std::string_view token) {
    const auto x = token.find('x');
    return x != std::string_view::npos && parse_int<int>(token.substr(0, x)) &&
           parse_int<int>(token.substr(x + 1));
}

template <class T>
T parse_number(std::string_view key, std::string_view value) {
    if constexpr (std::is_floating_point_v<T>) {
        if (auto v = parse_double(value)) return *v;
    } else {
        if (auto v = parse_int<T>(value)) return *v;
    }
    throw ParseError("invalid value in '" + std::string(key) + "=" + std::string(value) + "'");
}

} // namespace detail

/// Parses "<rows>x<cols>" optionally followed by whitespace-separated
/// key=value overrides in native units (bytes/cycle, bytes, Hz).
inline ArchConfig parse_arch(std::string_view text, bool normalize = false) {
    const auto tokens = detail::split_ws(text);
    if (tokens.empty()) throw ParseError("empty architecture string");
    ArchConfig cfg;
    std::tie(cfg.rows, cfg.cols) = detail::parse_grid(tokens[0], normalize);
    for (std::size_t i = 1; i < tokens.size(); ++i) {
        const auto tok = tokens[i];
        const auto eq = tok.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected key=value, got '" + std::string(tok) + "'");
        const auto key = tok.substr(0, eq);
        const auto value = tok.substr(eq + 1);
        if (key == "dram_count")
            cfg.dram_count = detail::parse_number<int>(key, value);
        else if (key == "nop_bw")
            cfg.nop_bw = detail::parse_number<double>(key, value);
        else if (key == "noc_bw")
            cfg.noc_bw = detail::parse_number<double>(key, value);
        else if (key == "dram_bw")
            cfg.dram_bw = detail::parse_number<double>(key, value);
        else if (key == "hop_latency")
            cfg.hop_latency = detail::parse_number<std::int64_t>(key, value);
        else if (key == "pe_count")
            cfg.pe_count = detail::parse_number<std::int64_t>(key, value);
        else if (key == "macs_per_pe_cycle")
            cfg.macs_per_pe_cycle = detail::parse_number<std::int64_t>(key, value);
        else if (key == "gbuf_bytes")
            cfg.gbuf_bytes = detail::parse_number<std::int64_t>(key, value);
        else if (key == "clock_hz")
            cfg.clock_hz = detail::parse_number<double>(key, value);
        else
            throw ParseError("unknown architecture key '" + std::string(key) + "'");
    }
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ParseError(e.what());
    }
    return cfg;
}

/// Inverse of parse_arch: grid plus every field that differs from the default.
inline std::string render(const ArchConfig& cfg) {
    const ArchConfig def;
    std::string out = cfg.label();
    auto add = [&out](const char* key, const std::string& v) { out += std::string(" ") + key + "=" + v; };
    if (cfg.dram_count != def.dram_count) add("dram_count", std::to_string(cfg.dram_count));
    if (cfg.nop_bw != def.nop_bw) add("nop_bw", detail::format_double(cfg.nop_bw));
    if (cfg.noc_bw != def.noc_bw) add("noc_bw", detail::format_double(cfg.noc_bw));
    if (cfg.dram_bw != def.dram_bw) add("dram_bw", detail::format_double(cfg.dram_bw));
    if (cfg.hop_latency != def.hop_latency) add("hop_latency", std::to_string(cfg.hop_latency));
    if (cfg.pe_count != def.pe_count) add("pe_count", std::to_string(cfg.pe_count));
    if (cfg.macs_per_pe_cycle != def.macs_per_pe_cycle)
        add("macs_per_pe_cycle", std::to_string(cfg.macs_per_pe_cycle));
    if (cfg.gbuf_bytes != def.gbuf_bytes) add("gbuf_bytes", std::to_string(cfg.gbuf_bytes));
    if (cfg.clock_hz != def.clock_hz) add("clock_hz", detail::format_double(cfg.clock_hz));
    return out;
}

/// Architecture config file: key=value lines in datasheet units (GB/s, MiB,
/// GHz). Bandwidths are converted to bytes/cycle with the given clock.
inline ArchConfig parse_arch_file_text(std::string_view text, bool normalize = false) {
    ArchConfig cfg;
    bool have_grid = false;
    double nop_gbps = 4, noc_gbps = 8, dram_gbps = 16, clock_ghz = 1, gbuf_mib = 2;
    int line_no = 0;
    for (auto raw : detail::split(text, '\n')) {
        ++line_no;
        auto line = detail::trim(raw);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = detail::trim(line.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ParseError("line " + std::to_string(line_no) + ": expected key=value, got '" + std::string(line) + "'");
        const auto key = detail::trim(line.substr(0, eq));
        const auto value = detail::trim(line.substr(eq + 1));
        if (key == "grid") {
            std::tie(cfg.rows, cfg.cols) = detail::parse_grid(value, normalize);
            have_grid = true;
        } else if (key == "nop_bw_gbps") {
            nop_gbps = detail::parse_number<double>(key, value);
        } else if (key == "noc_bw_gbps") {
            noc_gbps = detail::parse_number<double>(key, value);
        } else if (key == "dram_bw_gbps") {
            dram_gbps = detail::parse_number<double>(key, value);
        } else if (key == "dram_count") {
            cfg.dram_count = detail::parse_number<int>(key, value);
        } else if (key == "pe_count") {
            cfg.pe_count = detail::parse_number<std::int64_t>(key, value);
        } else if (key == "macs_per_pe_cycle") {
            cfg.macs_per_pe_cycle = detail::parse_number<std::int64_t>(key, value);
        } else if (key == "gbuf_mib") {
            gbuf_mib = detail::parse_number<double>(key, value);
        } else if (key == "hop_latency") {
            cfg.hop_latency = detail::parse_number<std::int64_t>(key, value);
        } else if (key == "clock_ghz") {
            clock_ghz = detail::parse_number<double>(key, value);
        } else {
            throw ParseError("line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
        }
    }
    if (!have_grid) throw ParseError("architecture file has no 'grid' entry");
    if (!(clock_ghz > 0)) throw ParseError("clock_ghz must be > 0");
    cfg.clock_hz = clock_ghz * 1e9;
    cfg.nop_bw = nop_gbps / clock_ghz;
    cfg.noc_bw = noc_gbps / clock_ghz;
    cfg.dram_bw = dram_gbps / clock_ghz;
    cfg.gbuf_bytes = static_cast<std::int64_t>(gbuf_mib * 1024.0 * 1024.0);
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ParseError(e.what());
    }
    return cfg;
}

inline ArchConfig load_arch_file(const std::filesystem::path& path, bool normalize = false) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open architecture file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_arch_file_text(ss.str(), normalize);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

/// `--arch` argument: a grid shorthand ("3x3 nop_bw=2") or a config file path.
inline ArchConfig resolve_arch(std::string_view arg, bool normalize = false) {
    const auto tokens = detail::split_ws(arg);
    if (!tokens.empty() && detail::looks_like_grid(tokens[0])) return parse_arch(arg, normalize);
    const std::filesystem::path p{std::string(arg)};
    if (std::filesystem::is_regular_file(p)) return load_arch_file(p, normalize);
    return parse_arch(arg, normalize); // produces the grid parse error
}

} // namespace chiplet_lab
