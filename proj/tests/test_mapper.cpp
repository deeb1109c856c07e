#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "chiplet_lab/mapper.hpp"

using namespace chiplet_lab;

namespace {

Layer conv(std::string id, ConvDims d, std::vector<std::string> preds = {}) {
    return {std::move(id), OpKind::Conv, d, std::move(preds), 1};
}

Layer fc(std::string id, MatDims d, std::vector<std::string> preds = {}) {
    return {std::move(id), OpKind::Fc, d, std::move(preds), 1};
}

TileAssignment manual(const LayerGraph& g, std::size_t i, Strategy s, const std::vector<NodeId>& region) {
    TileAssignment a{g.layers[i].id, s, {}};
    const auto slices = even_slices(split_extent(g.layers[i], s), static_cast<std::int64_t>(region.size()));
    for (std::size_t p = 0; p < region.size(); ++p) a.parts.push_back({region[p], slices[p]});
    return a;
}

std::int64_t count(const std::vector<Message>& ms, TrafficClass c) {
    std::int64_t n = 0;
    for (const auto& m : ms) n += m.cls == c;
    return n;
}

// --- element-level oracle for conv/fc chains -------------------------------

using Elem = std::int64_t; // flat CHW index into a producer's output

// Input elements (flat index into the layer's own input) that one part needs.
std::set<Elem> needed_inputs(const Layer& l, Strategy s, const Range& r) {
    std::set<Elem> out;
    if (l.op == OpKind::Fc) {
        const auto& m = l.as<MatDims>();
        for (Elem k = 0; k < m.K; ++k) {
            if (s == Strategy::SplitC && (k < r.begin || k >= r.end)) continue;
            out.insert(k);
        }
        return out;
    }
    const auto& c = l.as<ConvDims>();
    const std::int64_t oh = (c.H + c.stride - 1) / c.stride;
    const std::int64_t ow = (c.W + c.stride - 1) / c.stride;
    const std::int64_t pad_h = std::max<std::int64_t>((oh - 1) * c.stride + c.R - c.H, 0) / 2;
    const std::int64_t pad_w = std::max<std::int64_t>((ow - 1) * c.stride + c.S - c.W, 0) / 2;
    const std::int64_t cpg = c.C / c.groups, kpg = c.K / c.groups;
    for (std::int64_t k = 0; k < c.K; ++k)
        for (std::int64_t y = 0; y < oh; ++y)
            for (std::int64_t x = 0; x < ow; ++x) {
                if (s == Strategy::SplitK && (k < r.begin || k >= r.end)) continue;
                if (s == Strategy::SplitHW && (y < r.begin || y >= r.end)) continue;
                const std::int64_t g = k / kpg;
                for (std::int64_t ci = g * cpg; ci < (g + 1) * cpg; ++ci) {
                    if (s == Strategy::SplitC && (ci < r.begin || ci >= r.end)) continue;
                    for (std::int64_t dy = 0; dy < c.R; ++dy)
                        for (std::int64_t dx = 0; dx < c.S; ++dx) {
                            const auto iy = y * c.stride - pad_h + dy;
                            const auto ix = x * c.stride - pad_w + dx;
                            if (iy < 0 || iy >= c.H || ix < 0 || ix >= c.W) continue;
                            out.insert((ci * c.H + iy) * c.W + ix);
                        }
                }
            }
    return out;
}

// Output elements a part holds after it finishes.
std::set<Elem> held_outputs(const Layer& l, Strategy s, const Range& r, bool root) {
    const Shape o = output_shape(l);
    std::set<Elem> out;
    for (std::int64_t c = 0; c < o.c; ++c)
        for (std::int64_t h = 0; h < o.h; ++h)
            for (std::int64_t w = 0; w < o.w; ++w) {
                const bool mine = s == Strategy::SplitK ? (c >= r.begin && c < r.end)
                                : s == Strategy::SplitHW ? (h >= r.begin && h < r.end)
                                                         : root;
                if (mine) out.insert((c * o.h + h) * o.w + w);
            }
    return out;
}

} // namespace

TEST(Mapper, StrategyChoice) {
    const auto c = conv("c", {.C = 16, .K = 64, .R = 3, .S = 3, .H = 2, .W = 2});
    EXPECT_EQ(choose_strategy(c, 4), Strategy::SplitK);
    EXPECT_FALSE(strategy_cost(c, Strategy::SplitHW, 4));
    EXPECT_LT(*strategy_cost(c, Strategy::SplitK, 4), *strategy_cost(c, Strategy::SplitC, 4));

    const auto f = fc("f", {.M = 4, .K = 1});
    EXPECT_EQ(choose_strategy(f, 2), Strategy::SplitK);
    EXPECT_FALSE(strategy_cost(f, Strategy::SplitC, 2));

    EXPECT_EQ(choose_strategy(c, 1), Strategy::SplitK);
    EXPECT_THROW(choose_strategy(fc("tiny", {.M = 2, .K = 2}), 3), MappingError);
    EXPECT_THROW(choose_strategy(c, 0), MappingError);

    // Large activations with small filters favour spatial splitting.
    const auto big = conv("b", {.C = 8, .K = 8, .R = 3, .S = 3, .H = 64, .W = 64});
    EXPECT_EQ(choose_strategy(big, 4), Strategy::SplitHW);
}

TEST(Mapper, StrategyChoiceMinimisesCost) {
    std::mt19937 rng(3);
    for (int it = 0; it < 300; ++it) {
        const auto l = conv("c", {.C = 1 + static_cast<std::int64_t>(rng() % 40), .K = 1 + static_cast<std::int64_t>(rng() % 40),
                                  .R = 1 + 2 * static_cast<std::int64_t>(rng() % 2), .S = 1,
                                  .H = 1 + static_cast<std::int64_t>(rng() % 20), .W = 1 + static_cast<std::int64_t>(rng() % 5)});
        const int n = 2 + static_cast<int>(rng() % 8);
        std::optional<std::int64_t> best;
        for (auto s : {Strategy::SplitK, Strategy::SplitHW, Strategy::SplitC})
            if (auto cst = strategy_cost(l, s, n)) best = best ? std::min(*best, *cst) : *cst;
        if (!best) {
            EXPECT_THROW(choose_strategy(l, n), MappingError);
            continue;
        }
        EXPECT_EQ(strategy_cost(l, choose_strategy(l, n), n), best);
    }
}

TEST(Mapper, PlacementPolicies) {
    const ConvDims d{.C = 32, .K = 32, .R = 3, .S = 3, .H = 16, .W = 16};
    const auto g = make_graph("chain", 1, {conv("a", d), conv("b", d, {"a"}), conv("c", d, {"b"}), conv("d", d, {"c"})});

    for (const auto& a : place_layers(g, parse_arch("1x2"), {})) EXPECT_EQ(a.parts.size(), 2u);

    const auto cfg = parse_arch("3x3");
    const auto pipe = place_layers(g, cfg, MappingPolicy::parse("pipeline:2"));
    ASSERT_EQ(pipe.size(), 4u);
    EXPECT_EQ(pipe[0].parts.size(), 4u);
    EXPECT_EQ(pipe[1].parts.size(), 4u);
    EXPECT_EQ(pipe[2].parts.size(), 5u);
    EXPECT_EQ(pipe[3].parts.size(), 5u);
    EXPECT_EQ(pipe[0].parts[0].chiplet, compute_node(1, 0));
    EXPECT_EQ(pipe[2].parts[0].chiplet, compute_node(2, 1));

    // Oversized segments are clamped to the layer count.
    for (const auto& a : place_layers(g, cfg, MappingPolicy::parse("pipeline:10"))) EXPECT_EQ(a.parts.size(), 9u);
    EXPECT_THROW(place_layers(g, parse_arch("1x2"), MappingPolicy::parse("pipeline:1")), ConfigError);

    const auto single = make_graph("one", 1, {conv("a", d)});
    EXPECT_EQ(place_layers(single, cfg, {})[0].parts.size(), 9u);

    EXPECT_THROW(MappingPolicy::parse("pipeline:0"), ParseError);
    EXPECT_THROW(MappingPolicy::parse("greedy"), ParseError);
    EXPECT_EQ(MappingPolicy::parse("pipeline:3").to_string(), "pipeline:3");
}

TEST(Mapper, FcSplitKFromDram) {
    const auto cfg = parse_arch("1x2");
    const auto g = make_graph("fc", 1, {fc("f", {.M = 4, .K = 8, .N = 1})});
    const std::vector<TileAssignment> a{manual(g, 0, Strategy::SplitK, compute_nodes(cfg))};
    const auto ms = build_messages(g, a, cfg);
    std::vector<Message> w, in;
    for (const auto& m : ms) (m.cls == TrafficClass::Weight ? w : in).push_back(m);
    ASSERT_EQ(w.size(), 2u);
    for (const auto& m : w) {
        EXPECT_EQ(m.bytes, 16);
        EXPECT_EQ(m.dsts.size(), 1u);
        EXPECT_EQ(m.src, dram_home(cfg, 0));
    }
    ASSERT_EQ(count(ms, TrafficClass::InputAct), 1);
    const auto& x = *std::find_if(ms.begin(), ms.end(), [](const Message& m) { return m.cls == TrafficClass::InputAct; });
    EXPECT_EQ(x.bytes, 8);
    EXPECT_EQ(x.dsts, compute_nodes(cfg));
    EXPECT_TRUE(x.is_multicast());
}

TEST(Mapper, SingleChipletConv) {
    ArchConfig cfg;
    const auto g = make_graph("one", 1, {conv("c", {.C = 3, .K = 2, .R = 1, .S = 1, .H = 2, .W = 2})});
    const auto ms = build_messages(g, place_layers(g, cfg, {}), cfg);
    ASSERT_EQ(ms.size(), 3u);
    EXPECT_EQ(ms[0].cls, TrafficClass::Weight);
    EXPECT_EQ(ms[1].cls, TrafficClass::InputAct);
    EXPECT_EQ(ms[2].cls, TrafficClass::OutputAct);
    EXPECT_EQ(ms[0].bytes, 6);
    EXPECT_EQ(ms[1].bytes, 12);
    EXPECT_EQ(ms[2].bytes, 8);
    for (const auto& m : ms) EXPECT_FALSE(m.is_multicast());
}

TEST(Mapper, SplitKChainMulticastsEverySlice) {
    const auto cfg = parse_arch("3x3");
    const ConvDims d{.C = 18, .K = 18, .R = 1, .S = 1, .H = 4, .W = 4};
    const auto g = make_graph("ab", 1, {conv("A", d), conv("B", d, {"A"})});
    const auto chips = compute_nodes(cfg);
    const std::vector<TileAssignment> a{manual(g, 0, Strategy::SplitK, chips), manual(g, 1, Strategy::SplitK, chips)};
    const auto ms = build_messages(g, a, cfg);
    std::vector<Message> acts;
    for (const auto& m : ms)
        if (m.layer_id == "B" && m.cls == TrafficClass::InputAct) acts.push_back(m);
    ASSERT_EQ(acts.size(), 9u);
    std::set<NodeId> srcs;
    for (const auto& m : acts) {
        EXPECT_EQ(m.dsts.size(), 8u);
        EXPECT_EQ(std::count(m.dsts.begin(), m.dsts.end(), m.src), 0);
        EXPECT_EQ(m.bytes, 2 * 16);
        srcs.insert(m.src);
    }
    EXPECT_EQ(srcs.size(), 9u);
}

TEST(Mapper, SplitCSendsPartialSumsToRoot) {
    const auto cfg = parse_arch("1x2");
    const auto g = make_graph("fc", 1, {fc("f", {.M = 1, .K = 64, .N = 1})});
    const auto a = place_layers(g, cfg, {});
    ASSERT_EQ(a[0].strategy, Strategy::SplitC);
    const auto ms = build_messages(g, a, cfg);
    ASSERT_EQ(count(ms, TrafficClass::PartialSum), 1);
    ASSERT_EQ(count(ms, TrafficClass::OutputAct), 1);
    for (const auto& m : ms) {
        if (m.cls == TrafficClass::PartialSum) {
            EXPECT_EQ(m.src, a[0].parts[1].chiplet);
            EXPECT_EQ(m.dsts, std::vector<NodeId>{a[0].parts[0].chiplet});
            EXPECT_EQ(m.bytes, 1);
        }
        if (m.cls == TrafficClass::InputAct) {
            EXPECT_EQ(m.bytes, 32);
        }
    }
}

TEST(Mapper, SharedWeightsUnderSplitHW) {
    const auto cfg = parse_arch("3x3");
    const auto g = make_graph("hw", 1, {conv("c", {.C = 4, .K = 4, .R = 3, .S = 3, .H = 36, .W = 36})});
    const auto a = place_layers(g, cfg, {});
    ASSERT_EQ(a[0].strategy, Strategy::SplitHW);
    const auto ms = build_messages(g, a, cfg);
    ASSERT_EQ(count(ms, TrafficClass::Weight), 1);
    EXPECT_EQ(ms[0].dsts.size(), 9u);
    EXPECT_EQ(ms[0].bytes, 4 * 4 * 9);
}

TEST(Mapper, SpillsWhenBufferIsExceeded) {
    const ConvDims d{.C = 64, .K = 64, .R = 3, .S = 3, .H = 32, .W = 32};
    const auto g = make_graph("s", 1, {conv("a", d), conv("b", d, {"a"})});
    auto cfg = parse_arch("1x2");
    EXPECT_EQ(count(build_messages(g, place_layers(g, cfg, {}), cfg), TrafficClass::Spill), 0);
    cfg.gbuf_bytes = 1024;
    const auto ms = build_messages(g, place_layers(g, cfg, {}), cfg);
    EXPECT_EQ(count(ms, TrafficClass::Spill), 2);
    // The consumer then reads its input back from the producer's DRAM home.
    for (const auto& m : ms) {
        if (m.layer_id == "b" && m.cls == TrafficClass::InputAct) {
            EXPECT_EQ(m.src, dram_home(cfg, 0));
        }
    }
}

TEST(Mapper, MessageInvariants) {
    const auto cfg = parse_arch("3x3");
    const ConvDims d{.C = 32, .K = 32, .R = 3, .S = 3, .H = 16, .W = 16};
    const auto g = make_graph("r", 1,
                              {conv("a", d), conv("b", d, {"a"}), Layer{"s", OpKind::EltwiseAdd, ElemDims{32, 16, 16}, {"a", "b"}, 1},
                               fc("f", {.M = 10, .K = 32 * 16 * 16}, {"s"})});
    const auto ms = build_messages(g, place_layers(g, cfg, {}), cfg);
    for (std::size_t k = 0; k < ms.size(); ++k) {
        const auto& m = ms[k];
        EXPECT_EQ(m.id, k);
        EXPECT_GT(m.bytes, 0);
        EXPECT_FALSE(m.dsts.empty());
        EXPECT_TRUE(std::is_sorted(m.dsts.begin(), m.dsts.end()));
        EXPECT_EQ(std::adjacent_find(m.dsts.begin(), m.dsts.end()), m.dsts.end());
        EXPECT_EQ(std::count(m.dsts.begin(), m.dsts.end(), m.src), 0);
    }
    EXPECT_EQ(build_messages(g, place_layers(g, cfg, {}), cfg), ms);
}

TEST(Mapper, RejectsBadAssignments) {
    const auto cfg = parse_arch("1x2");
    const auto g = make_graph("one", 1, {conv("c", {.C = 4, .K = 4, .R = 1, .S = 1, .H = 4, .W = 4})});
    auto a = place_layers(g, cfg, {});
    a[0].parts[1].slice.begin += 1;
    EXPECT_THROW(build_messages(g, a, cfg), MappingError);
    a = place_layers(g, cfg, {});
    a[0].parts[0].chiplet = dram_nodes(cfg)[0];
    EXPECT_THROW(build_messages(g, a, cfg), MappingError);
    EXPECT_THROW(build_messages(g, {}, cfg), MappingError);
}

// Every consumer chiplet receives exactly the input elements it needs and
// does not already hold, for every strategy pairing on a producer/consumer
// edge (including halos, strides, grouped filters and flattening).
TEST(Mapper, DeliveredBytesMatchElementOracle) {
    const auto cfg = parse_arch("3x3");
    struct Case {
        Layer producer, consumer;
    };
    const std::vector<Case> cases{
        {conv("p", {.C = 3, .K = 12, .R = 3, .S = 3, .H = 12, .W = 7}),
         conv("q", {.C = 12, .K = 9, .R = 3, .S = 3, .H = 12, .W = 7}, {"p"})},
        {conv("p", {.C = 3, .K = 12, .R = 1, .S = 1, .H = 13, .W = 5}),
         conv("q", {.C = 12, .K = 10, .R = 5, .S = 3, .H = 13, .W = 5, .stride = 2}, {"p"})},
        {conv("p", {.C = 3, .K = 12, .R = 1, .S = 1, .H = 9, .W = 9}),
         conv("q", {.C = 12, .K = 12, .R = 3, .S = 3, .H = 9, .W = 9, .groups = 4}, {"p"})},
        {conv("p", {.C = 2, .K = 10, .R = 3, .S = 3, .H = 9, .W = 3}), fc("q", {.M = 11, .K = 270}, {"p"})},
    };
    const auto chips = compute_nodes(cfg);
    for (const auto& cs : cases) {
        const auto g = make_graph("edge", 1, {cs.producer, cs.consumer});
        for (auto sp : {Strategy::SplitK, Strategy::SplitHW, Strategy::SplitC})
            for (auto sq : {Strategy::SplitK, Strategy::SplitHW, Strategy::SplitC})
                for (int n : {2, 4, 9}) {
                    if (split_extent(g.layers[0], sp) < n || split_extent(g.layers[1], sq) < n) continue;
                    const std::vector<NodeId> region(chips.begin(), chips.begin() + n);
                    // The consumer uses the region in reverse so placements do not line up.
                    const std::vector<NodeId> rev(region.rbegin(), region.rend());
                    const std::vector<TileAssignment> a{manual(g, 0, sp, region), manual(g, 1, sq, rev)};
                    const auto ms = build_messages(g, a, cfg);

                    std::map<NodeId, std::int64_t> got;
                    for (const auto& m : ms)
                        if (m.layer_id == "q" && m.cls == TrafficClass::InputAct)
                            for (const auto& dst : m.dsts) got[dst] += m.bytes;

                    std::map<NodeId, std::int64_t> want;
                    for (int p = 0; p < n; ++p) {
                        auto need = needed_inputs(g.layers[1], sq, a[1].parts[static_cast<std::size_t>(p)].slice);
                        for (int s = 0; s < n; ++s) {
                            if (a[0].parts[static_cast<std::size_t>(s)].chiplet != rev[static_cast<std::size_t>(p)]) continue;
                            for (auto e : held_outputs(g.layers[0], sp, a[0].parts[static_cast<std::size_t>(s)].slice, s == 0))
                                need.erase(e);
                        }
                        if (!need.empty()) want[rev[static_cast<std::size_t>(p)]] = static_cast<std::int64_t>(need.size());
                    }
                    ASSERT_EQ(got, want) << g.layers[1].id << " " << to_string(sp) << "->" << to_string(sq) << " n=" << n
                                         << " case conv? " << (g.layers[1].op == OpKind::Conv);
                }
    }
}
