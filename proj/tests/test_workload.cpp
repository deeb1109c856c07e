#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "chiplet_lab/workload.hpp"

using namespace chiplet_lab;
using nlohmann::json;

namespace {

Layer conv(std::string id, ConvDims d, std::vector<std::string> preds = {}) {
    return {std::move(id), OpKind::Conv, d, std::move(preds), 1};
}

Layer fc(std::string id, MatDims d, std::vector<std::string> preds = {}) {
    return {std::move(id), OpKind::Fc, d, std::move(preds), 1};
}

Layer elem(std::string id, OpKind op, ElemDims d, std::vector<std::string> preds) {
    return {std::move(id), op, d, std::move(preds), 1};
}

const std::filesystem::path kWorkloads = CHIPLET_LAB_WORKLOADS_DIR;

} // namespace

TEST(Workload, MacCounts) {
    EXPECT_EQ(layer_macs(conv("c", {.C = 3, .K = 2, .R = 1, .S = 1, .H = 2, .W = 2})), 24);
    EXPECT_EQ(layer_macs(fc("f", {.M = 4, .K = 8, .N = 1})), 32);
    EXPECT_EQ(layer_macs(elem("a", OpKind::EltwiseAdd, {4, 2, 2}, {})), 0);
    EXPECT_EQ(layer_macs(Layer{"p", OpKind::Pool, PoolDims{4, 8, 8, 2, 2}, {}, 1}), 0);
    EXPECT_EQ(layer_macs(Layer{"e", OpKind::Embedding, EmbedDims{100, 8, 4}, {}, 1}), 0);
    EXPECT_EQ(layer_macs(Layer{"l", OpKind::LstmCell, LstmDims{3, 5, 1}, {}, 1}), 4 * 3 * 8);
    // Strided conv counts output positions, not input positions.
    EXPECT_EQ(layer_macs(conv("s", {.C = 1, .K = 1, .R = 3, .S = 3, .H = 5, .W = 5, .stride = 2})), 9 * 9);
    // Depthwise conv: one input channel per filter.
    EXPECT_EQ(layer_macs(conv("g", {.C = 4, .K = 4, .R = 3, .S = 3, .H = 2, .W = 2, .groups = 4})), 4 * 9 * 4);
}

TEST(Workload, TensorBytes) {
    const auto c = conv("c", {.C = 3, .K = 2, .R = 1, .S = 1, .H = 2, .W = 2});
    EXPECT_EQ(tensor_bytes(c, TensorKind::Weight), 6);
    EXPECT_EQ(tensor_bytes(c, TensorKind::Output), 8);
    EXPECT_EQ(tensor_bytes(c, TensorKind::Input), 12);
    const auto f = fc("f", {.M = 4, .K = 8, .N = 1});
    EXPECT_EQ(tensor_bytes(f, TensorKind::Input), 8);
    EXPECT_EQ(tensor_bytes(f, TensorKind::Weight), 32);
    auto wide = f;
    wide.bytes_per_elem = 2;
    EXPECT_EQ(tensor_bytes(wide, TensorKind::Input), 16);
    EXPECT_EQ(tensor_bytes(elem("a", OpKind::EltwiseAdd, {4, 2, 2}, {}), TensorKind::Input), 32);
    EXPECT_EQ(tensor_bytes(Layer{"e", OpKind::Embedding, EmbedDims{1000, 8, 4}, {}, 1}, TensorKind::Weight), 32);
}

TEST(Workload, SamePaddingShapes) {
    const auto c = conv("c", {.C = 3, .K = 8, .R = 7, .S = 7, .H = 224, .W = 224, .stride = 2});
    EXPECT_EQ(output_shape(c), (Shape{8, 112, 112}));
    EXPECT_EQ(same_pad_before(224, 112, 2, 7), 2);
    EXPECT_EQ(same_pad_before(5, 5, 1, 3), 1);
    EXPECT_EQ(same_pad_before(4, 4, 1, 1), 0);
}

TEST(Workload, SingleLayerIsEntryAndExit) {
    const auto g = make_graph("one", 1, {conv("c", {.C = 3, .K = 2, .R = 1, .S = 1, .H = 2, .W = 2})});
    EXPECT_EQ(g.entry, std::vector<std::string>{"c"});
    EXPECT_EQ(g.exit, std::vector<std::string>{"c"});
}

TEST(Workload, IncompatibleChainIsRejected) {
    try {
        make_graph("bad", 1,
                   {conv("c", {.C = 3, .K = 2, .R = 1, .S = 1, .H = 2, .W = 2}), fc("f", {.M = 4, .K = 9}, {"c"})});
        FAIL();
    } catch (const WorkloadError& e) {
        EXPECT_EQ(e.layer_id(), "f");
        EXPECT_NE(std::string(e.what()).find("mismatch"), std::string::npos);
    }
    // Flattening a conv output into an fc is fine when volumes agree.
    EXPECT_NO_THROW(make_graph(
        "ok", 1, {conv("c", {.C = 3, .K = 2, .R = 1, .S = 1, .H = 2, .W = 2}), fc("f", {.M = 4, .K = 8}, {"c"})}));
}

TEST(Workload, StructuralErrors) {
    const ConvDims d{.C = 2, .K = 2, .R = 1, .S = 1, .H = 2, .W = 2};
    EXPECT_THROW(make_graph("x", 1, {conv("a", d), conv("a", d)}), WorkloadError);
    EXPECT_THROW(make_graph("x", 1, {conv("a", d, {"ghost"})}), WorkloadError);
    EXPECT_THROW(make_graph("x", 1, {conv("a", d, {"b"}), conv("b", d, {"a"})}), WorkloadError);
    EXPECT_THROW(make_graph("x", 1, {conv("a", d), elem("s", OpKind::EltwiseAdd, {2, 2, 2}, {"a"})}), WorkloadError);
    EXPECT_THROW(make_graph("x", 1, {conv("a", d), elem("s", OpKind::Concat, {2, 2, 2}, {"a"})}), WorkloadError);
    EXPECT_THROW(make_graph("x", 1, {conv("a", {.C = 0, .K = 2, .R = 1, .S = 1, .H = 2, .W = 2})}), WorkloadError);
    EXPECT_THROW(make_graph("x", 1, {conv("a b", d)}), WorkloadError);
    EXPECT_THROW(make_graph("x", 1, {conv("a", {.C = 3, .K = 2, .R = 1, .S = 1, .H = 2, .W = 2, .groups = 2})}),
                 WorkloadError);
}

TEST(Workload, ResidualShapesAndTopologicalOrder) {
    const ConvDims d{.C = 4, .K = 4, .R = 3, .S = 3, .H = 4, .W = 4};
    // Declared out of order on purpose.
    const auto g = make_graph("res", 1,
                              {elem("add", OpKind::EltwiseAdd, {4, 4, 4}, {"b2", "stem"}), conv("b2", d, {"b1"}),
                               conv("b1", d, {"stem"}), conv("stem", d),
                               elem("cat", OpKind::Concat, {8, 4, 4}, {"add", "stem"})});
    std::vector<std::string> order;
    for (const auto& l : g.layers) order.push_back(l.id);
    EXPECT_EQ(order, (std::vector<std::string>{"stem", "b1", "b2", "add", "cat"}));
    EXPECT_EQ(g.consumers[g.index_of("stem")].size(), 3u);
    EXPECT_EQ(g.exit, std::vector<std::string>{"cat"});

    const auto segs = input_segments(g, g.index_of("cat"));
    ASSERT_EQ(segs.size(), 2u);
    EXPECT_EQ(segs[1].c_offset, 4);
    EXPECT_EQ(input_share_bytes(g, g.index_of("add"), g.index_of("stem")), 64);
}

TEST(Workload, LstmStateFromDram) {
    std::vector<Layer> ls{Layer{"emb", OpKind::Embedding, EmbedDims{1000, 8, 1}, {}, 1},
                          Layer{"l0", OpKind::LstmCell, LstmDims{6, 8, 1}, {"emb"}, 1},
                          Layer{"l1", OpKind::LstmCell, LstmDims{6, 8, 1}, {"emb", "l0"}, 1}};
    const auto g = make_graph("rnn", 1, ls);
    const auto s0 = input_segments(g, 1);
    ASSERT_EQ(s0.size(), 2u);
    EXPECT_FALSE(s0[1].pred.has_value());
    EXPECT_EQ(s0[1].shape.c, 6);
    EXPECT_EQ(input_segments(g, 2).size(), 2u);

    ls[1].preds = {};
    ls[2] = Layer{"l1", OpKind::LstmCell, LstmDims{6, 7, 1}, {"emb"}, 1};
    EXPECT_THROW(make_graph("rnn", 1, ls), WorkloadError);
}

TEST(Workload, StreamedMatmulOperand) {
    const auto g = make_graph("attn", 1,
                              {fc("q", {.M = 4, .K = 4, .N = 6}), fc("k", {.M = 4, .K = 4, .N = 6}),
                               Layer{"s", OpKind::Matmul, MatDims{6, 4, 6}, {"q", "k"}, 1}});
    const auto i = g.index_of("s");
    EXPECT_TRUE(operand_streamed(g, i));
    EXPECT_FALSE(operand_streamed(g, g.index_of("q")));
    const auto segs = input_segments(g, i);
    ASSERT_EQ(segs.size(), 2u);
    EXPECT_EQ(segs[1].slot, Slot::Operand);
    EXPECT_EQ(segs[1].shape, (Shape{6, 4, 1}));
}

TEST(Workload, ParsesDocuments) {
    const json doc = json::parse(R"({
        "name": "tiny", "bytes_per_elem": 2,
        "layers": [
            {"id": "c", "op": "Conv", "dims": {"C": 3, "K": 2, "R": 1, "S": 1, "H": 2, "W": 2}},
            {"id": "f", "op": "Fc", "dims": {"M": 4, "K": 8}, "preds": ["c"]}
        ]})");
    const auto g = parse_workload(doc);
    EXPECT_EQ(g.name, "tiny");
    EXPECT_EQ(g.layers[1].bytes_per_elem, 2);
    EXPECT_EQ(tensor_bytes(g.layers[0], TensorKind::Weight), 12);

    auto bad = doc;
    bad["layers"][0]["op"] = "Deconv";
    EXPECT_THROW(parse_workload(bad), WorkloadError);
    bad = doc;
    bad["layers"][0]["dims"]["Q"] = 1;
    EXPECT_THROW(parse_workload(bad), WorkloadError);
    bad = doc;
    bad["layers"][0]["dims"].erase("K");
    EXPECT_THROW(parse_workload(bad), WorkloadError);
    bad = doc;
    bad["layers"][1]["extra"] = true;
    EXPECT_THROW(parse_workload(bad), WorkloadError);
    EXPECT_THROW(parse_workload(json::array()), ParseError);
    EXPECT_THROW(parse_workload(json{{"layers", json::array()}}), ParseError);
}

TEST(Workload, LoadErrors) {
    EXPECT_THROW(load_workload(kWorkloads / "does_not_exist.json"), IoError);
    const auto tmp = std::filesystem::temp_directory_path() / "chiplet_lab_bad.json";
    std::ofstream(tmp) << "{ not json";
    EXPECT_THROW(load_workload(tmp), ParseError);
    std::filesystem::remove(tmp);
}

TEST(Workload, BundledResnet50) {
    const auto g = load_workload(kWorkloads / "resnet50.json");
    EXPECT_EQ(g.name, "resnet50");
    EXPECT_GE(g.layers.size(), 50u);
    int adds = 0;
    for (const auto& l : g.layers) adds += l.op == OpKind::EltwiseAdd;
    EXPECT_EQ(adds, 16);
    EXPECT_EQ(g.entry.size(), 1u);
    EXPECT_EQ(g.exit.size(), 1u);
}

TEST(Workload, AllBundledWorkloadsLoad) {
    int n = 0;
    for (const auto& e : std::filesystem::directory_iterator(kWorkloads)) {
        if (e.path().extension() != ".json") continue;
        ++n;
        const auto g = load_workload(e.path());
        EXPECT_EQ(g.name, e.path().stem().string());
        EXPECT_FALSE(g.layers.empty());
    }
    EXPECT_EQ(n, 12);
}
