#include <random>
#include <set>

#include <gtest/gtest.h>

#include "chiplet_lab/region.hpp"

using namespace chiplet_lab;

namespace {

std::set<std::int64_t> elements(const Box& b, const Shape& s) {
    std::set<std::int64_t> out;
    for (auto c = b.c0; c < b.c1; ++c)
        for (auto h = b.h0; h < b.h1; ++h)
            for (auto w = b.w0; w < b.w1; ++w) out.insert((c * s.h + h) * s.w + w);
    return out;
}

Box random_box(std::mt19937& rng, const Shape& s) {
    auto pick = [&rng](std::int64_t n, std::int64_t& a, std::int64_t& b) {
        a = static_cast<std::int64_t>(rng() % static_cast<unsigned>(n));
        b = a + 1 + static_cast<std::int64_t>(rng() % static_cast<unsigned>(n - a));
    };
    Box b;
    pick(s.c, b.c0, b.c1);
    pick(s.h, b.h0, b.h1);
    pick(s.w, b.w0, b.w1);
    return b;
}

} // namespace

TEST(Region, VolumeAndIntersection) {
    const Box a{0, 4, 0, 4, 0, 4};
    const Box b{2, 6, 3, 5, 1, 2};
    EXPECT_EQ(a.volume(), 64);
    const auto x = intersect(a, b);
    ASSERT_TRUE(x);
    EXPECT_EQ(*x, (Box{2, 4, 3, 4, 1, 2}));
    EXPECT_FALSE(intersect(a, Box{4, 5, 0, 1, 0, 1}));
    EXPECT_TRUE(contains(a, *x));
    EXPECT_FALSE(contains(*x, a));
}

TEST(Region, FlatIntervalsMerge) {
    const Shape s{3, 4, 5};
    EXPECT_EQ(flat_intervals(full_box(s), s), (std::vector<Interval>{{0, 60}}));
    EXPECT_EQ(flat_intervals(Box{1, 3, 0, 4, 0, 5}, s), (std::vector<Interval>{{20, 60}}));
    EXPECT_EQ(flat_intervals(Box{0, 2, 1, 2, 0, 5}, s), (std::vector<Interval>{{5, 10}, {25, 30}}));
    EXPECT_TRUE(flat_intervals(Box{}, s).empty());
}

TEST(Region, BoxesOfRangeCoverExactly) {
    const Shape s{4, 3, 5};
    const auto n = s.volume();
    for (std::int64_t lo = 0; lo <= n; ++lo)
        for (std::int64_t hi = lo; hi <= n; ++hi) {
            const auto boxes = boxes_of_range(lo, hi, s);
            std::set<std::int64_t> got;
            for (const auto& b : boxes)
                for (auto e : elements(b, s)) ASSERT_TRUE(got.insert(e).second) << "overlap at " << e;
            std::set<std::int64_t> want;
            for (auto e = lo; e < hi; ++e) want.insert(e);
            ASSERT_EQ(got, want) << lo << ".." << hi;
            ASSERT_LE(boxes.size(), 5u);
        }
}

TEST(Region, ReshapePreservesFlatIndices) {
    std::mt19937 rng(11);
    const std::vector<std::pair<Shape, Shape>> pairs{
        {{4, 3, 5}, {60, 1, 1}}, {{4, 3, 5}, {6, 10, 1}}, {{2, 6, 6}, {8, 9, 1}}, {{5, 1, 1}, {5, 1, 1}}};
    for (const auto& [from, to] : pairs)
        for (int i = 0; i < 200; ++i) {
            const Box b = random_box(rng, from);
            std::set<std::int64_t> got;
            for (const auto& r : reshape(b, from, to))
                for (auto e : elements(r, to)) ASSERT_TRUE(got.insert(e).second);
            ASSERT_EQ(got, elements(b, from));
            ASSERT_EQ(total_volume(reshape(b, from, to)), b.volume());
        }
}
