#pragma once

// Axis-aligned boxes over (channel, row, column) tensors, stored in CHW order.
// The mapper describes what each chiplet holds and needs as boxes, and
// reshapes them across layers whose tensors have equal volume but different
// shapes (e.g. a conv feature map flattened into a fully connected input).

#include <algorithm>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace chiplet_lab {

struct Shape {
    std::int64_t c = 1;
    std::int64_t h = 1;
    std::int64_t w = 1;

    std::int64_t volume() const { return c * h * w; }
    bool operator==(const Shape&) const = default;
};

struct Box {
    std::int64_t c0 = 0, c1 = 0;
    std::int64_t h0 = 0, h1 = 0;
    std::int64_t w0 = 0, w1 = 0;

    std::int64_t volume() const {
        if (empty()) return 0;
        return (c1 - c0) * (h1 - h0) * (w1 - w0);
    }
    bool empty() const { return c1 <= c0 || h1 <= h0 || w1 <= w0; }
    bool operator==(const Box&) const = default;
};

inline Box full_box(const Shape& s) { return {0, s.c, 0, s.h, 0, s.w}; }

inline std::optional<Box> intersect(const Box& a, const Box& b) {
    Box r{std::max(a.c0, b.c0), std::min(a.c1, b.c1), std::max(a.h0, b.h0),
          std::min(a.h1, b.h1), std::max(a.w0, b.w0), std::min(a.w1, b.w1)};
    if (r.empty()) return std::nullopt;
    return r;
}

inline bool contains(const Box& outer, const Box& inner) {
    return outer.c0 <= inner.c0 && inner.c1 <= outer.c1 && outer.h0 <= inner.h0 &&
           inner.h1 <= outer.h1 && outer.w0 <= inner.w0 && inner.w1 <= outer.w1;
}

using Interval = std::pair<std::int64_t, std::int64_t>; // half-open flat range

/// Flat CHW index ranges covered by `b`, merged and ascending.
inline std::vector<Interval> flat_intervals(const Box& b, const Shape& s) {
    std::vector<Interval> out;
    if (b.empty()) return out;
    auto push = [&out](std::int64_t lo, std::int64_t hi) {
        if (!out.empty() && out.back().second == lo)
            out.back().second = hi;
        else
            out.emplace_back(lo, hi);
    };
    const std::int64_t hw = s.h * s.w;
    const bool full_w = b.w0 == 0 && b.w1 == s.w;
    for (std::int64_t c = b.c0; c < b.c1; ++c) {
        if (full_w) {
            push(c * hw + b.h0 * s.w, c * hw + b.h1 * s.w);
            continue;
        }
        for (std::int64_t h = b.h0; h < b.h1; ++h) push(c * hw + h * s.w + b.w0, c * hw + h * s.w + b.w1);
    }
    return out;
}

namespace detail {

// [lo, hi) within one channel/row plane of `inner` elements per outer index,
// decomposed into at most three boxes of the form (outer range) x (inner range).
template <class Emit>
void split_range(std::int64_t lo, std::int64_t hi, std::int64_t inner, Emit&& emit) {
    if (lo >= hi) return;
    const std::int64_t a = lo / inner;
    const std::int64_t b = hi / inner;
    if (a == b) {
        emit(a, a + 1, lo - a * inner, hi - a * inner);
        return;
    }
    std::int64_t first_full = a;
    if (lo % inner != 0) {
        emit(a, a + 1, lo - a * inner, inner);
        first_full = a + 1;
    }
    if (b > first_full) emit(first_full, b, 0, inner);
    if (hi % inner != 0) emit(b, b + 1, 0, hi - b * inner);
}

} // namespace detail

/// Decomposes the flat CHW range [lo, hi) of shape `s` into disjoint boxes.
inline std::vector<Box> boxes_of_range(std::int64_t lo, std::int64_t hi, const Shape& s) {
    std::vector<Box> out;
    const std::int64_t hw = s.h * s.w;
    detail::split_range(lo, hi, hw, [&](std::int64_t c0, std::int64_t c1, std::int64_t in0, std::int64_t in1) {
        if (in0 == 0 && in1 == hw) {
            out.push_back({c0, c1, 0, s.h, 0, s.w});
            return;
        }
        // Partial plane: c1 == c0 + 1 here.
        detail::split_range(in0, in1, s.w, [&](std::int64_t h0, std::int64_t h1, std::int64_t w0, std::int64_t w1) {
            out.push_back({c0, c1, h0, h1, w0, w1});
        });
    });
    return out;
}

/// Maps a box of tensor `from` onto the equal-volume tensor `to` by flat index.
inline std::vector<Box> reshape(const Box& b, const Shape& from, const Shape& to) {
    if (from == to) return {b};
    std::vector<Box> out;
    for (const auto& [lo, hi] : flat_intervals(b, from)) {
        auto part = boxes_of_range(lo, hi, to);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

inline std::int64_t total_volume(const std::vector<Box>& boxes) {
    std::int64_t v = 0;
    for (const auto& b : boxes) v += b.volume();
    return v;
}

} // namespace chiplet_lab
