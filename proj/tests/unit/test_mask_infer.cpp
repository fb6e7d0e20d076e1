#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <vector>

#include "doctest.h"
#include "dp/mask_infer.hpp"
#include "dp/rng.hpp"

using namespace dp;

namespace {

// independent BFS flood-fill reference for largest_region
TensorF largest_region_oracle(const TensorF& b, int connectivity) {
    const int h = b.shape[0], w = b.shape[1];
    std::vector<int> label(static_cast<size_t>(h) * w, -1);
    std::vector<int> sizes;
    static const int dx8[] = {1, -1, 0, 0, 1, 1, -1, -1};
    static const int dy8[] = {0, 0, 1, -1, 1, -1, 1, -1};
    const int nd = connectivity == 4 ? 4 : 8;
    for (int s = 0; s < h * w; ++s) {
        if (b.v[static_cast<size_t>(s)] <= 0.5f || label[static_cast<size_t>(s)] >= 0) continue;
        const int id = static_cast<int>(sizes.size());
        sizes.push_back(0);
        std::queue<int> q;
        q.push(s);
        label[static_cast<size_t>(s)] = id;
        while (!q.empty()) {
            const int p = q.front();
            q.pop();
            ++sizes[static_cast<size_t>(id)];
            for (int d = 0; d < nd; ++d) {
                const int ny = p / w + dy8[d], nx = p % w + dx8[d];
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                const int t = ny * w + nx;
                if (b.v[static_cast<size_t>(t)] > 0.5f && label[static_cast<size_t>(t)] < 0) {
                    label[static_cast<size_t>(t)] = id;
                    q.push(t);
                }
            }
        }
    }
    TensorF out(b.shape);
    out.fill(0.0f);
    if (sizes.empty()) return out;
    int best = 0;
    for (size_t i = 1; i < sizes.size(); ++i)
        if (sizes[i] > sizes[static_cast<size_t>(best)]) best = static_cast<int>(i);
    for (size_t i = 0; i < out.v.size(); ++i)
        if (label[i] == best) out.v[i] = 1.0f;
    return out;
}

// exhaustive Otsu reference: recompute both class statistics per candidate
double otsu_oracle(const TensorF& heat) {
    std::array<long long, 256> hist{};
    for (float v : heat.v) {
        double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
        ++hist[static_cast<size_t>(std::min(255, static_cast<int>(c * 256)))];
    }
    double best_var = -1.0;
    int best_t = -1;
    for (int t = 0; t < 255; ++t) {
        long long w0 = 0, w1 = 0;
        double s0 = 0.0, s1 = 0.0;
        for (int k = 0; k <= t; ++k) {
            w0 += hist[static_cast<size_t>(k)];
            s0 += static_cast<double>(hist[static_cast<size_t>(k)]) * k;
        }
        for (int k = t + 1; k < 256; ++k) {
            w1 += hist[static_cast<size_t>(k)];
            s1 += static_cast<double>(hist[static_cast<size_t>(k)]) * k;
        }
        if (w0 == 0 || w1 == 0) continue;
        const double m0 = s0 / static_cast<double>(w0), m1 = s1 / static_cast<double>(w1);
        const double var = static_cast<double>(w0) * static_cast<double>(w1) * (m0 - m1) * (m0 - m1);
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    return best_t < 0 ? -1.0 : (best_t + 1) / 256.0;
}

AttnRecord synth_record(const TensorF& map_hw, int heads) {
    AttnRecord r;
    r.layer = "synthetic";
    r.heads = heads;
    r.h = map_hw.shape[0];
    r.w = map_hw.shape[1];
    const int n = r.h * r.w;
    r.img_mass = TensorF({heads, n, 1});
    for (int hd = 0; hd < heads; ++hd)
        for (int q = 0; q < n; ++q) r.img_mass.at(hd, q, 0) = map_hw.v[static_cast<size_t>(q)];
    return r;
}

}  // namespace

TEST_CASE("largest_region matches the flood-fill oracle on random grids") {
    Rng rng(81);
    for (int trial = 0; trial < 200; ++trial) {
        TensorF g({16, 16});
        const double density = rng.uniform(0.2, 0.8);
        for (auto& v : g.v) v = rng.uniform() < density ? 1.0f : 0.0f;
        for (int conn : {4, 8}) {
            auto got = largest_region(g, conn);
            auto want = largest_region_oracle(g, conn);
            CHECK(got.v == want.v);
        }
    }
    TensorF empty({16, 16});
    empty.fill(0.0f);
    auto out = largest_region(empty, 4);
    CHECK(std::all_of(out.v.begin(), out.v.end(), [](float v) { return v == 0.0f; }));
    CHECK_THROWS(largest_region(empty, 6));
}

TEST_CASE("largest_region tie-break keeps the first component in raster order") {
    TensorF g({4, 4});
    g.fill(0.0f);
    g.at(0, 0) = g.at(0, 1) = 1.0f;  // component seen first
    g.at(3, 2) = g.at(3, 3) = 1.0f;  // same size, later
    auto out = largest_region(g, 4);
    CHECK(out.at(0, 0) == 1.0f);
    CHECK(out.at(0, 1) == 1.0f);
    CHECK(out.at(3, 2) == 0.0f);
    CHECK(out.at(3, 3) == 0.0f);
}

TEST_CASE("otsu threshold equals the exhaustive-search oracle") {
    Rng rng(82);
    for (int trial = 0; trial < 100; ++trial) {
        TensorF h({16, 16});
        // bimodal-ish heatmaps with varying separation
        const double lo = rng.uniform(0.0, 0.3), hi = rng.uniform(0.5, 1.0);
        for (auto& v : h.v)
            v = static_cast<float>(std::clamp(
                (rng.uniform() < 0.4 ? hi : lo) + rng.uniform(-0.05, 0.05), 0.0, 1.0));
        bool found = false;
        const double got = otsu_threshold(h, &found);
        REQUIRE(found);
        CHECK(got == doctest::Approx(otsu_oracle(h)).epsilon(1e-12));
    }
}

TEST_CASE("constant heatmaps fall back to the fixed threshold") {
    TensorF h({8, 8});
    h.fill(0.7f);
    bool found = true;
    otsu_threshold(h, &found);
    CHECK(!found);
    auto bin_hi = threshold_map(h, ThresholdMethod::otsu);  // falls back to tau = 0.5
    CHECK(std::all_of(bin_hi.v.begin(), bin_hi.v.end(), [](float v) { return v == 1.0f; }));
    h.fill(0.3f);
    auto bin_lo = threshold_map(h, ThresholdMethod::otsu);
    CHECK(std::all_of(bin_lo.v.begin(), bin_lo.v.end(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("aggregate_attention upsamples, averages and max-normalizes") {
    TensorF map8({8, 8});
    map8.fill(0.2f);
    map8.at(2, 3) = 0.8f;
    auto heat = aggregate_attention({synth_record(map8, 2)}, 16);
    REQUIRE(heat.shape == std::vector<int>{16, 16});
    float mx = 0.0f;
    for (float v : heat.v) mx = std::max(mx, v);
    CHECK(mx == doctest::Approx(1.0).epsilon(1e-6));
    // the hot source pixel covers a 2x2 block at target resolution
    for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) CHECK(heat.at(4 + dy, 6 + dx) == doctest::Approx(1.0));
    CHECK(heat.at(0, 0) == doctest::Approx(0.25).epsilon(1e-6));  // 0.2 / 0.8
    // multiple records average before normalization
    TensorF flat({8, 8});
    flat.fill(0.8f);
    auto heat2 = aggregate_attention({synth_record(map8, 1), synth_record(flat, 1)}, 8);
    CHECK(heat2.at(2, 3) == doctest::Approx(1.0));
    CHECK(heat2.at(0, 0) == doctest::Approx(0.5 / 0.8).epsilon(1e-6));
}

TEST_CASE("synthetic block injection is recovered exactly by the full pipeline") {
    // a bright 8x8 block on a dim background, injected at two layer scales
    // with mild clutter that thresholding must reject
    TensorF fine({16, 16}), coarse({8, 8});
    fine.fill(0.1f);
    coarse.fill(0.1f);
    for (int y = 4; y < 8; ++y)
        for (int x = 6; x < 10; ++x) fine.at(y, x) = 0.9f;  // block at full res 8..16, 12..20
    for (int y = 2; y < 4; ++y)
        for (int x = 3; x < 5; ++x) coarse.at(y, x) = 0.9f;  // same block, coarser grid
    fine.at(15, 0) = 0.35f;  // isolated clutter pixel
    auto res = mask_from_records({synth_record(fine, 2), synth_record(coarse, 1)}, 32,
                                 ThresholdMethod::otsu, 0.5, 4);
    CHECK(!res.fallback);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            const bool inside = y >= 8 && y < 16 && x >= 12 && x < 20;
            CHECK(res.mask.at(y, x) == (inside ? 1.0f : 0.0f));
        }
}

TEST_CASE("empty post-filter masks fall back to the centered quarter box") {
    auto res = mask_from_records({}, 32, ThresholdMethod::fixed, 2.0, 4);
    CHECK(res.fallback);
    double area = 0.0;
    for (float v : res.mask.v) area += v;
    CHECK(area == doctest::Approx(32 * 32 * 0.25));
    CHECK(res.mask.at(16, 16) == 1.0f);
    CHECK(res.mask.at(0, 0) == 0.0f);
    // fixed tau above every value -> empty thresholded map
    TensorF h({32, 32});
    h.fill(0.4f);
    auto res2 = mask_from_records({synth_record(h, 1)}, 32, ThresholdMethod::fixed, 1.5, 4);
    CHECK(res2.fallback);
}

TEST_CASE("fixed threshold binarizes at the given tau") {
    TensorF h({4, 4});
    for (size_t i = 0; i < 16; ++i) h.v[i] = static_cast<float>(i) / 15.0f;
    auto b = threshold_map(h, ThresholdMethod::fixed, 0.5);
    for (size_t i = 0; i < 16; ++i) CHECK(b.v[i] == (h.v[i] >= 0.5f ? 1.0f : 0.0f));
}
