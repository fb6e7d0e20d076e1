#include "dp/mask_infer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace dp {

namespace {

// nearest-neighbour resize of a [h,w] map to [res,res]
void accumulate_nearest(const std::vector<float>& src, int h, int w, TensorF& dst, int res) {
    for (int y = 0; y < res; ++y) {
        int sy = static_cast<int>(static_cast<long long>(y) * h / res);
        for (int x = 0; x < res; ++x) {
            int sx = static_cast<int>(static_cast<long long>(x) * w / res);
            dst.v[static_cast<size_t>(y) * res + x] += src[static_cast<size_t>(sy) * w + sx];
        }
    }
}

}  // namespace

TensorF aggregate_attention(const std::vector<AttnRecord>& records, int target_resolution,
                            bool use_joint_mass) {
    if (target_resolution <= 0) throw std::invalid_argument("aggregate_attention: bad resolution");
    TensorF acc({target_resolution, target_resolution});
    acc.fill(0.0f);
    long long count = 0;
    std::vector<float> map;
    for (const auto& r : records) {
        const int n = r.h * r.w;
        map.assign(static_cast<size_t>(n), 0.0f);
        if (use_joint_mass) {
            const auto& s = r.img_mass.shape;
            if (s.size() != 3 || s[0] != r.heads || s[1] != n)
                throw std::invalid_argument("aggregate_attention: img_mass shape mismatch");
            // img_mass is [heads, N, Li]; total image mass per query, mean over heads
            const int k = s[2];
            for (int hd = 0; hd < r.heads; ++hd)
                for (int q = 0; q < n; ++q) {
                    const float* row = r.img_mass.v.data() +
                                       (static_cast<size_t>(hd) * n + q) * static_cast<size_t>(k);
                    float sum = 0.0f;
                    for (int j = 0; j < k; ++j) sum += row[j];
                    map[static_cast<size_t>(q)] += sum;
                }
            for (auto& v : map) v /= static_cast<float>(r.heads);
        } else {
            // img_probs is [heads, N, K]; mean over heads and keys per query
            const auto& s = r.img_probs.shape;
            if (s.size() != 3 || s[0] != r.heads || s[1] != n)
                throw std::invalid_argument("aggregate_attention: img_probs shape mismatch");
            const int k = s[2];
            for (int hd = 0; hd < r.heads; ++hd)
                for (int q = 0; q < n; ++q) {
                    const float* row = r.img_probs.v.data() +
                                       (static_cast<size_t>(hd) * n + q) * static_cast<size_t>(k);
                    float sum = 0.0f;
                    for (int j = 0; j < k; ++j) sum += row[j];
                    map[static_cast<size_t>(q)] += sum / static_cast<float>(k);
                }
            for (auto& v : map) v /= static_cast<float>(r.heads);
        }
        accumulate_nearest(map, r.h, r.w, acc, target_resolution);
        ++count;
    }
    if (count > 0)
        for (auto& v : acc.v) v /= static_cast<float>(count);
    float mx = 0.0f;
    for (float v : acc.v) mx = std::max(mx, v);
    if (mx > 0.0f)
        for (auto& v : acc.v) v /= mx;
    return acc;
}

double otsu_threshold(const TensorF& heat, bool* found) {
    constexpr int kBins = 256;
    std::array<long long, kBins> hist{};
    for (float v : heat.v) {
        double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
        int b = std::min(kBins - 1, static_cast<int>(c * kBins));
        ++hist[static_cast<size_t>(b)];
    }
    const long long total = static_cast<long long>(heat.v.size());
    double total_mean = 0.0;
    for (int b = 0; b < kBins; ++b) total_mean += static_cast<double>(hist[static_cast<size_t>(b)]) * b;
    total_mean /= static_cast<double>(total);

    // Maximize between-class variance over the 255 candidate splits
    // (class0 = bins <= t, class1 = bins > t). First maximum wins.
    double best_var = -1.0;
    int best_t = -1;
    long long w0 = 0;
    double sum0 = 0.0;
    for (int t = 0; t < kBins - 1; ++t) {
        w0 += hist[static_cast<size_t>(t)];
        sum0 += static_cast<double>(hist[static_cast<size_t>(t)]) * t;
        const long long w1 = total - w0;
        if (w0 == 0 || w1 == 0) continue;
        const double m0 = sum0 / static_cast<double>(w0);
        const double m1 = (total_mean * static_cast<double>(total) - sum0) / static_cast<double>(w1);
        const double var = static_cast<double>(w0) * static_cast<double>(w1) * (m0 - m1) * (m0 - m1);
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    if (found) *found = best_t >= 0;
    if (best_t < 0) return 0.5;  // degenerate histogram: caller falls back to fixed tau
    return static_cast<double>(best_t + 1) / static_cast<double>(kBins);
}

TensorF threshold_map(const TensorF& heat, ThresholdMethod method, double tau) {
    double thr = tau;
    if (method == ThresholdMethod::otsu) {
        bool found = false;
        double t = otsu_threshold(heat, &found);
        thr = found ? t : 0.5;
    }
    TensorF out(heat.shape);
    for (size_t i = 0; i < heat.v.size(); ++i)
        out.v[i] = static_cast<double>(heat.v[i]) >= thr ? 1.0f : 0.0f;
    return out;
}

TensorF largest_region(const TensorF& binary, int connectivity) {
    if (binary.shape.size() != 2) throw std::invalid_argument("largest_region: want [H,W]");
    if (connectivity != 4 && connectivity != 8)
        throw std::invalid_argument("largest_region: connectivity must be 4 or 8");
    const int h = binary.shape[0], w = binary.shape[1];
    std::vector<int> label(static_cast<size_t>(h) * w, -1);
    std::vector<long long> sizes;
    std::vector<int> stack;
    static const int dx8[] = {1, -1, 0, 0, 1, 1, -1, -1};
    static const int dy8[] = {0, 0, 1, -1, 1, -1, 1, -1};
    const int ndir = connectivity == 4 ? 4 : 8;

    for (int i = 0; i < h * w; ++i) {
        if (binary.v[static_cast<size_t>(i)] <= 0.5f || label[static_cast<size_t>(i)] >= 0) continue;
        const int id = static_cast<int>(sizes.size());
        sizes.push_back(0);
        stack.assign(1, i);
        label[static_cast<size_t>(i)] = id;
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            ++sizes[static_cast<size_t>(id)];
            const int py = p / w, px = p % w;
            for (int d = 0; d < ndir; ++d) {
                const int ny = py + dy8[d], nx = px + dx8[d];
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                const int q = ny * w + nx;
                if (binary.v[static_cast<size_t>(q)] > 0.5f && label[static_cast<size_t>(q)] < 0) {
                    label[static_cast<size_t>(q)] = id;
                    stack.push_back(q);
                }
            }
        }
    }
    TensorF out(binary.shape);
    out.fill(0.0f);
    if (sizes.empty()) return out;
    // ties break toward the component seen first in raster order (lowest id)
    int best = 0;
    for (int i = 1; i < static_cast<int>(sizes.size()); ++i)
        if (sizes[static_cast<size_t>(i)] > sizes[static_cast<size_t>(best)]) best = i;
    for (size_t i = 0; i < out.v.size(); ++i)
        if (label[i] == best) out.v[i] = 1.0f;
    return out;
}

TensorF fallback_mask(int resolution) {
    // centered box covering 25% of the area (half the side length)
    TensorF m({resolution, resolution});
    m.fill(0.0f);
    const int side = resolution / 2;
    const int off = (resolution - side) / 2;
    for (int y = off; y < off + side; ++y)
        for (int x = off; x < off + side; ++x) m.v[static_cast<size_t>(y) * resolution + x] = 1.0f;
    return m;
}

MaskPipelineResult mask_from_records(const std::vector<AttnRecord>& records, int resolution,
                                     ThresholdMethod method, double tau, int connectivity) {
    MaskPipelineResult r;
    r.heatmap = aggregate_attention(records, resolution);
    r.thresholded = threshold_map(r.heatmap, method, tau);
    r.filtered = largest_region(r.thresholded, connectivity);
    bool empty = true;
    for (float v : r.filtered.v)
        if (v > 0.5f) {
            empty = false;
            break;
        }
    if (empty) {
        r.mask = fallback_mask(resolution);
        r.fallback = true;
    } else {
        r.mask = r.filtered;
    }
    return r;
}

}  // namespace dp
