#pragma once
// Dual-pathway orchestration with fine-grained feature-level blending: the
// two pathways run block-synchronized through one backbone and their tapped
// block outputs are merged under a resolution-matched mask before feeding
// the next block. Also hosts the naive noise-space fusion (ablation
// baseline) and the training-free two-alpha mode.

#include <map>
#include <string>
#include <vector>

#include "dp/backbone.hpp"
#include "dp/region_losses.hpp"

namespace dp {

template <typename T>
struct PathwaySpec {
    const AdapterParams<T>* adapter = nullptr;
    T alpha = T(1);
    std::string label;  // "iea-like" / "tca-like"
};

// block resolution -> resampled mask, values in [0,1]
template <typename T>
using MaskPyramid = std::map<int, Tensor<T>>;

// Downsampling is area averaging (fractional weights), upsampling nearest
// neighbor; the full-resolution entry is the source mask itself.
template <typename T>
MaskPyramid<T> build_mask_pyramid(const Tensor<T>& mask, const std::vector<int>& resolutions) {
    int H = mask.dim(0);
    if (mask.dim(1) != H) throw std::invalid_argument("build_mask_pyramid: mask must be square");
    MaskPyramid<T> out;
    for (int r : resolutions) {
        if (out.count(r)) continue;
        Tensor<T> level({r, r});
        if (r == H) {
            level = mask;
        } else if (r < H) {
            if (H % r != 0) throw std::invalid_argument("build_mask_pyramid: incompatible resolution");
            int f = H / r;
            for (int y = 0; y < r; ++y)
                for (int x = 0; x < r; ++x) {
                    double acc = 0.0;
                    for (int dy = 0; dy < f; ++dy)
                        for (int dx = 0; dx < f; ++dx) acc += mask.at(y * f + dy, x * f + dx);
                    level.at(y, x) = static_cast<T>(acc / (f * f));
                }
        } else {
            if (r % H != 0) throw std::invalid_argument("build_mask_pyramid: incompatible resolution");
            int f = r / H;
            for (int y = 0; y < r; ++y)
                for (int x = 0; x < r; ++x) level.at(y, x) = mask.at(y / f, x / f);
        }
        out.emplace(r, std::move(level));
    }
    return out;
}

// m*f_iea + (1-m)*f_tca, mask broadcast over channels
template <typename T>
Tensor<T> blend_features(const Tensor<T>& f_iea, const Tensor<T>& f_tca, const Tensor<T>& m_level) {
    return fuse_noise(f_iea, f_tca, m_level);
}

enum class FusionMode { blended, independent };

struct FfbOptions {
    FusionMode mode = FusionMode::blended;
    bool private_streams = false;   // pathway B keeps its own stream after a blend
    bool cross_gradients = false;   // let gradients flow across the blend into the
                                    // other pathway (needed for full-graph FD checks)
};

template <typename T>
struct DualPathOut {
    ad::Var<T> eps_iea;   // pathway A head
    ad::Var<T> eps_tca;   // pathway B head
    ad::Var<T> eps_fused; // mask-fused prediction
};

template <typename T>
struct DualPathTaps {
    AttnRecorder* rec_a = nullptr;
    AttnRecorder* rec_b = nullptr;
    std::vector<BlockFeature>* feats_a = nullptr;
    std::vector<BlockFeature>* feats_b = nullptr;
};

template <typename T>
DualPathOut<T> dual_path_forward(const UNet<T>& net, const Tensor<T>& x_t, int t,
                                 const std::vector<int>& tokens, const Tensor<T>& face_emb,
                                 const PathwaySpec<T>& path_a, const PathwaySpec<T>& path_b,
                                 const Tensor<T>& mask, const FfbOptions& opt,
                                 const DualPathTaps<T>& taps = {}) {
    if (mask.dim(0) != net.cfg.image_size || mask.dim(1) != net.cfg.image_size)
        throw std::invalid_argument("dual_path_forward: mask must be at image resolution");
    if (!path_a.adapter || !path_b.adapter)
        throw std::invalid_argument("dual_path_forward: both pathway adapters required");

    auto cond = [&](const PathwaySpec<T>& p) {
        return ImageCondition<T>{project_embedding(face_emb, *p.adapter), p.adapter, p.alpha};
    };
    auto run_a = net.begin(x_t, t, tokens, cond(path_a), taps.rec_a, taps.feats_a);
    auto run_b = net.begin(x_t, t, tokens, cond(path_b), taps.rec_b, taps.feats_b);
    auto mask_full = ad::constant<T>(mask);

    if (opt.mode == FusionMode::independent) {
        net.encode(run_a);
        net.mid(run_a);
        for (int i = 0; i < net.n_up(); ++i) net.up_stage(run_a);
        auto eps_a = net.head(run_a);
        net.encode(run_b);
        net.mid(run_b);
        for (int i = 0; i < net.n_up(); ++i) net.up_stage(run_b);
        auto eps_b = net.head(run_b);
        return {eps_a, eps_b, fuse_noise_node(eps_a, eps_b, mask_full)};
    }

    std::vector<int> resolutions;
    for (auto& [id, r] : net.cfg.tap_resolutions()) resolutions.push_back(r);
    auto pyramid = build_mask_pyramid(mask, resolutions);
    std::map<int, ad::Var<T>> mask_nodes;
    for (auto& [r, m] : pyramid) mask_nodes.emplace(r, ad::constant<T>(m));

    auto blend_here = [&](PathRun<T>& a, PathRun<T>& b) {
        int r = a.h->val.dim(1);
        const auto& m = mask_nodes.at(r);
        auto fa = a.h;
        auto fb = b.h;
        ad::Var<T> for_a, for_b;
        if (opt.cross_gradients) {
            auto fused = ad::blend_mask(fa, fb, m);
            for_a = fused;
            for_b = fused;
        } else {
            // same fused values, but each pathway's gradient stays in its
            // own adapter (the fusion loss couples them at the heads)
            for_a = ad::blend_mask(fa, ad::detach(fb), m);
            for_b = ad::blend_mask(ad::detach(fa), fb, m);
        }
        a.h = for_a;
        b.h = opt.private_streams ? fb : for_b;
    };

    net.encode(run_a);
    net.encode(run_b);
    net.mid(run_a);
    net.mid(run_b);
    blend_here(run_a, run_b);
    for (int i = 0; i < net.n_up(); ++i) {
        net.up_stage(run_a);
        net.up_stage(run_b);
        blend_here(run_a, run_b);
    }
    auto eps_a = net.head(run_a);
    auto eps_b = net.head(run_b);
    return {eps_a, eps_b, fuse_noise_node(eps_a, eps_b, mask_full)};
}

}  // namespace dp
