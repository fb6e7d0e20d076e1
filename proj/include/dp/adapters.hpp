#pragma once
// Image-prompt pathway: frozen analytic face encoder, trainable projector
// MLP, and per-attention-layer key/value projections. IEA and TCA share
// this structure; they differ only in role tag, default alpha and learned
// values.

#include <array>
#include <map>
#include <string>

#include "dp/autodiff.hpp"
#include "dp/params.hpp"
#include "dp/tensor.hpp"

namespace dp {

constexpr int kFaceEmbedDim = 48;  // 4x4 RGB crop summary

struct BBox {
    int x = 0, y = 0, w = 0, h = 0;
};

// Crop the bbox from an [3,H,W] image, resample to 4x4 by exact area
// averaging, flatten (y, x, channel) to a 48-vector. Deterministic and
// frozen: no trainable state, no gradient flow.
template <typename T>
Tensor<T> encode_face(const Tensor<T>& image, const BBox& bbox) {
    int H = image.dim(1), W = image.dim(2);
    if (bbox.w <= 0 || bbox.h <= 0 || bbox.x < 0 || bbox.y < 0 || bbox.x + bbox.w > W ||
        bbox.y + bbox.h > H)
        throw std::invalid_argument("encode_face: bbox empty or out of bounds");
    Tensor<T> out({kFaceEmbedDim});
    for (int oy = 0; oy < 4; ++oy) {
        double y0 = bbox.y + bbox.h * (oy / 4.0);
        double y1 = bbox.y + bbox.h * ((oy + 1) / 4.0);
        for (int ox = 0; ox < 4; ++ox) {
            double x0 = bbox.x + bbox.w * (ox / 4.0);
            double x1 = bbox.x + bbox.w * ((ox + 1) / 4.0);
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0, area = 0.0;
                for (int iy = static_cast<int>(std::floor(y0)); iy < y1; ++iy) {
                    double wy = std::min<double>(y1, iy + 1) - std::max<double>(y0, iy);
                    if (wy <= 0) continue;
                    for (int ix = static_cast<int>(std::floor(x0)); ix < x1; ++ix) {
                        double wx = std::min<double>(x1, ix + 1) - std::max<double>(x0, ix);
                        if (wx <= 0) continue;
                        acc += wy * wx * image.at(c, iy, ix);
                        area += wy * wx;
                    }
                }
                out[(oy * 4 + ox) * 3 + c] = static_cast<T>(acc / area);
            }
        }
    }
    return out;
}

template <typename T>
struct AdapterLayerKV {
    ad::Var<T> wk;  // [token_dim, C_layer]
    ad::Var<T> wv;
};

template <typename T>
struct AdapterParams {
    std::string role;  // "iea" or "tca"
    T alpha_default = T(1);
    ad::Var<T> proj_w1, proj_b1, proj_w2, proj_b2;
    int n_tokens = 4;
    int token_dim = 32;
    std::map<std::string, AdapterLayerKV<T>> layers;  // keyed by attention layer id

    const AdapterLayerKV<T>& layer(const std::string& id) const {
        auto it = layers.find(id);
        if (it == layers.end()) throw std::out_of_range("AdapterParams: unknown layer " + id);
        return it->second;
    }
};

// attention layer id -> channel count, supplied by the backbone config
template <typename T>
AdapterParams<T> make_adapter(ParamStore<T>& store, const std::string& role,
                              const std::map<std::string, int>& layer_channels, int n_tokens,
                              int token_dim, int hidden, Rng& rng) {
    AdapterParams<T> a;
    a.role = role;
    a.alpha_default = role == "iea" ? T(1) : T(0.5);
    a.n_tokens = n_tokens;
    a.token_dim = token_dim;
    a.proj_w1 = store.add(role + ".proj.w1",
                          normal_init<T>(rng, {kFaceEmbedDim, hidden}, std::sqrt(1.0 / kFaceEmbedDim)));
    a.proj_b1 = store.add(role + ".proj.b1", Tensor<T>::zeros({hidden}));
    a.proj_w2 = store.add(role + ".proj.w2",
                          normal_init<T>(rng, {hidden, n_tokens * token_dim}, std::sqrt(1.0 / hidden)));
    a.proj_b2 = store.add(role + ".proj.b2", Tensor<T>::zeros({n_tokens * token_dim}));
    for (auto& [id, C] : layer_channels) {
        AdapterLayerKV<T> kv;
        kv.wk = store.add(role + ".attn." + id + ".wk",
                          normal_init<T>(rng, {token_dim, C}, std::sqrt(1.0 / token_dim)));
        // zero value projection: the adapter starts as a no-op
        kv.wv = store.add(role + ".attn." + id + ".wv", Tensor<T>::zeros({token_dim, C}));
        a.layers.emplace(id, std::move(kv));
    }
    return a;
}

// face embedding -> [n_tokens, token_dim] image prompt tokens
template <typename T>
ad::Var<T> project_embedding(const Tensor<T>& face_emb, const AdapterParams<T>& p) {
    if (face_emb.size() != kFaceEmbedDim)
        throw std::invalid_argument("project_embedding: bad embedding dim");
    Tensor<T> row = face_emb;
    row.shape = {1, kFaceEmbedDim};
    auto x = ad::constant<T>(std::move(row));
    auto h = ad::silu(ad::linear(x, p.proj_w1, p.proj_b1));
    auto tok = ad::linear(h, p.proj_w2, p.proj_b2);
    return ad::reshape(tok, {p.n_tokens, p.token_dim});
}

template <typename T>
struct KVPair {
    ad::Var<T> k;  // [L, C]
    ad::Var<T> v;
};

// project image tokens to one attention layer's keys/values
template <typename T>
KVPair<T> adapter_kv(const ad::Var<T>& tokens, const AdapterLayerKV<T>& w) {
    return {ad::matmul(tokens, w.wk), ad::matmul(tokens, w.wv)};
}

}  // namespace dp
