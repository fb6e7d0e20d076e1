#pragma once
// Small U-Net denoiser with timestep embedding, text cross-attention and
// decoupled image-adapter attention injection (Attn_text + alpha*Attn_image).
// The forward pass is decomposed into stages (encode / mid / up_stage / head)
// so the dual-pathway driver can interleave two passes and blend their
// features at every tapped block.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dp/adapters.hpp"
#include "dp/autodiff.hpp"
#include "dp/params.hpp"

namespace dp {

struct BackboneConfig {
    int image_size = 32;
    int in_channels = 3;
    int base_channels = 16;
    std::vector<int> channel_multipliers{1, 2, 4};
    int heads = 2;
    int text_embed_dim = 32;
    int time_embed_dim = 64;
    int vocab_size = 10;
    int null_token = 9;
    int text_len = 3;
    int groups = 8;
    int n_image_tokens = 4;
    int token_dim = 32;
    int adapter_hidden = 64;

    int levels() const { return static_cast<int>(channel_multipliers.size()); }
    int channels(int level) const { return base_channels * channel_multipliers[level]; }
    int resolution(int level) const { return image_size >> level; }

    void validate() const {
        if (levels() < 2) throw std::invalid_argument("config: need at least 2 levels");
        if (image_size % (1 << (levels() - 1)) != 0)
            throw std::invalid_argument("config: resolutions must divide image_size");
        for (int l = 0; l < levels(); ++l) {
            if (channels(l) % groups != 0)
                throw std::invalid_argument("config: channels must divide into norm groups");
            if (channels(l) % heads != 0)
                throw std::invalid_argument("config: channels must divide into heads");
        }
    }

    // cross-attention sits at every level except the finest
    std::map<std::string, int> attention_layer_channels() const {
        std::map<std::string, int> out;
        for (int l = 1; l < levels(); ++l) {
            out["down" + std::to_string(l)] = channels(l);
            out["up" + std::to_string(l)] = channels(l);
        }
        out["mid"] = channels(levels() - 1);
        return out;
    }

    std::vector<std::pair<std::string, int>> tap_resolutions() const {
        std::vector<std::pair<std::string, int>> taps;
        taps.emplace_back("mid", resolution(levels() - 1));
        for (int l = levels() - 1; l >= 0; --l)
            taps.emplace_back("up" + std::to_string(l), resolution(l));
        return taps;
    }
};

struct AttnRecord {
    std::string layer;
    int heads = 0, h = 0, w = 0;  // spatial grid of the queries
    TensorF text_probs;           // [heads, N, Lt], rows sum to 1
    TensorF img_probs;            // [heads, N, Li], rows sum to 1 (empty without adapter)
    TensorF img_mass;             // [heads, N, Li], image-key mass under a joint
                                  // text+image softmax; feeds mask inference
};

struct AttnRecorder {
    std::vector<AttnRecord> records;
};

struct BlockFeature {
    std::string id;
    int h = 0, w = 0;
    TensorF f;  // [C,h,w], detached copy
};

// Decoupled two-source attention. `hidden` is the projected query matrix
// [N,C]; returns text attention output plus alpha times image attention
// output (pre output-projection). With alpha == 0 or no image keys the text
// output is returned unchanged, bitwise.
template <typename T>
ad::Var<T> merged_attention(const ad::Var<T>& hidden, const KVPair<T>& text,
                            const KVPair<T>* image, T alpha, int heads,
                            AttnRecord* rec = nullptr) {
    int N = hidden->val.dim(0), C = hidden->val.dim(1);
    if (C % heads != 0) throw std::invalid_argument("merged_attention: C % heads != 0");
    int dh = C / heads;
    T inv_sqrt = static_cast<T>(1.0 / std::sqrt(double(dh)));
    int Lt = text.k->val.dim(0);
    int Li = image ? image->k->val.dim(0) : 0;
    if (rec) {
        rec->heads = heads;
        rec->text_probs = TensorF({heads, N, Lt});
        if (image) {
            rec->img_probs = TensorF({heads, N, Li});
            rec->img_mass = TensorF({heads, N, Li});
        }
    }
    std::vector<ad::Var<T>> text_heads, img_heads;
    for (int h = 0; h < heads; ++h) {
        auto qh = ad::col_slice(hidden, h * dh, (h + 1) * dh);
        auto kh = ad::col_slice(text.k, h * dh, (h + 1) * dh);
        auto vh = ad::col_slice(text.v, h * dh, (h + 1) * dh);
        auto st = ad::scale(ad::matmul_nt(qh, kh), inv_sqrt);
        auto pt = ad::softmax_rows(st);
        text_heads.push_back(ad::matmul(pt, vh));

        ad::Var<T> si, pi;
        if (image) {
            auto kih = ad::col_slice(image->k, h * dh, (h + 1) * dh);
            auto vih = ad::col_slice(image->v, h * dh, (h + 1) * dh);
            si = ad::scale(ad::matmul_nt(qh, kih), inv_sqrt);
            pi = ad::softmax_rows(si);
            img_heads.push_back(ad::matmul(pi, vih));
        }
        if (rec) {
            for (int i = 0; i < N; ++i)
                for (int k = 0; k < Lt; ++k)
                    rec->text_probs.at(h, i, k) = static_cast<float>(pt->val.at(i, k));
            if (image) {
                for (int i = 0; i < N; ++i) {
                    double mx = si->val.at(i, 0);
                    for (int k = 0; k < Li; ++k) mx = std::max<double>(mx, si->val.at(i, k));
                    for (int k = 0; k < Lt; ++k) mx = std::max<double>(mx, st->val.at(i, k));
                    double denom = 0.0;
                    for (int k = 0; k < Lt; ++k) denom += std::exp(st->val.at(i, k) - mx);
                    for (int k = 0; k < Li; ++k) denom += std::exp(si->val.at(i, k) - mx);
                    for (int k = 0; k < Li; ++k) {
                        rec->img_probs.at(h, i, k) = static_cast<float>(pi->val.at(i, k));
                        rec->img_mass.at(h, i, k) =
                            static_cast<float>(std::exp(si->val.at(i, k) - mx) / denom);
                    }
                }
            }
        }
    }
    auto text_out = ad::concat_cols(text_heads);
    if (!image || alpha == T(0)) return text_out;
    return ad::add_scaled(text_out, ad::concat_cols(img_heads), alpha);
}

namespace detail {

template <typename T>
struct ResBlockParams {
    ad::Var<T> gn1_g, gn1_b, conv1_w, conv1_b, temb_w, temb_b, gn2_g, gn2_b, conv2_w, conv2_b;
    ad::Var<T> skip_w, skip_b;  // only when cin != cout
};

template <typename T>
struct AttnParams {
    ad::Var<T> norm_g, norm_b, wq, wo;
    ad::Var<T> text_wk, text_wv;  // [text_embed_dim, C]
};

}  // namespace detail

// Image prompt conditioning for one forward pass.
template <typename T>
struct ImageCondition {
    ad::Var<T> tokens;                       // [n_tokens, token_dim]
    const AdapterParams<T>* adapter = nullptr;
    T alpha = T(1);
};

template <typename T>
struct PathRun {
    ad::Var<T> h;
    std::vector<ad::Var<T>> skips;
    ad::Var<T> temb;
    std::map<std::string, KVPair<T>> text_kv;
    std::map<std::string, KVPair<T>> img_kv;
    T alpha = T(0);
    bool has_image = false;
    AttnRecorder* rec = nullptr;
    std::vector<BlockFeature>* feats = nullptr;
    int up_idx = 0;
};

template <typename T>
class UNet {
public:
    BackboneConfig cfg;

    UNet(const BackboneConfig& c, ParamStore<T>& store, Rng& rng) : cfg(c) {
        cfg.validate();
        int L = cfg.levels();
        conv_in_w_ = store.add("base.conv_in.w",
                               conv_init(rng, cfg.channels(0), cfg.in_channels));
        conv_in_b_ = store.add("base.conv_in.b", Tensor<T>::zeros({cfg.channels(0)}));
        int D = cfg.time_embed_dim;
        temb_w1_ = store.add("base.temb.w1", normal_init<T>(rng, {D, D}, std::sqrt(1.0 / D)));
        temb_b1_ = store.add("base.temb.b1", Tensor<T>::zeros({D}));
        temb_w2_ = store.add("base.temb.w2", normal_init<T>(rng, {D, D}, std::sqrt(1.0 / D)));
        temb_b2_ = store.add("base.temb.b2", Tensor<T>::zeros({D}));
        text_embed_ = store.add("base.text.embed",
                                normal_init<T>(rng, {cfg.vocab_size, cfg.text_embed_dim}, 0.2));
        for (int l = 0; l < L; ++l) {
            res_["down" + std::to_string(l)] =
                make_res(store, "down" + std::to_string(l), cfg.channels(l), cfg.channels(l), rng);
            if (l > 0) {
                down_w_.push_back(store.add("base.down." + std::to_string(l - 1) + ".w",
                                            conv_init(rng, cfg.channels(l), cfg.channels(l - 1))));
                down_b_.push_back(store.add("base.down." + std::to_string(l - 1) + ".b",
                                            Tensor<T>::zeros({cfg.channels(l)})));
            }
        }
        res_["mid1"] = make_res(store, "mid1", cfg.channels(L - 1), cfg.channels(L - 1), rng);
        res_["mid2"] = make_res(store, "mid2", cfg.channels(L - 1), cfg.channels(L - 1), rng);
        for (int l = L - 1; l >= 0; --l) {
            res_["up" + std::to_string(l)] =
                make_res(store, "up" + std::to_string(l), 2 * cfg.channels(l), cfg.channels(l), rng);
            if (l < L - 1) {
                upc_w_[l] = store.add("base.upc." + std::to_string(l) + ".w",
                                      conv_init(rng, cfg.channels(l), cfg.channels(l + 1)));
                upc_b_[l] = store.add("base.upc." + std::to_string(l) + ".b",
                                      Tensor<T>::zeros({cfg.channels(l)}));
            }
        }
        for (auto& [id, C] : cfg.attention_layer_channels()) {
            detail::AttnParams<T> a;
            a.norm_g = store.add("base.attn." + id + ".norm.g", Tensor<T>::full({C}, T(1)));
            a.norm_b = store.add("base.attn." + id + ".norm.b", Tensor<T>::zeros({C}));
            a.wq = store.add("base.attn." + id + ".wq",
                             normal_init<T>(rng, {C, C}, std::sqrt(1.0 / C)));
            a.wo = store.add("base.attn." + id + ".wo", Tensor<T>::zeros({C, C}));
            a.text_wk = store.add("base.attn." + id + ".text.wk",
                                  normal_init<T>(rng, {cfg.text_embed_dim, C},
                                                 std::sqrt(1.0 / cfg.text_embed_dim)));
            a.text_wv = store.add("base.attn." + id + ".text.wv",
                                  normal_init<T>(rng, {cfg.text_embed_dim, C},
                                                 std::sqrt(1.0 / cfg.text_embed_dim)));
            attn_.emplace(id, std::move(a));
        }
        int c0 = cfg.channels(0);
        head_gn_g_ = store.add("base.head.gn.g", Tensor<T>::full({c0}, T(1)));
        head_gn_b_ = store.add("base.head.gn.b", Tensor<T>::zeros({c0}));
        head_w_ = store.add("base.head.conv.w", Tensor<T>::zeros({cfg.in_channels, c0 * 9}));
        head_b_ = store.add("base.head.conv.b", Tensor<T>::zeros({cfg.in_channels}));
    }

    PathRun<T> begin(const Tensor<T>& x_t, int t, const std::vector<int>& tokens,
                     const std::optional<ImageCondition<T>>& img, AttnRecorder* rec = nullptr,
                     std::vector<BlockFeature>* feats = nullptr) const {
        if (x_t.rank() != 3 || x_t.dim(0) != cfg.in_channels || x_t.dim(1) != cfg.image_size ||
            x_t.dim(2) != cfg.image_size)
            throw std::invalid_argument("backbone: input shape mismatch");
        PathRun<T> run;
        run.rec = rec;
        run.feats = feats;
        run.temb = time_embedding(t);
        auto emb = ad::embed_rows(text_embed_, tokens);  // [Lt, D]
        for (auto& [id, a] : attn_) {
            run.text_kv[id] = {ad::matmul(emb, a.text_wk), ad::matmul(emb, a.text_wv)};
            if (img && img->alpha != T(0)) {
                run.img_kv[id] = adapter_kv(img->tokens, img->adapter->layer(id));
            }
        }
        if (img) {
            run.alpha = img->alpha;
            run.has_image = img->alpha != T(0);
        }
        run.h = ad::constant<T>(x_t);
        return run;
    }

    void encode(PathRun<T>& run) const {
        run.h = ad::conv3x3(run.h, conv_in_w_, conv_in_b_);
        int L = cfg.levels();
        for (int l = 0; l < L; ++l) {
            if (l > 0) run.h = ad::conv3x3(run.h, down_w_[l - 1], down_b_[l - 1], 2);
            run.h = res_block(res_.at("down" + std::to_string(l)), run.h, run.temb);
            if (l >= 1) run.h = attn_block("down" + std::to_string(l), run);
            run.skips.push_back(run.h);
        }
    }

    void mid(PathRun<T>& run) const {
        run.h = res_block(res_.at("mid1"), run.h, run.temb);
        run.h = attn_block("mid", run);
        run.h = res_block(res_.at("mid2"), run.h, run.temb);
        record_tap("mid", run);
    }

    int n_up() const { return cfg.levels(); }

    // stage i handles level L-1-i
    void up_stage(PathRun<T>& run) const {
        int L = cfg.levels();
        int l = L - 1 - run.up_idx;
        if (run.up_idx > 0) {
            run.h = ad::upsample2x(run.h);
            run.h = ad::conv3x3(run.h, upc_w_.at(l), upc_b_.at(l));
        }
        run.h = ad::concat_c(run.h, run.skips[l]);
        run.h = res_block(res_.at("up" + std::to_string(l)), run.h, run.temb);
        if (l >= 1) run.h = attn_block("up" + std::to_string(l), run);
        record_tap("up" + std::to_string(l), run);
        ++run.up_idx;
    }

    ad::Var<T> head(PathRun<T>& run) const {
        auto h = ad::group_norm(run.h, head_gn_g_, head_gn_b_, cfg.groups);
        h = ad::silu(h);
        return ad::conv3x3(h, head_w_, head_b_);
    }

    // single-pathway forward
    ad::Var<T> forward(const Tensor<T>& x_t, int t, const std::vector<int>& tokens,
                       const std::optional<ImageCondition<T>>& img = std::nullopt,
                       AttnRecorder* rec = nullptr,
                       std::vector<BlockFeature>* feats = nullptr) const {
        auto run = begin(x_t, t, tokens, img, rec, feats);
        encode(run);
        mid(run);
        for (int i = 0; i < n_up(); ++i) up_stage(run);
        return head(run);
    }

    std::vector<int> null_tokens() const {
        return std::vector<int>(static_cast<size_t>(cfg.text_len), cfg.null_token);
    }

private:
    Tensor<T> conv_init(Rng& rng, int cout, int cin) const {
        return normal_init<T>(rng, {cout, cin * 9}, std::sqrt(2.0 / (cin * 9)));
    }

    detail::ResBlockParams<T> make_res(ParamStore<T>& store, const std::string& name, int cin,
                                       int cout, Rng& rng) const {
        detail::ResBlockParams<T> r;
        std::string p = "base.res." + name + ".";
        r.gn1_g = store.add(p + "gn1.g", Tensor<T>::full({cin}, T(1)));
        r.gn1_b = store.add(p + "gn1.b", Tensor<T>::zeros({cin}));
        r.conv1_w = store.add(p + "conv1.w", conv_init(rng, cout, cin));
        r.conv1_b = store.add(p + "conv1.b", Tensor<T>::zeros({cout}));
        r.temb_w = store.add(p + "temb.w",
                             normal_init<T>(rng, {cfg.time_embed_dim, cout},
                                            std::sqrt(1.0 / cfg.time_embed_dim)));
        r.temb_b = store.add(p + "temb.b", Tensor<T>::zeros({cout}));
        r.gn2_g = store.add(p + "gn2.g", Tensor<T>::full({cout}, T(1)));
        r.gn2_b = store.add(p + "gn2.b", Tensor<T>::zeros({cout}));
        r.conv2_w = store.add(p + "conv2.w", conv_init(rng, cout, cout));
        r.conv2_b = store.add(p + "conv2.b", Tensor<T>::zeros({cout}));
        if (cin != cout) {
            r.skip_w = store.add(p + "skip.w", normal_init<T>(rng, {cout, cin}, std::sqrt(1.0 / cin)));
            r.skip_b = store.add(p + "skip.b", Tensor<T>::zeros({cout}));
        }
        return r;
    }

    ad::Var<T> time_embedding(int t) const {
        int D = cfg.time_embed_dim;
        int half = D / 2;
        Tensor<T> sin_emb({1, D});
        for (int i = 0; i < half; ++i) {
            double freq = std::exp(-std::log(10000.0) * i / half);
            sin_emb.at(0, i) = static_cast<T>(std::sin(t * freq));
            sin_emb.at(0, half + i) = static_cast<T>(std::cos(t * freq));
        }
        auto e = ad::constant<T>(std::move(sin_emb));
        auto h = ad::silu(ad::linear(e, temb_w1_, temb_b1_));
        return ad::linear(h, temb_w2_, temb_b2_);  // [1, D]
    }

    ad::Var<T> res_block(const detail::ResBlockParams<T>& r, const ad::Var<T>& x,
                         const ad::Var<T>& temb) const {
        auto h = ad::group_norm(x, r.gn1_g, r.gn1_b, cfg.groups);
        h = ad::silu(h);
        h = ad::conv3x3(h, r.conv1_w, r.conv1_b);
        auto shift = ad::linear(ad::silu(temb), r.temb_w, r.temb_b);  // [1, cout]
        h = ad::add_bias_chw(h, ad::reshape(shift, {shift->val.dim(1)}));
        h = ad::group_norm(h, r.gn2_g, r.gn2_b, cfg.groups);
        h = ad::silu(h);
        h = ad::conv3x3(h, r.conv2_w, r.conv2_b);
        auto skip = r.skip_w ? ad::conv1x1(x, r.skip_w, r.skip_b) : x;
        return ad::add(skip, h);
    }

    ad::Var<T> attn_block(const std::string& id, PathRun<T>& run) const {
        const auto& a = attn_.at(id);
        int H = run.h->val.dim(1), W = run.h->val.dim(2);
        auto n = ad::group_norm(run.h, a.norm_g, a.norm_b, cfg.groups);
        auto flat = ad::chw_to_nc(n);  // [N,C]
        auto q = ad::matmul(flat, a.wq);
        AttnRecord* rec = nullptr;
        if (run.rec) {
            run.rec->records.push_back({});
            rec = &run.rec->records.back();
            rec->layer = id;
            rec->h = H;
            rec->w = W;
        }
        const KVPair<T>* img = nullptr;
        auto it = run.img_kv.find(id);
        if (run.has_image && it != run.img_kv.end()) img = &it->second;
        auto merged = merged_attention(q, run.text_kv.at(id), img, run.alpha, cfg.heads, rec);
        auto out = ad::matmul(merged, a.wo);
        return ad::add(run.h, ad::nc_to_chw(out, H, W));
    }

    void record_tap(const std::string& id, PathRun<T>& run) const {
        if (!run.feats) return;
        BlockFeature bf;
        bf.id = id;
        bf.h = run.h->val.dim(1);
        bf.w = run.h->val.dim(2);
        bf.f = run.h->val.template cast<float>();
        run.feats->push_back(std::move(bf));
    }

    ad::Var<T> conv_in_w_, conv_in_b_;
    ad::Var<T> temb_w1_, temb_b1_, temb_w2_, temb_b2_;
    ad::Var<T> text_embed_;
    std::map<std::string, detail::ResBlockParams<T>> res_;
    std::vector<ad::Var<T>> down_w_, down_b_;
    std::map<int, ad::Var<T>> upc_w_, upc_b_;
    std::map<std::string, detail::AttnParams<T>> attn_;
    ad::Var<T> head_gn_g_, head_gn_b_, head_w_, head_b_;
};

}  // namespace dp
