// Acceptance gate: ten go/no-go checks over the whole stack, one PASS/FAIL
// line each. The first seven and the round-trip check are fast properties;
// the two trend checks train a small model once (shared between them) and
// read orderings off the analytic metrics.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include <sys/stat.h>

#include "dp/checkpoint.hpp"
#include "dp/pipeline.hpp"
#include "dp/rng.hpp"

using namespace dp;

namespace {

int failures = 0;

void report(int idx, const std::string& name, bool ok, const std::string& detail = "") {
    std::printf("[%s] criterion %2d: %s%s%s\n", ok ? "PASS" : "FAIL", idx, name.c_str(),
                detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

bool bitwise_equal(const TensorF& a, const TensorF& b) {
    return a.same_shape(b) && std::memcmp(a.v.data(), b.v.data(), a.size() * sizeof(float)) == 0;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Small backbone + both adapters, params jittered so the zero-initialized
// projections do not make the structural identities vacuous.
struct TinyWorld {
    BackboneConfig cfg;
    ParamStore<float> store;
    std::unique_ptr<UNet<float>> net;
    AdapterParams<float> iea, tca;
    TensorF emb;

    explicit TinyWorld(uint64_t seed) {
        cfg.image_size = 16;
        cfg.base_channels = 8;
        cfg.channel_multipliers = {1, 2};
        cfg.heads = 2;
        cfg.text_embed_dim = 16;
        cfg.time_embed_dim = 16;
        cfg.groups = 4;
        cfg.n_image_tokens = 2;
        cfg.token_dim = 16;
        cfg.adapter_hidden = 16;
        Rng rng(seed);
        net = std::make_unique<UNet<float>>(cfg, store, rng);
        iea = make_adapter<float>(store, "iea", cfg.attention_layer_channels(), cfg.n_image_tokens,
                                  cfg.token_dim, cfg.adapter_hidden, rng);
        tca = make_adapter<float>(store, "tca", cfg.attention_layer_channels(), cfg.n_image_tokens,
                                  cfg.token_dim, cfg.adapter_hidden, rng);
        for (auto& [name, var] : store.params)
            for (auto& v : var->val.v) v += static_cast<float>(rng.normal() * 0.05);
        emb = TensorF({kFaceEmbedDim});
        Rng data(seed ^ 0x5eed);
        for (auto& v : emb.v) v = static_cast<float>(data.uniform(-1.0, 1.0));
    }
};

// ---------------------------------------------------------------- criterion 1

void c1_loss_identities() {
    Rng rng(101);
    bool ok = true;
    for (int trial = 0; trial < 100 && ok; ++trial) {
        auto noise = rng.normal_tensor<float>({3, 16, 16});
        auto pred = rng.normal_tensor<float>({3, 16, 16});
        TensorF ones({16, 16}), zeros({16, 16}), bin({16, 16});
        ones.fill(1.0f);
        zeros.fill(0.0f);
        for (auto& v : bin.v) v = rng.uniform() < 0.5 ? 1.0f : 0.0f;
        const double mse = loss_fusion(noise, pred);
        if (std::abs(loss_iea(noise, pred, ones) - mse) > 1e-6) ok = false;
        if (loss_iea(noise, pred, zeros) != 0.0) ok = false;
        const double sum = loss_iea(noise, pred, bin) + loss_tca(noise, pred, bin);
        if (std::abs(sum - mse) > 1e-6) ok = false;
    }
    report(1, "region loss identities (100 random cases)", ok);
}

// ---------------------------------------------------------------- criterion 2

void c2_fusion_identities() {
    bool ok = true;
    {
        Rng rng(102);
        for (int trial = 0; trial < 100 && ok; ++trial) {
            auto a = rng.normal_tensor<float>({3, 8, 8});
            auto b = rng.normal_tensor<float>({3, 8, 8});
            TensorF ones({8, 8}), zeros({8, 8}), bin({8, 8});
            ones.fill(1.0f);
            zeros.fill(0.0f);
            for (auto& v : bin.v) v = rng.uniform() < 0.5 ? 1.0f : 0.0f;
            if (!bitwise_equal(fuse_noise(a, b, ones), a)) ok = false;
            if (!bitwise_equal(fuse_noise(a, b, zeros), b)) ok = false;
            auto f = fuse_noise(a, b, bin);
            for (int c = 0; c < 3 && ok; ++c)
                for (int i = 0; i < 64; ++i) {
                    const float want = bin.v[static_cast<size_t>(i)] == 1.0f ? a.v[c * 64 + i]
                                                                             : b.v[c * 64 + i];
                    if (std::memcmp(&f.v[c * 64 + i], &want, 4) != 0) {
                        ok = false;
                        break;
                    }
                }
        }
    }
    if (ok) {
        TinyWorld w(103);
        Rng rng(104);
        PathwaySpec<float> pa{&w.iea, 1.0f, "iea"};
        PathwaySpec<float> pb{&w.tca, 0.5f, "tca"};
        FfbOptions opt;  // blended
        for (int trial = 0; trial < 100 && ok; ++trial) {
            auto x = rng.normal_tensor<float>({3, 16, 16});
            const int t = rng.uniform_int(1000);
            TensorF m({16, 16});
            const int mode = trial % 3;  // m==1, m==0, identical specs
            if (mode == 0)
                m.fill(1.0f);
            else if (mode == 1)
                m.fill(0.0f);
            else
                for (auto& v : m.v) v = rng.uniform() < 0.5 ? 1.0f : 0.0f;
            std::vector<int> toks = {static_cast<int>(rng.uniform_int(4)),
                                     4 + static_cast<int>(rng.uniform_int(3)),
                                     7 + static_cast<int>(rng.uniform_int(2))};
            if (mode == 2) {
                auto out = dual_path_forward(*w.net, x, t, toks, w.emb, pa, pa, m, opt);
                ImageCondition<float> ia{project_embedding(w.emb, w.iea), &w.iea, 1.0f};
                auto alone = w.net->forward(x, t, toks, ia)->val;
                if (!bitwise_equal(out.eps_fused->val, alone)) ok = false;
            } else {
                auto out = dual_path_forward(*w.net, x, t, toks, w.emb, pa, pb, m, opt);
                const auto& spec = mode == 0 ? pa : pb;
                ImageCondition<float> ic{project_embedding(w.emb, *spec.adapter), spec.adapter,
                                         spec.alpha};
                auto alone = w.net->forward(x, t, toks, ic)->val;
                if (!bitwise_equal(out.eps_fused->val, alone)) ok = false;
            }
        }
    }
    report(2, "noise fusion and dual-path collapse identities (100 random cases)", ok);
}

// ---------------------------------------------------------------- criterion 3

void c3_alpha_mechanics() {
    Rng rng(105);
    bool ok = true;
    const int N = 16, C = 8, heads = 2, Lt = 3, Li = 2;
    for (int trial = 0; trial < 50 && ok; ++trial) {
        auto hidden = ad::constant<float>(rng.normal_tensor<float>({N, C}));
        KVPair<float> text{ad::constant<float>(rng.normal_tensor<float>({Lt, C})),
                           ad::constant<float>(rng.normal_tensor<float>({Lt, C}))};
        KVPair<float> img{ad::constant<float>(rng.normal_tensor<float>({Li, C})),
                          ad::constant<float>(rng.normal_tensor<float>({Li, C}))};
        auto text_only = merged_attention<float>(hidden, text, nullptr, 1.0f, heads)->val;
        auto at_zero = merged_attention<float>(hidden, text, &img, 0.0f, heads)->val;
        if (!bitwise_equal(text_only, at_zero)) ok = false;
        auto at_one = merged_attention<float>(hidden, text, &img, 1.0f, heads)->val;
        const float alpha = static_cast<float>(rng.uniform(0.05, 2.0));
        auto at_a = merged_attention<float>(hidden, text, &img, alpha, heads)->val;
        for (size_t i = 0; i < at_a.v.size(); ++i) {
            const double lhs = static_cast<double>(at_a.v[i]) - text_only.v[i];
            const double rhs = alpha * (static_cast<double>(at_one.v[i]) - text_only.v[i]);
            if (std::abs(lhs - rhs) > 1e-6) {
                ok = false;
                break;
            }
        }
    }
    report(3, "decoupled attention alpha mechanics (bitwise at 0, linear residual)", ok);
}

// ---------------------------------------------------------------- criterion 4

void c4_grad_check() {
    auto t0 = std::chrono::steady_clock::now();
    auto res = grad_check(7);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream detail;
    detail << res.n_checked << " params, max rel err " << res.max_rel_err << ", " << secs << " s";
    report(4, "finite-difference gradient check (64-bit, 8x8 model)",
           res.pass && res.n_checked >= 20 && res.max_rel_err < 1e-3 && secs < 60.0,
           detail.str());
}

// ---------------------------------------------------------------- criterion 5

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
    for (int i = 0; i < h * w; ++i)
        if (label[static_cast<size_t>(i)] == best) out.v[static_cast<size_t>(i)] = 1.0f;
    return out;
}

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
        const double var =
            static_cast<double>(w0) * static_cast<double>(w1) * (m0 - m1) * (m0 - m1);
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    return (best_t + 1) / 256.0;
}

void c5_mask_oracles() {
    Rng rng(106);
    bool ok = true;
    for (int trial = 0; trial < 200 && ok; ++trial) {
        TensorF g({16, 16});
        const double density = rng.uniform(0.2, 0.8);
        for (auto& v : g.v) v = rng.uniform() < density ? 1.0f : 0.0f;
        for (int conn : {4, 8})
            if (largest_region(g, conn).v != largest_region_oracle(g, conn).v) ok = false;
    }
    for (int trial = 0; trial < 200 && ok; ++trial) {
        TensorF h({12, 12});
        for (auto& v : h.v) v = static_cast<float>(rng.uniform());
        float mx = 0.0f;
        for (float v : h.v) mx = std::max(mx, v);
        for (auto& v : h.v) v /= mx;
        bool found = false;
        const double got = otsu_threshold(h, &found);
        if (!found || std::abs(got - otsu_oracle(h)) > 1e-12) ok = false;
    }
    report(5, "largest-region and Otsu implementations match exhaustive oracles", ok);
}

// ---------------------------------------------------------------- criterion 6

void c6_synthetic_mask_recovery() {
    // attention on a 16x16 query grid, hot on a 4x4 block: at the 32x32
    // image resolution that is exactly an 8x8 block
    TensorF map({16, 16});
    map.fill(0.05f);
    for (int y = 4; y < 8; ++y)
        for (int x = 6; x < 10; ++x) map.at(y, x) = 1.0f;
    AttnRecord r;
    r.layer = "synthetic";
    r.heads = 2;
    r.h = 16;
    r.w = 16;
    r.img_mass = TensorF({2, 256, 1});
    for (int hd = 0; hd < 2; ++hd)
        for (int q = 0; q < 256; ++q) r.img_mass.at(hd, q, 0) = map.v[static_cast<size_t>(q)];
    auto res = mask_from_records({r}, 32, ThresholdMethod::otsu, 0.5, 4);
    TensorF want({32, 32});
    want.fill(0.0f);
    for (int y = 8; y < 16; ++y)
        for (int x = 12; x < 20; ++x) want.at(y, x) = 1.0f;
    report(6, "synthetic attention block recovered exactly as the final mask",
           !res.fallback && res.mask.v == want.v);
}

// ---------------------------------------------------------------- criterion 7

RunConfig fast_cfg() {
    RunConfig cfg;  // full 32x32 toy geometry, short sampling ladder
    cfg.ddim_steps = 10;
    return cfg;
}

void c7_determinism() {
    auto cfg = fast_cfg();
    auto m = build_model(cfg, 21, true);
    auto ids = make_identities(2, 22);
    Caption cap{Background::green, Placement::left, FaceSize::small};
    GenSetup setup;  // dual + ffb
    bool ok = true;
    ::mkdir("acc_det_a", 0755);
    ::mkdir("acc_det_b", 0755);
    auto r1 = generate(m, cfg, ids[0], cap, setup, 4242, "acc_det_a");
    auto r2 = generate(m, cfg, ids[0], cap, setup, 4242, "acc_det_b");
    for (const char* f : {"image.png", "mask.png"}) {
        const auto a = slurp(std::string("acc_det_a/") + f);
        const auto b = slurp(std::string("acc_det_b/") + f);
        if (a.empty() || a != b) ok = false;
    }
    if (!bitwise_equal(r1.image, r2.image) || !bitwise_equal(r1.mask, r2.mask)) ok = false;
    report(7, "generate is byte-deterministic in (seed, config, weights)", ok);
}

// ------------------------------------------------------- criteria 8 and 9

struct TrainedSetup {
    RunConfig cfg;
    Model model;
    Dataset ds;
};

std::optional<TrainedSetup> train_toy_model() {
    RunConfig cfg = fast_cfg();
    cfg.base_steps = 3000;
    cfg.adapter_steps = 1200;
    TrainedSetup s{cfg, build_model(cfg, 1001, true), make_dataset(30, 8, 1002)};
    auto t0 = std::chrono::steady_clock::now();
    auto bs = train_base(s.model, s.ds, s.cfg, 1003, "acc_train_base.csv");
    auto t1 = std::chrono::steady_clock::now();
    auto as = train_adapters(s.model, s.ds, s.cfg, 1004, "acc_train_adapters.csv");
    auto t2 = std::chrono::steady_clock::now();
    std::printf("  [info] stage 1: %d steps in %.0f s (loss %.4f); stage 2: %d steps in %.0f s "
                "(loss %.4f)\n",
                bs.steps, std::chrono::duration<double>(t1 - t0).count(), bs.final_loss, as.steps,
                std::chrono::duration<double>(t2 - t1).count(), as.final_loss);
    std::fflush(stdout);
    return s;
}

std::vector<Caption> eval_captions() {
    return {{Background::green, Placement::left, FaceSize::small},
            {Background::blue, Placement::right, FaceSize::large},
            {Background::striped, Placement::center, FaceSize::large}};
}

void c8_trend(const std::optional<TrainedSetup>& ts) {
    if (!ts) {
        report(8, "ablation trend orderings (medians over 3 seeds)", false, "training failed");
        return;
    }
    std::vector<IdentitySpec> ids(ts->ds.identities.begin(), ts->ds.identities.begin() + 4);
    auto caps = eval_captions();
    std::vector<double> f_iea, f_tca, f_ind, f_ffb, t_iea, t_tca, t_ind, t_ffb;
    for (uint64_t seed : {301u, 302u, 303u}) {
        auto rows = ablate(ts->model, ts->cfg, ids, caps, seed, 1,
                           "acc_ablate_" + std::to_string(seed) + ".csv");
        for (const auto& r : rows) {
            if (r.variant == "iea") f_iea.push_back(r.face_score), t_iea.push_back(r.text_match);
            if (r.variant == "tca") f_tca.push_back(r.face_score), t_tca.push_back(r.text_match);
            if (r.variant == "iea+tca")
                f_ind.push_back(r.face_score), t_ind.push_back(r.text_match);
            if (r.variant == "iea+tca+ffb")
                f_ffb.push_back(r.face_score), t_ffb.push_back(r.text_match);
        }
    }
    const double mf_iea = median(f_iea), mf_tca = median(f_tca), mf_ind = median(f_ind),
                 mf_ffb = median(f_ffb);
    const double mt_iea = median(t_iea), mt_tca = median(t_tca), mt_ind = median(t_ind),
                 mt_ffb = median(t_ffb);
    std::ostringstream detail;
    detail.precision(4);
    detail << "face iea/tca/ind/ffb = " << mf_iea << "/" << mf_tca << "/" << mf_ind << "/"
           << mf_ffb << "; text = " << mt_iea << "/" << mt_tca << "/" << mt_ind << "/" << mt_ffb;
    const bool ok = mf_iea > mf_tca && mt_tca > mt_iea && mf_ffb > mf_ind && mt_ffb > mt_ind;
    report(8, "ablation trend orderings (medians over 3 seeds)", ok, detail.str());
}

// Spearman rho with average ranks (4 points per sweep).
double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        const size_t n = v.size();
        std::vector<double> r(n);
        for (size_t i = 0; i < n; ++i) {
            double less = 0.0, equal = 0.0;
            for (size_t j = 0; j < n; ++j) {
                if (v[j] < v[i]) less += 1.0;
                if (v[j] == v[i]) equal += 1.0;
            }
            r[i] = less + (equal + 1.0) / 2.0;
        }
        return r;
    };
    auto rx = ranks(x), ry = ranks(y);
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < rx.size(); ++i) mx += rx[i], my += ry[i];
    mx /= static_cast<double>(rx.size());
    my /= static_cast<double>(ry.size());
    double num = 0.0, dx = 0.0, dy = 0.0;
    for (size_t i = 0; i < rx.size(); ++i) {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - my) * (ry[i] - my);
    }
    const double den = std::sqrt(dx * dy);
    return den > 0.0 ? num / den : 0.0;
}

void c9_alpha_sweep(const std::optional<TrainedSetup>& ts) {
    if (!ts) {
        report(9, "alpha-sweep direction (medians over 5 seeds)", false, "training failed");
        return;
    }
    std::vector<IdentitySpec> ids(ts->ds.identities.begin(), ts->ds.identities.begin() + 2);
    std::vector<Caption> caps = {{Background::green, Placement::left, FaceSize::small},
                                 {Background::blue, Placement::right, FaceSize::large}};
    const std::vector<double> alphas = {1.0, 0.7, 0.4, 0.1};
    std::vector<double> rho_face, rho_text;
    for (uint64_t seed : {401u, 402u, 403u, 404u, 405u}) {
        std::vector<double> faces, texts;
        for (double a : alphas) {
            GenSetup setup;
            setup.kind = GenSetup::Kind::iea_only;
            setup.alpha_override = a;
            auto summary = evaluate(ts->model, ts->cfg, ids, caps, setup, seed, 1);
            faces.push_back(summary.mean_face);
            texts.push_back(summary.mean_text);
        }
        rho_face.push_back(spearman(alphas, faces));
        rho_text.push_back(spearman(alphas, texts));
    }
    const double mf = median(rho_face), mt = median(rho_text);
    std::ostringstream detail;
    detail.precision(3);
    detail << "median rho(alpha, face) = " << mf << ", rho(alpha, text) = " << mt;
    report(9, "alpha-sweep direction (medians over 5 seeds)", mf > 0.0 && mt <= 0.0,
           detail.str());
}

// --------------------------------------------------------------- criterion 10

RunConfig random_config(Rng& rng) {
    RunConfig c;
    c.image_size = 8 << rng.uniform_int(3);
    c.base_channels = 8 + 8 * rng.uniform_int(4);
    c.heads = 1 + rng.uniform_int(4);
    c.ddim_steps = 1 + rng.uniform_int(100);
    c.guidance_scale = rng.uniform(0.0, 10.0);
    c.eta = rng.uniform(0.0, 1.0);
    c.cfg_per_pathway = rng.uniform() < 0.5;
    c.iea_alpha = rng.uniform(0.0, 2.0);
    c.tca_alpha = rng.uniform(0.0, 2.0);
    c.lr = rng.uniform(1e-6, 1e-2);
    c.batch_size = 1 + rng.uniform_int(8);
    c.base_steps = rng.uniform_int(10000);
    c.adapter_steps = rng.uniform_int(10000);
    c.cond_dropout = rng.uniform(0.0, 0.5);
    c.ffb_mode = rng.uniform() < 0.5 ? "blended" : "independent";
    c.ffb_private_streams = rng.uniform() < 0.5;
    c.ffb_cross_gradients = rng.uniform() < 0.5;
    c.mask_threshold = rng.uniform() < 0.5 ? "otsu" : "fixed";
    c.mask_tau = rng.uniform(0.0, 1.0);
    c.mask_connectivity = rng.uniform() < 0.5 ? 4 : 8;
    c.mask_record_every = 1 + rng.uniform_int(10);
    c.training_free = rng.uniform() < 0.5;
    c.training_free_adapter = rng.uniform() < 0.5 ? "iea" : "tca";
    c.alpha_strong = rng.uniform(0.5, 1.5);
    c.alpha_weak = rng.uniform(0.0, 0.5);
    c.channel_multipliers = {1, 1 + rng.uniform_int(3), 2 + rng.uniform_int(4)};
    return c;
}

void c10_round_trips() {
    Rng rng(110);
    bool ok = true;
    for (int trial = 0; trial < 50 && ok; ++trial) {
        auto cfg = random_config(rng);
        const auto text = serialize_config(cfg);
        RunConfig back;
        try {
            back = parse_config(text);
        } catch (const std::exception&) {
            ok = false;
            break;
        }
        if (!(back == cfg) || serialize_config(back) != text) ok = false;

        Checkpoint ck;
        const int n = 1 + rng.uniform_int(8);
        for (int e = 0; e < n; ++e) {
            CheckpointEntry entry;
            entry.name = "p" + std::to_string(trial) + "." + std::to_string(e);
            const int len = 1 + rng.uniform_int(64);
            entry.dims = {len};
            entry.data.resize(static_cast<size_t>(len));
            for (auto& v : entry.data) v = static_cast<float>(rng.normal());
            ck.entries.push_back(std::move(entry));
        }
        save_checkpoint("acc_rt.dpckpt", ck);
        const auto bytes1 = slurp("acc_rt.dpckpt");
        Checkpoint back_ck;
        try {
            back_ck = load_checkpoint("acc_rt.dpckpt");
        } catch (const std::exception&) {
            ok = false;
            break;
        }
        save_checkpoint("acc_rt.dpckpt", back_ck);
        if (slurp("acc_rt.dpckpt") != bytes1) ok = false;
    }
    std::remove("acc_rt.dpckpt");
    report(10, "config and checkpoint round-trips are byte-exact (50 random instances)", ok);
}

}  // namespace

int main() {
    c1_loss_identities();
    c2_fusion_identities();
    c3_alpha_mechanics();
    c4_grad_check();
    c5_mask_oracles();
    c6_synthetic_mask_recovery();
    c7_determinism();
    std::optional<TrainedSetup> trained;
    try {
        trained = train_toy_model();
    } catch (const std::exception& e) {
        std::printf("  [info] training threw: %s\n", e.what());
    }
    c8_trend(trained);
    c9_alpha_sweep(trained);
    c10_round_trips();
    std::printf("%d/10 criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
