#include "dp/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "dp/png_io.hpp"
#include "dp/region_losses.hpp"
#include "dp/schedule.hpp"

namespace dp {

namespace {

struct MaskPathway {
    const AdapterParams<float>* adapter = nullptr;
    float alpha = 0.0f;
};

const AdapterParams<float>& pick_adapter(const Model& m, const std::string& role) {
    if (role == "iea") {
        if (!m.iea) throw std::runtime_error("generate: model lacks the iea adapter");
        return *m.iea;
    }
    if (role == "tca") {
        if (!m.tca) throw std::runtime_error("generate: model lacks the tca adapter");
        return *m.tca;
    }
    throw std::runtime_error("generate: unknown adapter role " + role);
}

// the pathway whose attention drives mask inference
MaskPathway mask_pathway(const Model& m, const RunConfig& cfg, const GenSetup& setup) {
    switch (setup.kind) {
        case GenSetup::Kind::iea_only:
            return {&pick_adapter(m, "iea"),
                    setup.alpha_override >= 0.0 ? static_cast<float>(setup.alpha_override)
                                                : static_cast<float>(cfg.iea_alpha)};
        case GenSetup::Kind::tca_only:
            return {&pick_adapter(m, "tca"),
                    setup.alpha_override >= 0.0 ? static_cast<float>(setup.alpha_override)
                                                : static_cast<float>(cfg.tca_alpha)};
        case GenSetup::Kind::dual:
            return {&pick_adapter(m, "tca"), static_cast<float>(cfg.tca_alpha)};
        case GenSetup::Kind::training_free:
            return {&pick_adapter(m, cfg.training_free_adapter),
                    static_cast<float>(cfg.alpha_weak)};
    }
    throw std::logic_error("mask_pathway: unreachable");
}

TensorF single_eps(const Model& m, const TensorF& x, int t, const std::vector<int>& tokens,
                   const AdapterParams<float>* adapter, float alpha, const TensorF& face_emb,
                   AttnRecorder* rec) {
    std::optional<ImageCondition<float>> img;
    if (adapter) img = ImageCondition<float>{project_embedding(face_emb, *adapter), adapter, alpha};
    return m.net->forward(x, t, tokens, img, rec)->val;
}

ThresholdMethod threshold_method(const RunConfig& cfg) {
    if (cfg.mask_threshold == "otsu") return ThresholdMethod::otsu;
    if (cfg.mask_threshold == "fixed") return ThresholdMethod::fixed;
    throw std::runtime_error("mask.threshold must be 'otsu' or 'fixed'");
}

}  // namespace

GenResult generate(const Model& m, const RunConfig& cfg, const IdentitySpec& identity,
                   const Caption& caption, const GenSetup& setup, uint64_t seed,
                   const std::string& dump_dir) {
    const auto sched = make_schedule(cfg.schedule_steps, cfg.beta_start, cfg.beta_end);
    const auto ts = ddim_timesteps(cfg.schedule_steps, cfg.ddim_steps);
    const int n = static_cast<int>(ts.size());
    const Sample ref = reference_portrait(identity);
    const TensorF face_emb = encode_face(ref.image, ref.bbox);
    const auto tokens = caption_tokens(caption);
    const auto null_toks = m.net->null_tokens();

    Rng rng(seed);
    const TensorF x_init = rng.normal_tensor<float>({3, cfg.image_size, cfg.image_size});
    Rng eta_rng = rng.fork();  // only consumed when sample.eta > 0

    auto ddim_advance = [&](TensorF& x, const TensorF& eps, int i) {
        const int t_prev = i + 1 < n ? ts[static_cast<size_t>(i + 1)] : -1;
        if (cfg.eta > 0.0) {
            const TensorF draw = eta_rng.normal_tensor<float>(x.shape);
            x = ddim_step(x, eps, ts[static_cast<size_t>(i)], t_prev, sched, cfg.eta, &draw);
        } else {
            x = ddim_step(x, eps, ts[static_cast<size_t>(i)], t_prev, sched);
        }
    };

    // phase 1: mask pass on the mask pathway alone, recording attention
    const MaskPathway mp = mask_pathway(m, cfg, setup);
    AttnRecorder recorder;
    TensorF x = x_init;
    for (int i = 0; i < n; ++i) {
        const int t = ts[static_cast<size_t>(i)];
        const bool record = cfg.mask_record_every > 0 && i % cfg.mask_record_every == 0;
        const TensorF eps_c =
            single_eps(m, x, t, tokens, mp.adapter, mp.alpha, face_emb, record ? &recorder : nullptr);
        const TensorF eps_u = single_eps(m, x, t, null_toks, nullptr, 0.0f, face_emb, nullptr);
        ddim_advance(x, cfg_combine(eps_u, eps_c, cfg.guidance_scale), i);
    }
    const MaskPipelineResult mr = mask_from_records(recorder.records, cfg.image_size,
                                                    threshold_method(cfg), cfg.mask_tau,
                                                    cfg.mask_connectivity);

    // phase 2: fresh pass from the same initial noise under the inferred mask
    GenResult res;
    res.mask = mr.mask;
    res.mask_fallback = mr.fallback;
    x = x_init;
    const bool single = setup.kind == GenSetup::Kind::iea_only || setup.kind == GenSetup::Kind::tca_only;
    if (single) {
        for (int i = 0; i < n; ++i) {
            const int t = ts[static_cast<size_t>(i)];
            const TensorF eps_c = single_eps(m, x, t, tokens, mp.adapter, mp.alpha, face_emb, nullptr);
            const TensorF eps_u = single_eps(m, x, t, null_toks, nullptr, 0.0f, face_emb, nullptr);
            ddim_advance(x, cfg_combine(eps_u, eps_c, cfg.guidance_scale), i);
        }
    } else {
        PathwaySpec<float> pa, pb;
        if (setup.kind == GenSetup::Kind::training_free) {
            const auto& a = pick_adapter(m, cfg.training_free_adapter);
            pa = {&a, static_cast<float>(cfg.alpha_strong), "strong"};
            pb = {&a, static_cast<float>(cfg.alpha_weak), "weak"};
        } else {
            pa = {&pick_adapter(m, "iea"), static_cast<float>(cfg.iea_alpha), "iea"};
            pb = {&pick_adapter(m, "tca"), static_cast<float>(cfg.tca_alpha), "tca"};
        }
        FfbOptions opts;
        opts.mode = setup.use_ffb ? FusionMode::blended : FusionMode::independent;
        opts.private_streams = cfg.ffb_private_streams;
        opts.cross_gradients = true;  // value-only pass; shares the blend nodes
        for (int i = 0; i < n; ++i) {
            const int t = ts[static_cast<size_t>(i)];
            auto out = dual_path_forward(*m.net, x, t, tokens, face_emb, pa, pb, res.mask, opts);
            const TensorF eps_u = single_eps(m, x, t, null_toks, nullptr, 0.0f, face_emb, nullptr);
            TensorF eps;
            if (cfg.cfg_per_pathway) {
                const TensorF ga = cfg_combine(eps_u, out.eps_iea->val, cfg.guidance_scale);
                const TensorF gb = cfg_combine(eps_u, out.eps_tca->val, cfg.guidance_scale);
                eps = fuse_noise(ga, gb, res.mask);
            } else {
                eps = cfg_combine(eps_u, out.eps_fused->val, cfg.guidance_scale);
            }
            ddim_advance(x, eps, i);
        }
    }
    res.image = x;
    res.face_score = face_score(res.image, res.mask, identity);
    res.text_match = text_match_score(res.image, res.mask, caption);

    if (!dump_dir.empty()) {
        write_png_rgb(dump_dir + "/image.png", res.image);
        write_png_mask(dump_dir + "/mask.png", res.mask);
        write_png_gray(dump_dir + "/heatmap.png", mr.heatmap);
        write_png_mask(dump_dir + "/thresholded.png", mr.thresholded);
        write_png_mask(dump_dir + "/filtered.png", mr.filtered);
    }
    return res;
}

EvalSummary evaluate(const Model& m, const RunConfig& cfg, const std::vector<IdentitySpec>& ids,
                     const std::vector<Caption>& captions, const GenSetup& setup, uint64_t seed,
                     int images_per_prompt, const std::string& csv) {
    if (ids.empty() || captions.empty() || images_per_prompt < 1)
        throw std::invalid_argument("evaluate: empty prompt grid");
    EvalSummary sum;
    Rng rng(seed);
    for (const auto& id : ids)
        for (const auto& cap : captions)
            for (int k = 0; k < images_per_prompt; ++k) {
                EvalRow row;
                row.identity = id.id;
                row.caption = cap;
                row.seed = rng.next_u64();
                auto g = generate(m, cfg, id, cap, setup, row.seed);
                row.face_score = g.face_score;
                row.text_match = g.text_match;
                sum.mean_face += row.face_score;
                sum.mean_text += row.text_match;
                sum.rows.push_back(row);
            }
    sum.mean_face /= static_cast<double>(sum.rows.size());
    sum.mean_text /= static_cast<double>(sum.rows.size());
    if (!csv.empty()) {
        std::ofstream f(csv);
        if (!f) throw std::runtime_error("evaluate: cannot open " + csv);
        f << "identity,background,placement,size,seed,face_score,text_match\n";
        for (const auto& r : sum.rows)
            f << r.identity << "," << to_string(r.caption.background) << ","
              << to_string(r.caption.placement) << "," << to_string(r.caption.size) << ","
              << r.seed << "," << r.face_score << "," << r.text_match << "\n";
    }
    return sum;
}

std::vector<AblateRow> ablate(const Model& m, const RunConfig& cfg,
                              const std::vector<IdentitySpec>& ids,
                              const std::vector<Caption>& captions, uint64_t seed,
                              int images_per_prompt, const std::string& csv) {
    struct Variant {
        const char* name;
        GenSetup setup;
    };
    const Variant variants[] = {
        {"iea", {GenSetup::Kind::iea_only, false, -1.0}},
        {"tca", {GenSetup::Kind::tca_only, false, -1.0}},
        {"iea+tca", {GenSetup::Kind::dual, false, -1.0}},
        {"iea+tca+ffb", {GenSetup::Kind::dual, true, -1.0}},
    };
    std::vector<AblateRow> rows;
    for (const auto& v : variants) {
        auto sum = evaluate(m, cfg, ids, captions, v.setup, seed, images_per_prompt);
        rows.push_back({v.name, sum.mean_face, sum.mean_text});
    }
    if (!csv.empty()) {
        std::ofstream f(csv);
        if (!f) throw std::runtime_error("ablate: cannot open " + csv);
        f << "variant,face_score,text_match\n";
        for (const auto& r : rows) f << r.variant << "," << r.face_score << "," << r.text_match << "\n";
    }
    return rows;
}

}  // namespace dp
