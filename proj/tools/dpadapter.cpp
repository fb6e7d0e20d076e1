// Command-line driver: dataset generation, the two training stages,
// sampling, evaluation, the ablation table and the gradient check.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "dp/checkpoint.hpp"
#include "dp/pipeline.hpp"
#include "dp/png_io.hpp"

namespace fs = std::filesystem;

namespace {

dp::RunConfig load_cfg(const std::string& path, const std::string& preset) {
    dp::RunConfig cfg = path.empty() ? dp::RunConfig{} : dp::load_config(path);
    if (!preset.empty()) dp::apply_preset(cfg, preset);
    return cfg;
}

dp::Model load_model(const dp::RunConfig& cfg, const std::string& ckpt_path, uint64_t seed) {
    dp::Model m = dp::build_model(cfg, seed, /*with_adapters=*/true);
    const dp::Checkpoint ckpt = dp::load_checkpoint(ckpt_path);
    dp::restore(ckpt, m.store);
    return m;
}

dp::GenSetup parse_setup(const std::string& s) {
    if (s == "iea") return {dp::GenSetup::Kind::iea_only, false, -1.0};
    if (s == "tca") return {dp::GenSetup::Kind::tca_only, false, -1.0};
    if (s == "dual") return {dp::GenSetup::Kind::dual, true, -1.0};
    if (s == "dual-noffb") return {dp::GenSetup::Kind::dual, false, -1.0};
    if (s == "training-free") return {dp::GenSetup::Kind::training_free, true, -1.0};
    throw CLI::ValidationError("--setup", "unknown setup " + s);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-pathway adapter diffusion on the procedural face world"};
    app.require_subcommand(1);

    std::string config_path, preset, out, dump_masks;
    uint64_t seed = 0;
    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--preset", preset, "config preset (toy, paper)");
    app.add_option("--seed", seed, "global seed");
    app.add_option("--out", out, "output path");
    app.add_option("--dump-masks", dump_masks, "directory for mask pipeline PNGs");
    app.fallthrough();

    // gen-data
    auto* gen_data = app.add_subcommand("gen-data", "render a DPTOY dataset");
    int n_identities = 30, per_identity = 8;
    gen_data->add_option("--identities", n_identities, "number of identities");
    gen_data->add_option("--per-identity", per_identity, "samples per identity");

    // train-base
    auto* train_base = app.add_subcommand("train-base", "denoising pretraining of the backbone");
    std::string data_path, base_path, log_path;
    train_base->add_option("--data", data_path, "DPTOY dataset")->required();
    train_base->add_option("--log", log_path, "loss CSV");

    // train-adapters
    auto* train_adapters =
        app.add_subcommand("train-adapters", "region-masked dual-adapter training");
    train_adapters->add_option("--data", data_path, "DPTOY dataset")->required();
    train_adapters->add_option("--base", base_path, "backbone checkpoint")->required();
    train_adapters->add_option("--log", log_path, "loss CSV");

    // generate
    auto* generate = app.add_subcommand("generate", "two-phase sampling for one prompt");
    std::string ckpt_path, setup_str = "dual";
    int identity_id = 0;
    std::string bg_str = "red", place_str = "center", size_str = "small";
    generate->add_option("--ckpt", ckpt_path, "full checkpoint")->required();
    generate->add_option("--data", data_path, "DPTOY dataset (identity source)")->required();
    generate->add_option("--identity", identity_id, "identity id");
    generate->add_option("--background", bg_str, "red|green|blue|striped");
    generate->add_option("--placement", place_str, "left|center|right");
    generate->add_option("--size", size_str, "small|large");
    generate->add_option("--setup", setup_str, "iea|tca|dual|dual-noffb|training-free");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "metric sweep over a prompt grid");
    int images_per_prompt = 1, max_identities = 0, max_captions = 0;
    evaluate->add_option("--ckpt", ckpt_path, "full checkpoint")->required();
    evaluate->add_option("--data", data_path, "DPTOY dataset")->required();
    evaluate->add_option("--setup", setup_str, "iea|tca|dual|dual-noffb|training-free");
    evaluate->add_option("--images-per-prompt", images_per_prompt, "samples per prompt");
    evaluate->add_option("--max-identities", max_identities, "cap identities (0 = all)");
    evaluate->add_option("--max-captions", max_captions, "cap captions (0 = all 24)");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "adapter/fusion ablation table");
    ablate->add_option("--ckpt", ckpt_path, "full checkpoint")->required();
    ablate->add_option("--data", data_path, "DPTOY dataset")->required();
    ablate->add_option("--images-per-prompt", images_per_prompt, "samples per prompt");
    ablate->add_option("--max-identities", max_identities, "cap identities (0 = all)");
    ablate->add_option("--max-captions", max_captions, "cap captions (0 = all 24)");

    // grad-check
    auto* grad_check = app.add_subcommand("grad-check", "finite-difference gradient check");
    int gc_params = 24;
    double gc_eps = 1e-4;
    grad_check->add_option("--params", gc_params, "number of sampled parameters");
    grad_check->add_option("--eps", gc_eps, "finite-difference step");

    CLI11_PARSE(app, argc, argv);

    try {
        auto captions_grid = [&] {
            std::vector<dp::Caption> caps;
            for (int b = 0; b < 4; ++b)
                for (int p = 0; p < 3; ++p)
                    for (int s = 0; s < 2; ++s)
                        caps.push_back({static_cast<dp::Background>(b),
                                        static_cast<dp::Placement>(p),
                                        static_cast<dp::FaceSize>(s)});
            if (max_captions > 0 && static_cast<int>(caps.size()) > max_captions)
                caps.resize(static_cast<size_t>(max_captions));
            return caps;
        };

        if (gen_data->parsed()) {
            if (out.empty()) throw std::runtime_error("gen-data: --out required");
            auto ds = dp::make_dataset(n_identities, per_identity, seed);
            dp::save_dataset(out, ds);
            std::cout << "wrote " << ds.samples.size() << " samples (" << n_identities
                      << " identities) to " << out << "\n";
        } else if (train_base->parsed()) {
            if (out.empty()) throw std::runtime_error("train-base: --out required");
            auto cfg = load_cfg(config_path, preset);
            auto ds = dp::load_dataset(data_path);
            auto m = dp::build_model(cfg, seed, /*with_adapters=*/false);
            auto stats = dp::train_base(m, ds, cfg, seed + 1, log_path);
            dp::save_checkpoint(out, dp::snapshot(m.store, {"base."}));
            std::cout << "train-base: " << stats.steps << " steps, final loss "
                      << stats.final_loss << ", checkpoint " << out << "\n";
        } else if (train_adapters->parsed()) {
            if (out.empty()) throw std::runtime_error("train-adapters: --out required");
            auto cfg = load_cfg(config_path, preset);
            auto ds = dp::load_dataset(data_path);
            auto m = dp::build_model(cfg, seed, /*with_adapters=*/true);
            dp::restore(dp::load_checkpoint(base_path), m.store, {"base."});
            auto stats = dp::train_adapters(m, ds, cfg, seed + 2, log_path);
            dp::save_checkpoint(out, dp::snapshot(m.store));
            std::cout << "train-adapters: " << stats.steps << " steps, final loss "
                      << stats.final_loss << ", checkpoint " << out << "\n";
        } else if (generate->parsed()) {
            if (out.empty()) throw std::runtime_error("generate: --out required");
            auto cfg = load_cfg(config_path, preset);
            auto ds = dp::load_dataset(data_path);
            const dp::IdentitySpec* id = nullptr;
            for (const auto& i : ds.identities)
                if (i.id == identity_id) id = &i;
            if (!id) throw std::runtime_error("generate: identity not found in dataset");
            dp::Caption cap;
            if (!dp::parse_background(bg_str, cap.background) ||
                !dp::parse_placement(place_str, cap.placement) ||
                !dp::parse_face_size(size_str, cap.size))
                throw std::runtime_error("generate: bad caption attribute");
            auto m = load_model(cfg, ckpt_path, seed);
            fs::create_directories(out);
            if (!dump_masks.empty()) fs::create_directories(dump_masks);
            auto g = dp::generate(m, cfg, *id, cap, parse_setup(setup_str), seed,
                                  dump_masks.empty() ? out : dump_masks);
            dp::write_png_rgb(out + "/image.png", g.image);
            dp::write_png_mask(out + "/mask.png", g.mask);
            std::cout << "face_score " << g.face_score << " text_match " << g.text_match
                      << (g.mask_fallback ? " (mask fallback: empty region, centered box used)"
                                          : "")
                      << "\n";
        } else if (evaluate->parsed() || ablate->parsed()) {
            if (out.empty()) throw std::runtime_error("--out CSV path required");
            auto cfg = load_cfg(config_path, preset);
            auto ds = dp::load_dataset(data_path);
            auto ids = ds.identities;
            if (max_identities > 0 && static_cast<int>(ids.size()) > max_identities)
                ids.resize(static_cast<size_t>(max_identities));
            auto m = load_model(cfg, ckpt_path, seed);
            if (evaluate->parsed()) {
                auto sum = dp::evaluate(m, cfg, ids, captions_grid(), parse_setup(setup_str),
                                        seed, images_per_prompt, out);
                std::cout << "evaluate: mean face_score " << sum.mean_face << ", mean text_match "
                          << sum.mean_text << " over " << sum.rows.size() << " images\n";
            } else {
                auto rows = dp::ablate(m, cfg, ids, captions_grid(), seed, images_per_prompt, out);
                for (const auto& r : rows)
                    std::cout << r.variant << ": face_score " << r.face_score << ", text_match "
                              << r.text_match << "\n";
            }
        } else if (grad_check->parsed()) {
            auto res = dp::grad_check(seed == 0 ? 7 : seed, gc_params, gc_eps);
            std::cout << "grad-check: " << res.n_checked << " params, max rel err "
                      << res.max_rel_err << " -> " << (res.pass ? "pass" : "FAIL") << "\n";
            return res.pass ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
