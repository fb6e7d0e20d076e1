#pragma once
// Run configuration: flat dotted-key JSON, byte-stable serialization,
// unknown keys rejected.

#include <string>
#include <vector>

namespace dp {

struct RunConfig {
    // model
    int image_size = 32;
    int base_channels = 16;
    std::vector<int> channel_multipliers = {1, 2, 4};
    int heads = 2;
    int text_embed_dim = 32;
    int time_embed_dim = 64;
    int groups = 8;
    int n_image_tokens = 4;
    int token_dim = 32;
    int adapter_hidden = 64;

    // diffusion schedule
    int schedule_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    // sampling
    int ddim_steps = 50;
    double guidance_scale = 5.0;
    double eta = 0.0;
    bool cfg_per_pathway = false;

    // adapters
    double iea_alpha = 1.0;
    double tca_alpha = 0.5;

    // training
    double lr = 1e-3;
    int batch_size = 4;
    int base_steps = 1500;
    int adapter_steps = 600;
    double cond_dropout = 0.1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double loss_w_iea = 1.0;
    double loss_w_tca = 1.0;
    double loss_w_fusion = 1.0;

    // feature fusion
    std::string ffb_mode = "blended";  // or "independent"
    bool ffb_private_streams = false;
    bool ffb_cross_gradients = false;

    // mask inference
    std::string mask_threshold = "otsu";  // or "fixed"
    double mask_tau = 0.5;
    int mask_connectivity = 4;
    int mask_record_every = 1;  // record attention every k-th sampling step

    // training-free companion mode: one adapter at two strengths
    bool training_free = false;
    std::string training_free_adapter = "iea";
    double alpha_strong = 1.0;
    double alpha_weak = 0.4;

    bool operator==(const RunConfig&) const = default;
};

std::string serialize_config(const RunConfig& cfg);       // pretty JSON + trailing newline
RunConfig parse_config(const std::string& json_text);     // throws on unknown key / bad type
void save_config(const std::string& path, const RunConfig& cfg);
RunConfig load_config(const std::string& path);

// "paper" preset: the published hyper-parameters (lr 1e-5, batch 4,
// 50 sampling steps, guidance 5.0).
void apply_preset(RunConfig& cfg, const std::string& name);

}  // namespace dp
