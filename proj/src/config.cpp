#include "dp/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dp {

namespace {

using nlohmann::json;

// One visitor drives serialization, parsing and the known-key set.
template <typename F>
void for_each_field(RunConfig& c, F&& f) {
    f("model.image_size", c.image_size);
    f("model.base_channels", c.base_channels);
    f("model.channel_multipliers", c.channel_multipliers);
    f("model.heads", c.heads);
    f("model.text_embed_dim", c.text_embed_dim);
    f("model.time_embed_dim", c.time_embed_dim);
    f("model.groups", c.groups);
    f("model.n_image_tokens", c.n_image_tokens);
    f("model.token_dim", c.token_dim);
    f("model.adapter_hidden", c.adapter_hidden);
    f("schedule.steps", c.schedule_steps);
    f("schedule.beta_start", c.beta_start);
    f("schedule.beta_end", c.beta_end);
    f("sample.ddim_steps", c.ddim_steps);
    f("sample.guidance_scale", c.guidance_scale);
    f("sample.eta", c.eta);
    f("sample.cfg_per_pathway", c.cfg_per_pathway);
    f("adapter.iea_alpha", c.iea_alpha);
    f("adapter.tca_alpha", c.tca_alpha);
    f("train.lr", c.lr);
    f("train.batch_size", c.batch_size);
    f("train.base_steps", c.base_steps);
    f("train.adapter_steps", c.adapter_steps);
    f("train.cond_dropout", c.cond_dropout);
    f("train.adam_beta1", c.adam_beta1);
    f("train.adam_beta2", c.adam_beta2);
    f("train.adam_eps", c.adam_eps);
    f("train.loss_w_iea", c.loss_w_iea);
    f("train.loss_w_tca", c.loss_w_tca);
    f("train.loss_w_fusion", c.loss_w_fusion);
    f("ffb.mode", c.ffb_mode);
    f("ffb.private_streams", c.ffb_private_streams);
    f("ffb.cross_gradients", c.ffb_cross_gradients);
    f("mask.threshold", c.mask_threshold);
    f("mask.tau", c.mask_tau);
    f("mask.connectivity", c.mask_connectivity);
    f("mask.record_every", c.mask_record_every);
    f("fusion.training_free", c.training_free);
    f("fusion.training_free_adapter", c.training_free_adapter);
    f("fusion.alpha_strong", c.alpha_strong);
    f("fusion.alpha_weak", c.alpha_weak);
}

}  // namespace

std::string serialize_config(const RunConfig& cfg) {
    json j = json::object();
    RunConfig& mut = const_cast<RunConfig&>(cfg);  // visitor reads only
    for_each_field(mut, [&](const char* key, auto& field) { j[key] = field; });
    return j.dump(2) + "\n";
}

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("config: parse error: ") + e.what());
    }
    if (!j.is_object()) throw std::runtime_error("config: top level must be an object");
    RunConfig cfg;  // defaults for absent keys
    std::vector<std::string> known;
    for_each_field(cfg, [&](const char* key, auto& field) {
        known.push_back(key);
        auto it = j.find(key);
        if (it == j.end()) return;
        try {
            field = it->get<std::decay_t<decltype(field)>>();
        } catch (const json::exception&) {
            throw std::runtime_error(std::string("config: bad type for key ") + key);
        }
    });
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw std::runtime_error("config: unknown key " + it.key());
    return cfg;
}

void save_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_config: cannot open " + path);
    f << serialize_config(cfg);
    if (!f) throw std::runtime_error("save_config: write failed for " + path);
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_config: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

void apply_preset(RunConfig& cfg, const std::string& name) {
    if (name == "paper") {
        cfg.lr = 1e-5;
        cfg.batch_size = 4;
        cfg.ddim_steps = 50;
        cfg.guidance_scale = 5.0;
    } else if (name == "toy") {
        ;  // the defaults
    } else {
        throw std::runtime_error("apply_preset: unknown preset " + name);
    }
}

}  // namespace dp
