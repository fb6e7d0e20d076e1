#include "dp/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dp/region_losses.hpp"
#include "dp/schedule.hpp"

namespace dp {

namespace {

std::vector<std::string> names_with_prefixes(const ParamStore<float>& store,
                                             const std::vector<std::string>& prefixes) {
    std::vector<std::string> out;
    for (const auto& [name, var] : store.params)
        for (const auto& p : prefixes)
            if (name.rfind(p, 0) == 0) {
                out.push_back(name);
                break;
            }
    return out;
}

void write_log(const std::string& path, const std::string& header,
               const std::vector<std::string>& lines) {
    if (path.empty()) return;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("train log: cannot open " + path);
    f << header << "\n";
    for (const auto& l : lines) f << l << "\n";
}

double grad_norm(const ParamStore<float>& store, const std::vector<std::string>& names) {
    double acc = 0.0;
    for (const auto& n : names) {
        const auto& g = store.get(n)->grad;
        for (size_t i = 0; i < g.size(); ++i) acc += static_cast<double>(g[i]) * g[i];
    }
    return std::sqrt(acc);
}

[[noreturn]] void abort_nan(const char* stage, int step, double loss, double gnorm, double lr) {
    std::ostringstream ss;
    ss << stage << ": non-finite loss at step " << step << " (loss=" << loss
       << ", grad_norm=" << gnorm << ", lr=" << lr
       << "); lower train.lr or check the data";
    throw std::runtime_error(ss.str());
}

}  // namespace

BackboneConfig make_backbone_config(const RunConfig& cfg) {
    BackboneConfig b;
    b.image_size = cfg.image_size;
    b.base_channels = cfg.base_channels;
    b.channel_multipliers = cfg.channel_multipliers;
    b.heads = cfg.heads;
    b.text_embed_dim = cfg.text_embed_dim;
    b.time_embed_dim = cfg.time_embed_dim;
    b.groups = cfg.groups;
    b.n_image_tokens = cfg.n_image_tokens;
    b.token_dim = cfg.token_dim;
    b.adapter_hidden = cfg.adapter_hidden;
    b.validate();
    return b;
}

FfbOptions make_ffb_options(const RunConfig& cfg) {
    FfbOptions o;
    if (cfg.ffb_mode == "blended")
        o.mode = FusionMode::blended;
    else if (cfg.ffb_mode == "independent")
        o.mode = FusionMode::independent;
    else
        throw std::runtime_error("ffb.mode must be 'blended' or 'independent'");
    o.private_streams = cfg.ffb_private_streams;
    o.cross_gradients = cfg.ffb_cross_gradients;
    return o;
}

std::vector<int> caption_tokens(const Caption& c) {
    auto t = c.tokens();
    return {static_cast<int>(t[0]), static_cast<int>(t[1]), static_cast<int>(t[2])};
}

Model build_model(const RunConfig& cfg, uint64_t seed, bool with_adapters) {
    Model m;
    m.bcfg = make_backbone_config(cfg);
    Rng rng(seed);
    m.net = std::make_unique<UNet<float>>(m.bcfg, m.store, rng);
    if (with_adapters) {
        auto layers = m.bcfg.attention_layer_channels();
        m.iea = make_adapter<float>(m.store, "iea", layers, m.bcfg.n_image_tokens,
                                    m.bcfg.token_dim, m.bcfg.adapter_hidden, rng);
        m.tca = make_adapter<float>(m.store, "tca", layers, m.bcfg.n_image_tokens,
                                    m.bcfg.token_dim, m.bcfg.adapter_hidden, rng);
    }
    return m;
}

void Adam::step(ParamStore<float>& store, const std::vector<std::string>& names) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (const auto& name : names) {
        auto var = store.get(name);
        if (var->grad.size() != var->val.size()) continue;  // untouched this step
        auto& [mv, vv] = state_[name];
        if (mv.size() != var->val.size()) {
            mv.assign(var->val.size(), 0.0);
            vv.assign(var->val.size(), 0.0);
        }
        for (size_t i = 0; i < var->val.size(); ++i) {
            const double g = var->grad[i];
            mv[i] = b1_ * mv[i] + (1.0 - b1_) * g;
            vv[i] = b2_ * vv[i] + (1.0 - b2_) * g * g;
            const double mhat = mv[i] / c1;
            const double vhat = vv[i] / c2;
            var->val[i] = static_cast<float>(var->val[i] - lr_ * mhat / (std::sqrt(vhat) + eps_));
        }
    }
}

TrainStats train_base(Model& m, const Dataset& ds, const RunConfig& cfg, uint64_t seed,
                      const std::string& log_csv) {
    if (ds.samples.empty()) throw std::invalid_argument("train_base: empty dataset");
    auto sched = make_schedule(cfg.schedule_steps, cfg.beta_start, cfg.beta_end);
    Adam opt(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    auto names = names_with_prefixes(m.store, {"base."});
    Rng rng(seed);
    std::vector<std::string> log;
    TrainStats stats;
    const float inv_batch = 1.0f / static_cast<float>(cfg.batch_size);
    for (int step = 0; step < cfg.base_steps; ++step) {
        m.store.zero_grads();
        double loss_acc = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const Sample& s = ds.samples[static_cast<size_t>(rng.uniform_int(
                static_cast<int>(ds.samples.size())))];
            const int t = rng.uniform_int(sched.T);
            auto tokens = rng.uniform() < cfg.cond_dropout ? m.net->null_tokens()
                                                           : caption_tokens(s.caption);
            auto noise = rng.normal_tensor<float>({3, cfg.image_size, cfg.image_size});
            auto x_t = add_noise(s.image, noise, t, sched);
            auto pred = m.net->forward(x_t, t, tokens);
            auto loss = loss_fusion_node(ad::constant<float>(noise), pred);
            loss_acc += loss->val[0];
            ad::backward(ad::scale(loss, inv_batch));
        }
        loss_acc /= cfg.batch_size;
        if (!std::isfinite(loss_acc))
            abort_nan("train_base", step, loss_acc, grad_norm(m.store, names), cfg.lr);
        opt.step(m.store, names);
        log.push_back(std::to_string(step) + "," + std::to_string(loss_acc));
        stats.final_loss = loss_acc;
        ++stats.steps;
    }
    write_log(log_csv, "step,loss", log);
    return stats;
}

TrainStats train_adapters(Model& m, const Dataset& ds, const RunConfig& cfg, uint64_t seed,
                          const std::string& log_csv) {
    if (ds.samples.empty()) throw std::invalid_argument("train_adapters: empty dataset");
    if (!m.iea || !m.tca) throw std::invalid_argument("train_adapters: model lacks adapters");
    auto sched = make_schedule(cfg.schedule_steps, cfg.beta_start, cfg.beta_end);
    Adam opt(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    auto names = names_with_prefixes(m.store, {"iea.", "tca."});  // base stays frozen
    auto opts = make_ffb_options(cfg);
    Rng rng(seed);
    std::vector<std::string> log;
    TrainStats stats;
    const float inv_batch = 1.0f / static_cast<float>(cfg.batch_size);
    PathwaySpec<float> pa{&*m.iea, static_cast<float>(cfg.iea_alpha), "iea"};
    PathwaySpec<float> pb{&*m.tca, static_cast<float>(cfg.tca_alpha), "tca"};
    for (int step = 0; step < cfg.adapter_steps; ++step) {
        m.store.zero_grads();
        double acc_iea = 0.0, acc_tca = 0.0, acc_fus = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const Sample& s = ds.samples[static_cast<size_t>(rng.uniform_int(
                static_cast<int>(ds.samples.size())))];
            const int t = rng.uniform_int(sched.T);
            auto tokens = rng.uniform() < cfg.cond_dropout ? m.net->null_tokens()
                                                           : caption_tokens(s.caption);
            auto noise = rng.normal_tensor<float>({3, cfg.image_size, cfg.image_size});
            auto x_t = add_noise(s.image, noise, t, sched);
            auto face_emb = encode_face(s.image, s.bbox);
            auto out = dual_path_forward(*m.net, x_t, t, tokens, face_emb, pa, pb, s.mask, opts);
            auto noise_c = ad::constant<float>(noise);
            auto mask_c = ad::constant<float>(s.mask);
            auto l_iea = loss_iea_node(noise_c, out.eps_iea, mask_c);
            auto l_tca = loss_tca_node(noise_c, out.eps_tca, mask_c);
            auto l_fus = loss_fusion_node(noise_c, out.eps_fused);
            auto total = ad::weighted_sum<float>(
                {l_iea, l_tca, l_fus},
                {static_cast<float>(cfg.loss_w_iea), static_cast<float>(cfg.loss_w_tca),
                 static_cast<float>(cfg.loss_w_fusion)});
            acc_iea += l_iea->val[0];
            acc_tca += l_tca->val[0];
            acc_fus += l_fus->val[0];
            ad::backward(ad::scale(total, inv_batch));
        }
        acc_iea /= cfg.batch_size;
        acc_tca /= cfg.batch_size;
        acc_fus /= cfg.batch_size;
        const double total_loss_v = cfg.loss_w_iea * acc_iea + cfg.loss_w_tca * acc_tca +
                                    cfg.loss_w_fusion * acc_fus;
        if (!std::isfinite(total_loss_v))
            abort_nan("train_adapters", step, total_loss_v, grad_norm(m.store, names), cfg.lr);
        opt.step(m.store, names);
        {
            std::ostringstream line;
            line << step << "," << acc_iea << "," << acc_tca << "," << acc_fus << ","
                 << total_loss_v;
            log.push_back(line.str());
        }
        stats.final_loss = total_loss_v;
        ++stats.steps;
    }
    write_log(log_csv, "step,loss_iea,loss_tca,loss_fusion,total", log);
    return stats;
}

GradCheckResult grad_check(uint64_t seed, int n_params, double fd_eps, double tol) {
    BackboneConfig bc;
    bc.image_size = 8;
    bc.base_channels = 8;
    bc.channel_multipliers = {1, 2};
    bc.heads = 2;
    bc.text_embed_dim = 16;
    bc.time_embed_dim = 16;
    bc.groups = 4;
    bc.n_image_tokens = 2;
    bc.token_dim = 16;
    bc.adapter_hidden = 16;
    bc.validate();

    Rng rng(seed);
    ParamStore<double> store;
    UNet<double> net(bc, store, rng);
    auto layers = bc.attention_layer_channels();
    auto iea = make_adapter<double>(store, "iea", layers, bc.n_image_tokens, bc.token_dim,
                                    bc.adapter_hidden, rng);
    auto tca = make_adapter<double>(store, "tca", layers, bc.n_image_tokens, bc.token_dim,
                                    bc.adapter_hidden, rng);
    // several projections are zero-initialized (no-op start); jitter every
    // parameter so the checked gradients are non-trivial
    for (auto& [name, var] : store.params)
        for (auto& v : var->val.v) v += rng.normal() * 0.05;

    auto sched = make_schedule(100, 1e-4, 0.02);
    TensorD x0({3, 8, 8});
    for (auto& v : x0.v) v = rng.uniform(-1.0, 1.0);
    auto noise = rng.normal_tensor<double>({3, 8, 8});
    const int t = 41;
    auto x_t = add_noise(x0, noise, t, sched);
    TensorD mask({8, 8});
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) mask.at(y, x) = x < 4 ? 1.0 : 0.0;
    TensorD face_emb({kFaceEmbedDim});
    for (auto& v : face_emb.v) v = rng.uniform(-1.0, 1.0);
    std::vector<int> tokens = {0, 4, 7};

    FfbOptions opts;
    opts.mode = FusionMode::blended;
    opts.cross_gradients = true;  // full-graph flow so FD and analytic agree
    PathwaySpec<double> pa{&iea, 1.0, "iea"};
    PathwaySpec<double> pb{&tca, 0.5, "tca"};

    auto loss_value = [&]() {
        auto out = dual_path_forward(net, x_t, t, tokens, face_emb, pa, pb, mask, opts);
        auto noise_c = ad::constant<double>(noise);
        auto mask_c = ad::constant<double>(mask);
        auto total = ad::weighted_sum<double>(
            {loss_iea_node(noise_c, out.eps_iea, mask_c),
             loss_tca_node(noise_c, out.eps_tca, mask_c),
             loss_fusion_node(noise_c, out.eps_fused)},
            {1.0, 1.0, 1.0});
        return total;
    };

    store.zero_grads();
    ad::backward(loss_value());

    // sample (adapter param, element) sites
    std::vector<std::string> names;
    for (const auto& [name, var] : store.params)
        if (name.rfind("iea.", 0) == 0 || name.rfind("tca.", 0) == 0) names.push_back(name);
    GradCheckResult res;
    Rng pick(seed ^ 0x5bf0a8b1u);
    for (int i = 0; i < n_params; ++i) {
        const auto& name = names[static_cast<size_t>(pick.uniform_int(static_cast<int>(names.size())))];
        auto var = store.get(name);
        const size_t idx = static_cast<size_t>(pick.uniform_int(static_cast<int>(var->val.size())));
        const double analytic = var->grad.size() == var->val.size() ? var->grad[idx] : 0.0;
        const double saved = var->val[idx];
        var->val[idx] = saved + fd_eps;
        const double lp = loss_value()->val[0];
        var->val[idx] = saved - fd_eps;
        const double lm = loss_value()->val[0];
        var->val[idx] = saved;
        const double fd = (lp - lm) / (2.0 * fd_eps);
        const double rel = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-8});
        res.max_rel_err = std::max(res.max_rel_err, rel);
        ++res.n_checked;
    }
    res.pass = res.max_rel_err < tol;
    return res;
}

}  // namespace dp
