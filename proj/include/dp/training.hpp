#pragma once
// Optimizer, the two training stages (base denoiser, then frozen-base dual
// adapters) and the finite-difference gradient check.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dp/backbone.hpp"
#include "dp/config.hpp"
#include "dp/ffb.hpp"
#include "dp/toy_world.hpp"

namespace dp {

BackboneConfig make_backbone_config(const RunConfig& cfg);
FfbOptions make_ffb_options(const RunConfig& cfg);
std::vector<int> caption_tokens(const Caption& c);

// Backbone plus (optionally) the two adapters, sharing one parameter store.
struct Model {
    BackboneConfig bcfg;
    ParamStore<float> store;
    std::unique_ptr<UNet<float>> net;
    std::optional<AdapterParams<float>> iea, tca;
};

Model build_model(const RunConfig& cfg, uint64_t seed, bool with_adapters);

class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(ParamStore<float>& store, const std::vector<std::string>& names);

private:
    double lr_, b1_, b2_, eps_;
    int64_t t_ = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> state_;
};

struct TrainStats {
    int steps = 0;
    double final_loss = 0.0;
};

// Denoising pretraining of base.* on text-conditioned samples, with
// conditioning dropped to the null caption at rate train.cond_dropout.
TrainStats train_base(Model& m, const Dataset& ds, const RunConfig& cfg, uint64_t seed,
                      const std::string& log_csv = "");

// Region-masked dual-adapter stage: base.* frozen, only iea.*/tca.* updated
// under the masked + complement + fusion loss sum.
TrainStats train_adapters(Model& m, const Dataset& ds, const RunConfig& cfg, uint64_t seed,
                          const std::string& log_csv = "");

struct GradCheckResult {
    int n_checked = 0;
    double max_rel_err = 0.0;
    bool pass = false;
};

// 64-bit end-to-end check of the dual-pathway loss gradients on a tiny 8x8
// model against central finite differences.
GradCheckResult grad_check(uint64_t seed, int n_params = 24, double fd_eps = 1e-4,
                           double tol = 1e-3);

}  // namespace dp
