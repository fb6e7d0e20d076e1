#pragma once
// Two-phase sampling (mask pass, then mask-guided dual-pathway pass),
// metric evaluation over prompt grids, and the ablation table.

#include <string>
#include <vector>

#include "dp/mask_infer.hpp"
#include "dp/training.hpp"

namespace dp {

struct GenSetup {
    enum class Kind { iea_only, tca_only, dual, training_free };
    Kind kind = Kind::dual;
    bool use_ffb = true;           // dual modes: feature blending vs noise-only fusion
    double alpha_override = -1.0;  // >= 0 forces the single-pathway alpha
};

struct GenResult {
    TensorF image;
    TensorF mask;
    bool mask_fallback = false;
    double face_score = 0.0;
    double text_match = 0.0;
};

// Both phases start from the same seed-derived initial noise; the first runs
// the mask pathway alone, recording attention, the second runs the requested
// setup under the inferred mask. `dump_dir` writes image/mask/heatmap PNGs.
GenResult generate(const Model& m, const RunConfig& cfg, const IdentitySpec& identity,
                   const Caption& caption, const GenSetup& setup, uint64_t seed,
                   const std::string& dump_dir = "");

struct EvalRow {
    int identity = 0;
    Caption caption;
    uint64_t seed = 0;
    double face_score = 0.0;
    double text_match = 0.0;
};

struct EvalSummary {
    double mean_face = 0.0;
    double mean_text = 0.0;
    std::vector<EvalRow> rows;
};

EvalSummary evaluate(const Model& m, const RunConfig& cfg, const std::vector<IdentitySpec>& ids,
                     const std::vector<Caption>& captions, const GenSetup& setup, uint64_t seed,
                     int images_per_prompt, const std::string& csv = "");

struct AblateRow {
    std::string variant;
    double face_score = 0.0;
    double text_match = 0.0;
};

// iea / tca / iea+tca (noise fusion only) / iea+tca+ffb
std::vector<AblateRow> ablate(const Model& m, const RunConfig& cfg,
                              const std::vector<IdentitySpec>& ids,
                              const std::vector<Caption>& captions, uint64_t seed,
                              int images_per_prompt, const std::string& csv = "");

}  // namespace dp
