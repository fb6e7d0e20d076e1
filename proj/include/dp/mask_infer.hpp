#pragma once
// Inference-time face mask: aggregate recorded image-prompt attention into a
// heatmap, threshold (fixed or Otsu), keep the largest connected region.

#include <vector>

#include "dp/backbone.hpp"
#include "dp/tensor.hpp"

namespace dp {

enum class ThresholdMethod { fixed, otsu };

// Mean over heads, image-key tokens, layers and recorded steps of the given
// maps; each layer's map is reshaped to its spatial grid, nearest-upsampled
// to the target resolution, then the final map is max-normalized.
// `use_joint_mass` selects img_mass (image-key mass under the joint
// text+image softmax) over the per-source row-softmax img_probs.
TensorF aggregate_attention(const std::vector<AttnRecord>& records, int target_resolution,
                            bool use_joint_mass = true);

// Returns the Otsu threshold over a max-normalized map using a 256-bin
// histogram (value = right edge of the chosen bin). Degenerate histograms
// (single occupied bin) report found=false.
double otsu_threshold(const TensorF& heat, bool* found = nullptr);

// pixel = 1 iff value >= threshold; a constant heatmap under Otsu falls back
// to fixed tau = 0.5
TensorF threshold_map(const TensorF& heat, ThresholdMethod method, double tau = 0.5);

// Keep only the maximum-pixel-count connected component (4- or
// 8-connectivity); ties break toward the component discovered first in
// raster order. All-zero input stays all-zero.
TensorF largest_region(const TensorF& binary, int connectivity);

struct MaskPipelineResult {
    TensorF mask;         // final binary RegionMask at image resolution
    bool fallback = false;  // empty post-filter mask replaced by centered box
    TensorF heatmap;      // intermediate stages, for --dump-masks
    TensorF thresholded;
    TensorF filtered;
};

// Fallback: centered box covering 25% of the image area.
TensorF fallback_mask(int resolution);

// The Fig.-4 style pipeline on already-recorded attention.
MaskPipelineResult mask_from_records(const std::vector<AttnRecord>& records, int resolution,
                                     ThresholdMethod method, double tau, int connectivity);

}  // namespace dp
