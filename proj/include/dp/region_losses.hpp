#pragma once
// The three training losses: face-region loss (IEA), complement-region loss
// (TCA), mask-fused noise and its global loss, and the unweighted total.
// ||.||^2 is realized as the mean over all elements so the three terms stay
// commensurate with the base denoising MSE.

#include <stdexcept>

#include "dp/autodiff.hpp"
#include "dp/tensor.hpp"

namespace dp {

namespace detail {
template <typename T>
void check_mask(const Tensor<T>& x, const Tensor<T>& m) {
    if (x.rank() != 3 || m.rank() != 2 || x.dim(1) != m.dim(0) || x.dim(2) != m.dim(1))
        throw std::invalid_argument("region loss: mask/tensor shape mismatch");
}
}  // namespace detail

// mean over ALL elements of (m*(noise - pred))^2
template <typename T>
double loss_iea(const Tensor<T>& noise, const Tensor<T>& pred, const Tensor<T>& mask) {
    if (!noise.same_shape(pred)) throw std::invalid_argument("loss_iea: shape mismatch");
    detail::check_mask(noise, mask);
    int C = noise.dim(0);
    size_t hw = mask.size();
    double acc = 0.0;
    for (int c = 0; c < C; ++c)
        for (size_t i = 0; i < hw; ++i) {
            double d = mask[i] * (noise[c * hw + i] - pred[c * hw + i]);
            acc += d * d;
        }
    return acc / static_cast<double>(noise.size());
}

// as loss_iea with mask (1-m)
template <typename T>
double loss_tca(const Tensor<T>& noise, const Tensor<T>& pred, const Tensor<T>& mask) {
    Tensor<T> inv(mask.shape);
    for (size_t i = 0; i < mask.size(); ++i) inv[i] = T(1) - mask[i];
    return loss_iea(noise, pred, inv);
}

// N^f = m*pred_iea + (1-m)*pred_tca
template <typename T>
Tensor<T> fuse_noise(const Tensor<T>& pred_iea, const Tensor<T>& pred_tca, const Tensor<T>& mask) {
    if (!pred_iea.same_shape(pred_tca)) throw std::invalid_argument("fuse_noise: shape mismatch");
    detail::check_mask(pred_iea, mask);
    int C = pred_iea.dim(0);
    size_t hw = mask.size();
    Tensor<T> out(pred_iea.shape);
    for (int c = 0; c < C; ++c)
        kernels::blend(hw, mask.data(), pred_iea.data() + c * hw, pred_tca.data() + c * hw,
                       out.data() + c * hw);
    return out;
}

// plain MSE over all elements
template <typename T>
double loss_fusion(const Tensor<T>& noise, const Tensor<T>& fused) {
    if (!noise.same_shape(fused)) throw std::invalid_argument("loss_fusion: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < noise.size(); ++i) {
        double d = noise[i] - fused[i];
        acc += d * d;
    }
    return acc / static_cast<double>(noise.size());
}

inline double total_loss(double l_iea, double l_tca, double l_fusion) {
    return l_iea + l_tca + l_fusion;
}

// ---- differentiable graph versions ----

template <typename T>
ad::Var<T> masked_mse_node(const ad::Var<T>& noise, const ad::Var<T>& pred, const ad::Var<T>& mask) {
    auto d = ad::mul_mask(ad::sub(noise, pred), mask);
    return ad::mean_all(ad::mul(d, d));
}

template <typename T>
ad::Var<T> loss_iea_node(const ad::Var<T>& noise, const ad::Var<T>& pred, const ad::Var<T>& mask) {
    return masked_mse_node(noise, pred, mask);
}

template <typename T>
ad::Var<T> loss_tca_node(const ad::Var<T>& noise, const ad::Var<T>& pred, const ad::Var<T>& mask) {
    Tensor<T> inv(mask->val.shape);
    for (size_t i = 0; i < inv.size(); ++i) inv[i] = T(1) - mask->val[i];
    return masked_mse_node(noise, pred, ad::constant<T>(std::move(inv)));
}

template <typename T>
ad::Var<T> fuse_noise_node(const ad::Var<T>& pred_iea, const ad::Var<T>& pred_tca,
                           const ad::Var<T>& mask) {
    return ad::blend_mask(pred_iea, pred_tca, mask);
}

template <typename T>
ad::Var<T> loss_fusion_node(const ad::Var<T>& noise, const ad::Var<T>& fused) {
    auto d = ad::sub(noise, fused);
    return ad::mean_all(ad::mul(d, d));
}

}  // namespace dp
