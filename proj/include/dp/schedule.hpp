#pragma once
// Diffusion process numerics: linear beta schedule, forward noising,
// deterministic/stochastic DDIM reverse step, classifier-free guidance.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dp/tensor.hpp"

namespace dp {

struct DiffusionSchedule {
    int T = 0;
    std::vector<double> betas;           // length T, in (0,1)
    std::vector<double> alphas_cumprod;  // strictly decreasing, in (0,1)
};

inline DiffusionSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 2) throw std::invalid_argument("make_schedule: T must be >= 2");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
    DiffusionSchedule s;
    s.T = T;
    s.betas.resize(T);
    s.alphas_cumprod.resize(T);
    double acc = 1.0;
    for (int t = 0; t < T; ++t) {
        s.betas[t] = beta_start + (beta_end - beta_start) * (T == 1 ? 0.0 : double(t) / (T - 1));
        acc *= 1.0 - s.betas[t];
        s.alphas_cumprod[t] = acc;
    }
    return s;
}

// sqrt(abar_t)*x0 + sqrt(1-abar_t)*noise
template <typename T>
Tensor<T> add_noise(const Tensor<T>& x0, const Tensor<T>& noise, int t,
                    const DiffusionSchedule& s) {
    if (t < 0 || t >= s.T) throw std::out_of_range("add_noise: t out of range");
    if (!x0.same_shape(noise)) throw std::invalid_argument("add_noise: shape mismatch");
    T a = static_cast<T>(std::sqrt(s.alphas_cumprod[t]));
    T b = static_cast<T>(std::sqrt(1.0 - s.alphas_cumprod[t]));
    Tensor<T> out(x0.shape);
    for (size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * noise[i];
    return out;
}

// DDIM update from t to t_prev (t_prev == -1 means abar_prev = 1, i.e. the
// final step to the clean image). The x0 estimate is clamped to [-1,1].
template <typename T>
Tensor<T> ddim_step(const Tensor<T>& x_t, const Tensor<T>& eps_pred, int t, int t_prev,
                    const DiffusionSchedule& s, double eta = 0.0,
                    const Tensor<T>* rng_draw = nullptr) {
    if (t < 0 || t >= s.T) throw std::out_of_range("ddim_step: t out of range");
    if (t_prev >= t) throw std::invalid_argument("ddim_step: t_prev must be < t");
    if (!x_t.same_shape(eps_pred)) throw std::invalid_argument("ddim_step: shape mismatch");
    if (eta > 0.0 && rng_draw == nullptr)
        throw std::invalid_argument("ddim_step: eta > 0 requires rng_draw");
    double abar_t = s.alphas_cumprod[t];
    double abar_p = t_prev < 0 ? 1.0 : s.alphas_cumprod[t_prev];
    double sqrt_abar_t = std::sqrt(abar_t);
    double sqrt_1m_t = std::sqrt(1.0 - abar_t);
    double sigma = 0.0;
    if (eta > 0.0 && abar_t < abar_p)
        sigma = eta * std::sqrt((1.0 - abar_p) / (1.0 - abar_t)) *
                std::sqrt(1.0 - abar_t / abar_p);
    double dir_coef = std::sqrt(std::max(0.0, 1.0 - abar_p - sigma * sigma));
    double sqrt_abar_p = std::sqrt(abar_p);
    Tensor<T> out(x_t.shape);
    for (size_t i = 0; i < out.size(); ++i) {
        double x0 = (x_t[i] - sqrt_1m_t * eps_pred[i]) / sqrt_abar_t;
        x0 = std::min(1.0, std::max(-1.0, x0));
        double v = sqrt_abar_p * x0 + dir_coef * eps_pred[i];
        if (sigma > 0.0) v += sigma * (*rng_draw)[i];
        out[i] = static_cast<T>(v);
    }
    return out;
}

// eps_uncond + scale*(eps_cond - eps_uncond), exact at scale 0 and 1
template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& eps_uncond, const Tensor<T>& eps_cond, double scale) {
    if (!eps_uncond.same_shape(eps_cond)) throw std::invalid_argument("cfg_combine: shape mismatch");
    if (scale == 0.0) return eps_uncond;
    if (scale == 1.0) return eps_cond;
    Tensor<T> out(eps_uncond.shape);
    T s = static_cast<T>(scale);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = eps_uncond[i] + s * (eps_cond[i] - eps_uncond[i]);
    return out;
}

// Descending timestep sequence for n-step DDIM over a T-step schedule.
inline std::vector<int> ddim_timesteps(int T, int n) {
    if (n < 1 || n > T) throw std::invalid_argument("ddim_timesteps: bad step count");
    std::vector<int> ts(n);
    for (int i = 0; i < n; ++i)
        ts[n - 1 - i] = n == 1 ? T - 1 : static_cast<int>(std::llround(double(T - 1) * i / (n - 1)));
    return ts;  // ts[0] = T-1 ... ts[n-1] = 0
}

}  // namespace dp
