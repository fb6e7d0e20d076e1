#pragma once
// Runtime-dispatched float kernels. On x86-64 with AVX2+FMA the vector
// variants are selected at startup; otherwise the scalar references run.
// Double always takes the scalar path (only used by the gradient checker).

#include <cstddef>

#include "dp/kernels/scalar.hpp"

namespace dp::kernels {

struct FloatKernels {
    void (*axpy)(size_t, float, const float*, float*);
    void (*scale_add)(size_t, const float*, float, const float*, float*);
    void (*blend)(size_t, const float*, const float*, const float*, float*);
    double (*sumsq)(size_t, const float*);
    void (*gemm_nn)(int, int, int, const float*, const float*, float*, bool);
    void (*gemm_nt)(int, int, int, const float*, const float*, float*, bool);
    void (*gemm_tn)(int, int, int, const float*, const float*, float*, bool);
    const char* name;
};

const FloatKernels& active();        // selected at first use
const FloatKernels& scalar_table();  // reference implementations
const FloatKernels* avx2_table();    // nullptr when unsupported
void force(const FloatKernels* t);   // test hook; nullptr restores auto-detect

// Generic entry points used by the tensor/autodiff layers.

template <typename T>
inline void axpy(size_t n, T a, const T* x, T* y) {
    scalar::axpy(n, a, x, y);
}
inline void axpy(size_t n, float a, const float* x, float* y) { active().axpy(n, a, x, y); }

template <typename T>
inline void scale_add(size_t n, const T* a, T s, const T* b, T* out) {
    scalar::scale_add(n, a, s, b, out);
}
inline void scale_add(size_t n, const float* a, float s, const float* b, float* out) {
    active().scale_add(n, a, s, b, out);
}

template <typename T>
inline void blend(size_t n, const T* m, const T* a, const T* b, T* out) {
    scalar::blend(n, m, a, b, out);
}
inline void blend(size_t n, const float* m, const float* a, const float* b, float* out) {
    active().blend(n, m, a, b, out);
}

template <typename T>
inline double sumsq(size_t n, const T* x) {
    return scalar::sumsq(n, x);
}
inline double sumsq(size_t n, const float* x) { return active().sumsq(n, x); }

template <typename T>
inline void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool acc) {
    scalar::gemm_nn(M, N, K, A, B, C, acc);
}
inline void gemm_nn(int M, int N, int K, const float* A, const float* B, float* C, bool acc) {
    active().gemm_nn(M, N, K, A, B, C, acc);
}

template <typename T>
inline void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C, bool acc) {
    scalar::gemm_nt(M, N, K, A, B, C, acc);
}
inline void gemm_nt(int M, int N, int K, const float* A, const float* B, float* C, bool acc) {
    active().gemm_nt(M, N, K, A, B, C, acc);
}

template <typename T>
inline void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C, bool acc) {
    scalar::gemm_tn(M, N, K, A, B, C, acc);
}
inline void gemm_tn(int M, int N, int K, const float* A, const float* B, float* C, bool acc) {
    active().gemm_tn(M, N, K, A, B, C, acc);
}

}  // namespace dp::kernels
