#pragma once
// Reference kernels. These define the semantics; the AVX2 variants in
// kernels_avx2.cpp must agree with them (bitwise for elementwise ops,
// within reassociation tolerance for reductions/GEMM).

#include <cstddef>

namespace dp::kernels::scalar {

// y += a*x
template <typename T>
void axpy(size_t n, T a, const T* x, T* y) {
    for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// out = a + s*b
template <typename T>
void scale_add(size_t n, const T* a, T s, const T* b, T* out) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + s * b[i];
}

// out = m*a + (1-m)*b, exact passthrough at m==0 and m==1
template <typename T>
void blend(size_t n, const T* m, const T* a, const T* b, T* out) {
    for (size_t i = 0; i < n; ++i) {
        if (m[i] == T(1))
            out[i] = a[i];
        else if (m[i] == T(0))
            out[i] = b[i];
        else
            out[i] = m[i] * a[i] + (T(1) - m[i]) * b[i];
    }
}

template <typename T>
double sumsq(size_t n, const T* x) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(x[i]);
    return acc;
}

// Row-major GEMM family. C is MxN.
// nn: C (+)= A[MxK] * B[KxN]
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
    for (int i = 0; i < M; ++i) {
        T* c = C + static_cast<size_t>(i) * N;
        if (!accumulate)
            for (int j = 0; j < N; ++j) c[j] = T(0);
        for (int k = 0; k < K; ++k) {
            T a = A[static_cast<size_t>(i) * K + k];
            const T* b = B + static_cast<size_t>(k) * N;
            for (int j = 0; j < N; ++j) c[j] += a * b[j];
        }
    }
}

// nt: C (+)= A[MxK] * B[NxK]^T
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
    for (int i = 0; i < M; ++i) {
        const T* a = A + static_cast<size_t>(i) * K;
        for (int j = 0; j < N; ++j) {
            const T* b = B + static_cast<size_t>(j) * K;
            T acc = T(0);
            for (int k = 0; k < K; ++k) acc += a[k] * b[k];
            size_t idx = static_cast<size_t>(i) * N + j;
            C[idx] = accumulate ? C[idx] + acc : acc;
        }
    }
}

// tn: C (+)= A[KxM]^T * B[KxN]
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
    if (!accumulate)
        for (size_t i = 0; i < static_cast<size_t>(M) * N; ++i) C[i] = T(0);
    for (int k = 0; k < K; ++k) {
        const T* a = A + static_cast<size_t>(k) * M;
        const T* b = B + static_cast<size_t>(k) * N;
        for (int i = 0; i < M; ++i) {
            T av = a[i];
            T* c = C + static_cast<size_t>(i) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

}  // namespace dp::kernels::scalar
