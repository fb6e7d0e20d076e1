// AVX2+FMA float kernels. Compiled with target attributes so the TU builds
// on any x86-64 toolchain; selection happens at runtime in kernels_dispatch.
//
// axpy, scale_add and blend use separate mul+add (no FMA contraction) and
// keep lanes independent, so they are bitwise-identical to the scalar
// references. The GEMM family and sumsq use FMA and/or lane reductions and
// agree with the references only up to rounding/reassociation.

#include "dp/kernels/api.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#define DP_AVX2 __attribute__((target("avx2,fma")))

namespace dp::kernels {
namespace {

DP_AVX2 void v_axpy(size_t n, float a, const float* x, float* y) {
    __m256 va = _mm256_set1_ps(a);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vy = _mm256_loadu_ps(y + i);
        vy = _mm256_add_ps(vy, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
        _mm256_storeu_ps(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

DP_AVX2 void v_scale_add(size_t n, const float* a, float s, const float* b, float* out) {
    __m256 vs = _mm256_set1_ps(s);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 r = _mm256_add_ps(_mm256_loadu_ps(a + i),
                                 _mm256_mul_ps(vs, _mm256_loadu_ps(b + i)));
        _mm256_storeu_ps(out + i, r);
    }
    for (; i < n; ++i) out[i] = a[i] + s * b[i];
}

DP_AVX2 void v_blend(size_t n, const float* m, const float* a, const float* b, float* out) {
    const __m256 one = _mm256_set1_ps(1.0f);
    const __m256 zero = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vm = _mm256_loadu_ps(m + i);
        __m256 va = _mm256_loadu_ps(a + i);
        __m256 vb = _mm256_loadu_ps(b + i);
        __m256 r = _mm256_add_ps(_mm256_mul_ps(vm, va),
                                 _mm256_mul_ps(_mm256_sub_ps(one, vm), vb));
        // exact passthrough where the mask is exactly 0 or 1
        r = _mm256_blendv_ps(r, va, _mm256_cmp_ps(vm, one, _CMP_EQ_OQ));
        r = _mm256_blendv_ps(r, vb, _mm256_cmp_ps(vm, zero, _CMP_EQ_OQ));
        _mm256_storeu_ps(out + i, r);
    }
    for (; i < n; ++i) {
        if (m[i] == 1.0f)
            out[i] = a[i];
        else if (m[i] == 0.0f)
            out[i] = b[i];
        else
            out[i] = m[i] * a[i] + (1.0f - m[i]) * b[i];
    }
}

DP_AVX2 double v_sumsq(size_t n, const float* x) {
    __m256d acc = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double s = lanes[0] + lanes[1] + lanes[2] + lanes[3];
    for (; i < n; ++i) s += static_cast<double>(x[i]) * static_cast<double>(x[i]);
    return s;
}

// C (+)= A[MxK] * B[KxN], jki order with 4x-unrolled vector accumulators.
DP_AVX2 void v_gemm_nn(int M, int N, int K, const float* A, const float* B, float* C,
                       bool accumulate) {
    for (int i = 0; i < M; ++i) {
        const float* a = A + static_cast<size_t>(i) * K;
        float* c = C + static_cast<size_t>(i) * N;
        if (!accumulate)
            for (int j = 0; j < N; ++j) c[j] = 0.0f;
        int j = 0;
        for (; j + 32 <= N; j += 32) {
            __m256 c0 = _mm256_loadu_ps(c + j);
            __m256 c1 = _mm256_loadu_ps(c + j + 8);
            __m256 c2 = _mm256_loadu_ps(c + j + 16);
            __m256 c3 = _mm256_loadu_ps(c + j + 24);
            for (int k = 0; k < K; ++k) {
                __m256 va = _mm256_set1_ps(a[k]);
                const float* b = B + static_cast<size_t>(k) * N + j;
                c0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(b), c0);
                c1 = _mm256_fmadd_ps(va, _mm256_loadu_ps(b + 8), c1);
                c2 = _mm256_fmadd_ps(va, _mm256_loadu_ps(b + 16), c2);
                c3 = _mm256_fmadd_ps(va, _mm256_loadu_ps(b + 24), c3);
            }
            _mm256_storeu_ps(c + j, c0);
            _mm256_storeu_ps(c + j + 8, c1);
            _mm256_storeu_ps(c + j + 16, c2);
            _mm256_storeu_ps(c + j + 24, c3);
        }
        for (; j + 8 <= N; j += 8) {
            __m256 c0 = _mm256_loadu_ps(c + j);
            for (int k = 0; k < K; ++k) {
                __m256 va = _mm256_set1_ps(a[k]);
                c0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(B + static_cast<size_t>(k) * N + j), c0);
            }
            _mm256_storeu_ps(c + j, c0);
        }
        for (; j < N; ++j) {
            float acc = c[j];
            for (int k = 0; k < K; ++k) acc += a[k] * B[static_cast<size_t>(k) * N + j];
            c[j] = acc;
        }
    }
}

DP_AVX2 float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
}

// C (+)= A[MxK] * B[NxK]^T (row dot products)
DP_AVX2 void v_gemm_nt(int M, int N, int K, const float* A, const float* B, float* C,
                       bool accumulate) {
    for (int i = 0; i < M; ++i) {
        const float* a = A + static_cast<size_t>(i) * K;
        for (int j = 0; j < N; ++j) {
            const float* b = B + static_cast<size_t>(j) * K;
            __m256 acc = _mm256_setzero_ps();
            int k = 0;
            for (; k + 8 <= K; k += 8)
                acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), acc);
            float s = hsum(acc);
            for (; k < K; ++k) s += a[k] * b[k];
            size_t idx = static_cast<size_t>(i) * N + j;
            C[idx] = accumulate ? C[idx] + s : s;
        }
    }
}

// C (+)= A[KxM]^T * B[KxN] (rank-1 updates, vectorized over N)
DP_AVX2 void v_gemm_tn(int M, int N, int K, const float* A, const float* B, float* C,
                       bool accumulate) {
    if (!accumulate)
        for (size_t i = 0; i < static_cast<size_t>(M) * N; ++i) C[i] = 0.0f;
    for (int k = 0; k < K; ++k) {
        const float* a = A + static_cast<size_t>(k) * M;
        const float* b = B + static_cast<size_t>(k) * N;
        for (int i = 0; i < M; ++i) {
            __m256 va = _mm256_set1_ps(a[i]);
            float* c = C + static_cast<size_t>(i) * N;
            int j = 0;
            for (; j + 8 <= N; j += 8) {
                __m256 vc = _mm256_loadu_ps(c + j);
                _mm256_storeu_ps(c + j, _mm256_fmadd_ps(va, _mm256_loadu_ps(b + j), vc));
            }
            for (; j < N; ++j) c[j] += a[i] * b[j];
        }
    }
}

const FloatKernels kAvx2 = {v_axpy, v_scale_add, v_blend,    v_sumsq,
                            v_gemm_nn, v_gemm_nt, v_gemm_tn, "avx2"};

}  // namespace

const FloatKernels* avx2_table() { return &kAvx2; }

}  // namespace dp::kernels

#else

namespace dp::kernels {
const FloatKernels* avx2_table() { return nullptr; }
}  // namespace dp::kernels

#endif
