#include "dp/kernels/api.hpp"

namespace dp::kernels {

namespace {

void s_axpy(size_t n, float a, const float* x, float* y) { scalar::axpy(n, a, x, y); }
void s_scale_add(size_t n, const float* a, float s, const float* b, float* o) {
    scalar::scale_add(n, a, s, b, o);
}
void s_blend(size_t n, const float* m, const float* a, const float* b, float* o) {
    scalar::blend(n, m, a, b, o);
}
double s_sumsq(size_t n, const float* x) { return scalar::sumsq(n, x); }
void s_gemm_nn(int M, int N, int K, const float* A, const float* B, float* C, bool acc) {
    scalar::gemm_nn(M, N, K, A, B, C, acc);
}
void s_gemm_nt(int M, int N, int K, const float* A, const float* B, float* C, bool acc) {
    scalar::gemm_nt(M, N, K, A, B, C, acc);
}
void s_gemm_tn(int M, int N, int K, const float* A, const float* B, float* C, bool acc) {
    scalar::gemm_tn(M, N, K, A, B, C, acc);
}

const FloatKernels kScalar = {s_axpy, s_scale_add, s_blend,    s_sumsq,
                              s_gemm_nn, s_gemm_nt, s_gemm_tn, "scalar"};

const FloatKernels* g_forced = nullptr;

const FloatKernels* detect() {
#if defined(__x86_64__) || defined(_M_X64)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return avx2_table();
#endif
    return &kScalar;
}

}  // namespace

const FloatKernels& scalar_table() { return kScalar; }

const FloatKernels& active() {
    if (g_forced) return *g_forced;
    static const FloatKernels* selected = detect();
    return *selected;
}

void force(const FloatKernels* t) { g_forced = t; }

}  // namespace dp::kernels
