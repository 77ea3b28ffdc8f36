#pragma once

#include <cstddef>
#include <string>

// Float32 compute kernels behind the tensor ops. Every kernel has a scalar
// reference implementation; an AVX2 variant is selected at runtime when the
// CPU supports it. Elementwise kernels and the k-ordered matmuls are bitwise
// identical between variants (no FMA contraction, same accumulation order);
// the reduction kernels (sum, dot, matmul_nt) use lane-parallel partial sums
// and agree with the scalar path to float rounding. KOBE_SIMD=scalar|avx2|auto
// overrides the dispatch.

namespace kobe::kern {

struct Kernels {
    void (*add)(float* dst, const float* a, const float* b, size_t n);
    void (*sub)(float* dst, const float* a, const float* b, size_t n);
    void (*mul)(float* dst, const float* a, const float* b, size_t n);
    void (*scale)(float* dst, const float* a, float s, size_t n);
    void (*axpy)(float* dst, float s, const float* a, size_t n);  // dst += s*a
    void (*relu)(float* dst, const float* a, size_t n);
    void (*relu_bwd)(float* da, const float* x, const float* dy, size_t n);  // da += dy * (x>0)
    void (*clamp)(float* dst, const float* a, float lo, float hi, size_t n);
    float (*sum)(const float* a, size_t n);
    float (*dot)(const float* a, const float* b, size_t n);
    float (*max)(const float* a, size_t n);  // n >= 1

    // C[m x n] (+)= A[m x k] * B[k x n]; row-major; k-ordered accumulation.
    void (*matmul_nn)(float* c, const float* a, const float* b, size_t m, size_t k, size_t n, bool acc);
    // C[m x n] (+)= A[m x k] * B[n x k]^T (dot products of rows).
    void (*matmul_nt)(float* c, const float* a, const float* b, size_t m, size_t k, size_t n, bool acc);
    // C[m x n] (+)= A[r x m]^T * B[r x n]; r-ordered accumulation.
    void (*matmul_tn)(float* c, const float* a, const float* b, size_t r, size_t m, size_t n, bool acc);
    // dst[n] (+)= column sums of A[m x n].
    void (*colsum)(float* dst, const float* a, size_t m, size_t n, bool acc);

    // Fused Adam update with bias correction; inv_corr1/2 = 1/(1-beta^t).
    void (*adam)(float* p, const float* g, float* m, float* v, size_t n, float lr, float beta1, float beta2,
                 float eps, float inv_corr1, float inv_corr2);
};

namespace scalar {
extern const Kernels kernels;
}

#ifdef KOBE_HAVE_AVX2
namespace avx2 {
extern const Kernels kernels;
}
#endif

// True when the AVX2 variant was compiled in and the CPU supports it.
bool avx2_available();

// Active variant, chosen once per process (KOBE_SIMD env override).
const Kernels& active();
const std::string& backend_name();

}  // namespace kobe::kern
