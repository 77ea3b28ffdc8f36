// AVX2 kernel variants. Compiled with -mavx2 and without -mfma: multiplies
// and adds stay separate instructions, so the j-vectorized matmuls accumulate
// in exactly the scalar order per output element.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "kobe/kernels.hpp"

namespace kobe::kern::avx2 {

namespace {

inline float hsum_ordered(__m256 v) {
    alignas(32) float lane[8];
    _mm256_store_ps(lane, v);
    float s = lane[0];
    for (int i = 1; i < 8; ++i) s += lane[i];
    return s;
}

void add(float* dst, const float* a, const float* b, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(dst + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) dst[i] = a[i] + b[i];
}

void sub(float* dst, const float* a, const float* b, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(dst + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) dst[i] = a[i] - b[i];
}

void mul(float* dst, const float* a, const float* b, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(dst + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void scale(float* dst, const float* a, float s, size_t n) {
    const __m256 vs = _mm256_set1_ps(s);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(dst + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), vs));
    }
    for (; i < n; ++i) dst[i] = a[i] * s;
}

void axpy(float* dst, float s, const float* a, size_t n) {
    const __m256 vs = _mm256_set1_ps(s);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 t = _mm256_mul_ps(vs, _mm256_loadu_ps(a + i));
        _mm256_storeu_ps(dst + i, _mm256_add_ps(_mm256_loadu_ps(dst + i), t));
    }
    for (; i < n; ++i) dst[i] += s * a[i];
}

void relu(float* dst, const float* a, size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(dst + i, _mm256_max_ps(_mm256_loadu_ps(a + i), zero));
    }
    for (; i < n; ++i) dst[i] = a[i] > 0.0f ? a[i] : 0.0f;
}

void relu_bwd(float* da, const float* x, const float* dy, size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        __m256 g = _mm256_and_ps(_mm256_loadu_ps(dy + i), mask);
        _mm256_storeu_ps(da + i, _mm256_add_ps(_mm256_loadu_ps(da + i), g));
    }
    for (; i < n; ++i) {
        if (x[i] > 0.0f) da[i] += dy[i];
    }
}

void clamp(float* dst, const float* a, float lo, float hi, size_t n) {
    const __m256 vlo = _mm256_set1_ps(lo);
    const __m256 vhi = _mm256_set1_ps(hi);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(dst + i, _mm256_min_ps(_mm256_max_ps(_mm256_loadu_ps(a + i), vlo), vhi));
    }
    for (; i < n; ++i) dst[i] = std::min(std::max(a[i], lo), hi);
}

float sum(const float* a, size_t n) {
    __m256 acc = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(a + i));
    float s = hsum_ordered(acc);
    for (; i < n; ++i) s += a[i];
    return s;
}

float dot(const float* a, const float* b, size_t n) {
    __m256 acc = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc = _mm256_add_ps(acc, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    float s = hsum_ordered(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

float max(const float* a, size_t n) {
    size_t i = 0;
    float m;
    if (n >= 8) {
        __m256 vm = _mm256_loadu_ps(a);
        for (i = 8; i + 8 <= n; i += 8) vm = _mm256_max_ps(vm, _mm256_loadu_ps(a + i));
        alignas(32) float lane[8];
        _mm256_store_ps(lane, vm);
        m = lane[0];
        for (int l = 1; l < 8; ++l) m = std::max(m, lane[l]);
    } else {
        m = a[0];
        i = 1;
    }
    for (; i < n; ++i) m = std::max(m, a[i]);
    return m;
}

void matmul_nn(float* c, const float* a, const float* b, size_t m, size_t k, size_t n, bool acc) {
    if (!acc) std::memset(c, 0, m * n * sizeof(float));
    for (size_t i = 0; i < m; ++i) {
        float* crow = c + i * n;
        for (size_t l = 0; l < k; ++l) {
            const __m256 av = _mm256_set1_ps(a[i * k + l]);
            const float* brow = b + l * n;
            size_t j = 0;
            for (; j + 8 <= n; j += 8) {
                __m256 t = _mm256_mul_ps(av, _mm256_loadu_ps(brow + j));
                _mm256_storeu_ps(crow + j, _mm256_add_ps(_mm256_loadu_ps(crow + j), t));
            }
            const float afs = a[i * k + l];
            for (; j < n; ++j) crow[j] += afs * brow[j];
        }
    }
}

void matmul_nt(float* c, const float* a, const float* b, size_t m, size_t k, size_t n, bool acc) {
    for (size_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        for (size_t j = 0; j < n; ++j) {
            const float d = dot(arow, b + j * k, k);
            if (acc) {
                c[i * n + j] += d;
            } else {
                c[i * n + j] = d;
            }
        }
    }
}

void matmul_tn(float* c, const float* a, const float* b, size_t r, size_t m, size_t n, bool acc) {
    if (!acc) std::memset(c, 0, m * n * sizeof(float));
    for (size_t l = 0; l < r; ++l) {
        const float* arow = a + l * m;
        const float* brow = b + l * n;
        for (size_t i = 0; i < m; ++i) {
            const __m256 av = _mm256_set1_ps(arow[i]);
            float* crow = c + i * n;
            size_t j = 0;
            for (; j + 8 <= n; j += 8) {
                __m256 t = _mm256_mul_ps(av, _mm256_loadu_ps(brow + j));
                _mm256_storeu_ps(crow + j, _mm256_add_ps(_mm256_loadu_ps(crow + j), t));
            }
            const float afs = arow[i];
            for (; j < n; ++j) crow[j] += afs * brow[j];
        }
    }
}

void colsum(float* dst, const float* a, size_t m, size_t n, bool acc) {
    if (!acc) std::memset(dst, 0, n * sizeof(float));
    for (size_t i = 0; i < m; ++i) {
        const float* arow = a + i * n;
        size_t j = 0;
        for (; j + 8 <= n; j += 8) {
            _mm256_storeu_ps(dst + j, _mm256_add_ps(_mm256_loadu_ps(dst + j), _mm256_loadu_ps(arow + j)));
        }
        for (; j < n; ++j) dst[j] += arow[j];
    }
}

void adam(float* p, const float* g, float* mo, float* vo, size_t n, float lr, float beta1, float beta2, float eps,
          float inv_corr1, float inv_corr2) {
    const __m256 vb1 = _mm256_set1_ps(beta1);
    const __m256 vb2 = _mm256_set1_ps(beta2);
    const __m256 vomb1 = _mm256_set1_ps(1.0f - beta1);
    const __m256 vomb2 = _mm256_set1_ps(1.0f - beta2);
    const __m256 vc1 = _mm256_set1_ps(inv_corr1);
    const __m256 vc2 = _mm256_set1_ps(inv_corr2);
    const __m256 vlr = _mm256_set1_ps(lr);
    const __m256 veps = _mm256_set1_ps(eps);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 gi = _mm256_loadu_ps(g + i);
        __m256 m = _mm256_add_ps(_mm256_mul_ps(vb1, _mm256_loadu_ps(mo + i)), _mm256_mul_ps(vomb1, gi));
        __m256 v = _mm256_add_ps(_mm256_mul_ps(vb2, _mm256_loadu_ps(vo + i)),
                                 _mm256_mul_ps(vomb2, _mm256_mul_ps(gi, gi)));
        _mm256_storeu_ps(mo + i, m);
        _mm256_storeu_ps(vo + i, v);
        const __m256 mhat = _mm256_mul_ps(m, vc1);
        const __m256 vhat = _mm256_mul_ps(v, vc2);
        const __m256 upd = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), _mm256_add_ps(_mm256_sqrt_ps(vhat), veps));
        _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), upd));
    }
    for (; i < n; ++i) {
        const float gi = g[i];
        mo[i] = beta1 * mo[i] + (1.0f - beta1) * gi;
        vo[i] = beta2 * vo[i] + (1.0f - beta2) * (gi * gi);
        const float mhat = mo[i] * inv_corr1;
        const float vhat = vo[i] * inv_corr2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace

const Kernels kernels = {
    add, sub, mul, scale, axpy, relu, relu_bwd, clamp, sum, dot, max, matmul_nn, matmul_nt, matmul_tn, colsum, adam,
};

}  // namespace kobe::kern::avx2
