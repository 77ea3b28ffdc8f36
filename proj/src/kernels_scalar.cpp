#include <algorithm>
#include <cmath>
#include <cstring>

#include "kobe/kernels.hpp"

namespace kobe::kern::scalar {

namespace {

void add(float* dst, const float* a, const float* b, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = a[i] + b[i];
}

void sub(float* dst, const float* a, const float* b, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = a[i] - b[i];
}

void mul(float* dst, const float* a, const float* b, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = a[i] * b[i];
}

void scale(float* dst, const float* a, float s, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = a[i] * s;
}

void axpy(float* dst, float s, const float* a, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] += s * a[i];
}

void relu(float* dst, const float* a, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = a[i] > 0.0f ? a[i] : 0.0f;
}

void relu_bwd(float* da, const float* x, const float* dy, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        if (x[i] > 0.0f) da[i] += dy[i];
    }
}

void clamp(float* dst, const float* a, float lo, float hi, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = std::min(std::max(a[i], lo), hi);
}

float sum(const float* a, size_t n) {
    float s = 0.0f;
    for (size_t i = 0; i < n; ++i) s += a[i];
    return s;
}

float dot(const float* a, const float* b, size_t n) {
    float s = 0.0f;
    for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

float max(const float* a, size_t n) {
    float m = a[0];
    for (size_t i = 1; i < n; ++i) m = std::max(m, a[i]);
    return m;
}

void matmul_nn(float* c, const float* a, const float* b, size_t m, size_t k, size_t n, bool acc) {
    if (!acc) std::memset(c, 0, m * n * sizeof(float));
    for (size_t i = 0; i < m; ++i) {
        float* crow = c + i * n;
        for (size_t l = 0; l < k; ++l) {
            const float av = a[i * k + l];
            const float* brow = b + l * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
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
            const float av = arow[i];
            float* crow = c + i * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void colsum(float* dst, const float* a, size_t m, size_t n, bool acc) {
    if (!acc) std::memset(dst, 0, n * sizeof(float));
    for (size_t i = 0; i < m; ++i) {
        const float* arow = a + i * n;
        for (size_t j = 0; j < n; ++j) dst[j] += arow[j];
    }
}

void adam(float* p, const float* g, float* mo, float* vo, size_t n, float lr, float beta1, float beta2, float eps,
          float inv_corr1, float inv_corr2) {
    for (size_t i = 0; i < n; ++i) {
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

}  // namespace kobe::kern::scalar
