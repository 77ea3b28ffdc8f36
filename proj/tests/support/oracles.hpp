#pragma once

// Deliberately naive reference implementations used only by tests. These are
// written straight from the defining formulas, accumulate in double, and do
// not share code with the library. Do not "optimise" them: their value is
// that they stay independent of the code under test.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace oracle {

// C[m x n] = A[m x k] * B[k x n], row-major, plain triple loop.
inline std::vector<float> matmul(const std::vector<float>& a, const std::vector<float>& b, size_t m, size_t k,
                                 size_t n) {
    std::vector<float> c(m * n, 0.0f);
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (size_t l = 0; l < k; ++l) acc += static_cast<double>(a[i * k + l]) * b[l * n + j];
            c[i * n + j] = static_cast<float>(acc);
        }
    return c;
}

// Multi-head attention by explicit per-head loops: project, slice head
// columns, score with a scaled dot product, softmax in double, accumulate
// context, concatenate, output-project. mask is additive ([nq*nk]) or empty.
inline std::vector<float> mha(const std::vector<float>& q_in, const std::vector<float>& k_in,
                              const std::vector<float>& v_in, const std::vector<float>& wq,
                              const std::vector<float>& wk, const std::vector<float>& wv,
                              const std::vector<float>& wo, size_t nq, size_t nk, size_t d, size_t heads,
                              const std::vector<float>& mask = {}) {
    const auto Q = matmul(q_in, wq, nq, d, d);
    const auto K = matmul(k_in, wk, nk, d, d);
    const auto V = matmul(v_in, wv, nk, d, d);
    const size_t dk = d / heads;
    std::vector<float> cat(nq * d, 0.0f);
    for (size_t h = 0; h < heads; ++h) {
        const size_t off = h * dk;
        for (size_t i = 0; i < nq; ++i) {
            std::vector<double> score(nk);
            double mx = -std::numeric_limits<double>::infinity();
            for (size_t j = 0; j < nk; ++j) {
                double s = 0.0;
                for (size_t l = 0; l < dk; ++l)
                    s += static_cast<double>(Q[i * d + off + l]) * K[j * d + off + l];
                s /= std::sqrt(static_cast<double>(dk));
                if (!mask.empty()) s += mask[i * nk + j];
                score[j] = s;
                mx = std::max(mx, s);
            }
            double z = 0.0;
            for (size_t j = 0; j < nk; ++j) z += std::exp(score[j] - mx);
            for (size_t l = 0; l < dk; ++l) {
                double acc = 0.0;
                for (size_t j = 0; j < nk; ++j)
                    acc += std::exp(score[j] - mx) / z * V[j * d + off + l];
                cat[i * d + off + l] = static_cast<float>(acc);
            }
        }
    }
    return matmul(cat, wo, nq, d, d);
}

// softmax of one row, direct formula with max subtraction.
inline std::vector<float> softmax_row(const std::vector<float>& x) {
    double mx = -std::numeric_limits<double>::infinity();
    for (float v : x) mx = std::max(mx, static_cast<double>(v));
    double z = 0.0;
    for (float v : x) z += std::exp(static_cast<double>(v) - mx);
    std::vector<float> y(x.size());
    for (size_t i = 0; i < x.size(); ++i) y[i] = static_cast<float>(std::exp(static_cast<double>(x[i]) - mx) / z);
    return y;
}

// Bi-directional attention by explicit loops over the four defining
// formulas: S_ij = sum_c w[c] h_ic + w[d+c] u_jc + w[2d+c] h_ic u_jc;
// per-row softmax of S weights a knowledge summary; a softmax over the
// row maxima of S weights a title summary; output rows are
// [h_i, usum_i, h_i*usum_i, h_i*hsum].
inline std::vector<float> bi_attention(const std::vector<float>& h, const std::vector<float>& u, size_t n,
                                       size_t m, size_t d, const std::vector<float>& w) {
    std::vector<std::vector<double>> S(n, std::vector<double>(m, 0.0));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (size_t c = 0; c < d; ++c) {
                s += static_cast<double>(w[c]) * h[i * d + c];
                s += static_cast<double>(w[d + c]) * u[j * d + c];
                s += static_cast<double>(w[2 * d + c]) * h[i * d + c] * u[j * d + c];
            }
            S[i][j] = s;
        }

    std::vector<std::vector<double>> usum(n, std::vector<double>(d, 0.0));
    for (size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < m; ++j) mx = std::max(mx, S[i][j]);
        double z = 0.0;
        for (size_t j = 0; j < m; ++j) z += std::exp(S[i][j] - mx);
        for (size_t j = 0; j < m; ++j) {
            const double a = std::exp(S[i][j] - mx) / z;
            for (size_t c = 0; c < d; ++c) usum[i][c] += a * u[j * d + c];
        }
    }

    std::vector<double> rowmax(n);
    for (size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < m; ++j) mx = std::max(mx, S[i][j]);
        rowmax[i] = mx;
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < n; ++i) mx = std::max(mx, rowmax[i]);
    double z = 0.0;
    for (size_t i = 0; i < n; ++i) z += std::exp(rowmax[i] - mx);
    std::vector<double> hsum(d, 0.0);
    for (size_t i = 0; i < n; ++i) {
        const double b = std::exp(rowmax[i] - mx) / z;
        for (size_t c = 0; c < d; ++c) hsum[c] += b * h[i * d + c];
    }

    std::vector<float> out(n * 4 * d);
    for (size_t i = 0; i < n; ++i)
        for (size_t c = 0; c < d; ++c) {
            const double hv = h[i * d + c];
            out[i * 4 * d + c] = static_cast<float>(hv);
            out[i * 4 * d + d + c] = static_cast<float>(usum[i][c]);
            out[i * 4 * d + 2 * d + c] = static_cast<float>(hv * usum[i][c]);
            out[i * 4 * d + 3 * d + c] = static_cast<float>(hv * hsum[c]);
        }
    return out;
}

// Mean cross-entropy from the direct formula, skipping ignored targets.
inline double mean_nll(const std::vector<float>& logits, const std::vector<int>& targets, size_t vocab,
                       int ignore_id) {
    double total = 0.0;
    size_t count = 0;
    for (size_t r = 0; r < targets.size(); ++r) {
        if (targets[r] == ignore_id) continue;
        double mx = -std::numeric_limits<double>::infinity();
        for (size_t c = 0; c < vocab; ++c) mx = std::max(mx, static_cast<double>(logits[r * vocab + c]));
        double z = 0.0;
        for (size_t c = 0; c < vocab; ++c) z += std::exp(static_cast<double>(logits[r * vocab + c]) - mx);
        total += -(static_cast<double>(logits[r * vocab + targets[r]]) - mx - std::log(z));
        ++count;
    }
    return count == 0 ? 0.0 : total / count;
}

}  // namespace oracle
