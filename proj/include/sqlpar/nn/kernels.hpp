#pragma once

// Forward kernels shared by the autodiff tape and the inference decoder.
//
// Every reduction has one fixed accumulation order. The batched affine map
// computes each row with exactly the arithmetic of a single-row call, so a
// batch of clause decoders produces bitwise the same values as running them
// one at a time.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

#include "sqlpar/nn/tensor.hpp"

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

namespace sqlpar::nn {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Dot product in four interleaved partial sums (j mod 4), tail into the first.
inline double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    for (; j < n; ++j) s0 += a[j] * b[j];
    return (s0 + s1) + (s2 + s3);
}

namespace detail {

// R rows against one weight row; per row this is exactly dot() above. With
// SSE2 the four partial sums of a row sit in two registers (lanes j mod 4 =
// 0,1 and 2,3); lane-wise mul/add rounds like the scalar code. Up to six rows
// fit in registers alongside the weights. The row loop must be unrolled or
// the accumulators live on the stack.
template <std::size_t R>
inline void affine_block(const double* const* x, const double* w, std::size_t n, double bias, double* const* y,
                         std::size_t o) {
    std::size_t j = 0;
#if defined(__SSE2__)
    __m128d lo[R], hi[R];
#pragma GCC unroll 6
    for (std::size_t r = 0; r < R; ++r) lo[r] = hi[r] = _mm_setzero_pd();
    for (; j + 4 <= n; j += 4) {
        const __m128d w01 = _mm_loadu_pd(w + j), w23 = _mm_loadu_pd(w + j + 2);
#pragma GCC unroll 6
        for (std::size_t r = 0; r < R; ++r) {
            lo[r] = _mm_add_pd(lo[r], _mm_mul_pd(w01, _mm_loadu_pd(x[r] + j)));
            hi[r] = _mm_add_pd(hi[r], _mm_mul_pd(w23, _mm_loadu_pd(x[r] + j + 2)));
        }
    }
    double acc[R][4];
    for (std::size_t r = 0; r < R; ++r) {
        _mm_storeu_pd(acc[r], lo[r]);
        _mm_storeu_pd(acc[r] + 2, hi[r]);
    }
#else
    double acc[R][4] = {};
    for (; j + 4 <= n; j += 4) {
        const double w0 = w[j], w1 = w[j + 1], w2 = w[j + 2], w3 = w[j + 3];
#pragma GCC unroll 6
        for (std::size_t r = 0; r < R; ++r) {
            acc[r][0] += w0 * x[r][j];
            acc[r][1] += w1 * x[r][j + 1];
            acc[r][2] += w2 * x[r][j + 2];
            acc[r][3] += w3 * x[r][j + 3];
        }
    }
#endif
    for (; j < n; ++j)
        for (std::size_t r = 0; r < R; ++r) acc[r][0] += w[j] * x[r][j];
    for (std::size_t r = 0; r < R; ++r) y[r][o] = ((acc[r][0] + acc[r][1]) + (acc[r][2] + acc[r][3])) + bias;
}

}  // namespace detail

/// Y[r] = W X[r] + b for each row pointer in x. W is out x in (row-major);
/// b may be null. Rows go in blocks of up to six that share the weight loads.
inline void affine_rows(std::span<const double* const> x, const Tensor& W, const double* b,
                        std::span<double* const> y) {
    const std::size_t n = W.cols;
    const std::size_t rows = x.size();
    for (std::size_t o = 0; o < W.rows; ++o) {
        const double* w = W.row_ptr(o);
        const double bias = b ? b[o] : 0.0;
        std::size_t r = 0;
        for (; r + 6 <= rows; r += 6) detail::affine_block<6>(x.data() + r, w, n, bias, y.data() + r, o);
        const auto* xr = x.data() + r;
        auto* yr = y.data() + r;
        switch (rows - r) {
            case 5: detail::affine_block<5>(xr, w, n, bias, yr, o); break;
            case 4: detail::affine_block<4>(xr, w, n, bias, yr, o); break;
            case 3: detail::affine_block<3>(xr, w, n, bias, yr, o); break;
            case 2: detail::affine_block<2>(xr, w, n, bias, yr, o); break;
            case 1: detail::affine_block<1>(xr, w, n, bias, yr, o); break;
            default: break;
        }
    }
}

inline void affine_row(const double* x, const Tensor& W, const double* b, double* y) {
    const double* xs[1] = {x};
    double* ys[1] = {y};
    affine_rows(xs, W, b, ys);
}

/// LSTM cell from pre-activation gates laid out [input | forget | cell | output].
inline void lstm_cell(const double* gates, const double* c_prev, std::size_t H, double* c, double* h) {
    for (std::size_t k = 0; k < H; ++k) {
        const double i = sigmoid(gates[k]);
        const double f = sigmoid(gates[H + k]);
        const double g = std::tanh(gates[2 * H + k]);
        const double o = sigmoid(gates[3 * H + k]);
        c[k] = f * c_prev[k] + i * g;
        h[k] = o * std::tanh(c[k]);
    }
}

/// In-place softmax over x[0..n).
inline void softmax(double* x, std::size_t n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, x[i]);
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = x[i] == -std::numeric_limits<double>::infinity() ? 0.0 : std::exp(x[i] - mx);
        sum += x[i];
    }
    for (std::size_t i = 0; i < n; ++i) x[i] /= sum;
}

/// Bilinear attention for a batch of queries h[r] (1 x H) over one memory M
/// (n x D) with Wm (H x D): u = h Wm, p = softmax(u . m_i), z = sum_i p_i m_i.
/// Each row follows the single-query arithmetic exactly; the batch only
/// shares the loads of Wm and M. u[r] has D entries, p[r] has n.
inline void attention_rows(std::span<const double* const> h, const Tensor& M, const Tensor& Wm,
                           std::span<double* const> u, std::span<double* const> p, std::span<double* const> z) {
    const std::size_t H = Wm.rows, D = Wm.cols, n = M.rows, R = h.size();
    for (std::size_t r = 0; r < R; ++r) std::fill(u[r], u[r] + D, 0.0);
    for (std::size_t k = 0; k < H; ++k) {
        const double* w = Wm.row_ptr(k);
        for (std::size_t r = 0; r < R; ++r) {
            const double hk = h[r][k];
            double* ur = u[r];
            for (std::size_t d = 0; d < D; ++d) ur[d] += hk * w[d];
        }
    }
    // p[r][i] = dot(u[r], m_i): the affine kernel with M as the weight matrix.
    affine_rows(std::span<const double* const>(u.data(), R), M, nullptr, p);
    for (std::size_t r = 0; r < R; ++r) {
        softmax(p[r], n);
        std::fill(z[r], z[r] + D, 0.0);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double* m = M.row_ptr(i);
        for (std::size_t r = 0; r < R; ++r) {
            const double pi = p[r][i];
            double* zr = z[r];
            for (std::size_t d = 0; d < D; ++d) zr[d] += pi * m[d];
        }
    }
}

inline void attention(const double* h, const Tensor& M, const Tensor& Wm, double* u, double* p, double* z) {
    const double* hs[1] = {h};
    double* us[1] = {u};
    double* ps[1] = {p};
    double* zs[1] = {z};
    attention_rows(hs, M, Wm, us, ps, zs);
}

}  // namespace sqlpar::nn
