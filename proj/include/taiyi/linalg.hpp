#pragma once

// Dense small-matrix kernels for the evaluation metrics: symmetric
// eigendecomposition (cyclic Jacobi), PSD matrix square root, and Gaussian
// sufficient statistics. Everything is f64 and deterministic.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "taiyi/error.hpp"

namespace taiyi {

struct Mat {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

    double& at(size_t i, size_t j) { return v[i * cols + j]; }
    double at(size_t i, size_t j) const { return v[i * cols + j]; }

    static Mat identity(size_t n) {
        Mat m(n, n);
        for (size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }

    Mat transposed() const {
        Mat t(cols, rows);
        for (size_t i = 0; i < rows; ++i)
            for (size_t j = 0; j < cols; ++j) t.at(j, i) = at(i, j);
        return t;
    }

    double max_abs() const {
        double m = 0.0;
        for (double x : v) m = std::max(m, std::abs(x));
        return m;
    }
};

inline Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) throw Error("mat: inner dimensions disagree");
    Mat c(a.rows, b.cols);
    for (size_t i = 0; i < a.rows; ++i)
        for (size_t k = 0; k < a.cols; ++k) {
            const double av = a.at(i, k);
            for (size_t j = 0; j < b.cols; ++j) c.at(i, j) += av * b.at(k, j);
        }
    return c;
}

inline double trace(const Mat& a) {
    double t = 0.0;
    for (size_t i = 0; i < std::min(a.rows, a.cols); ++i) t += a.at(i, i);
    return t;
}

inline double max_asymmetry(const Mat& a) {
    double m = 0.0;
    for (size_t i = 0; i < a.rows; ++i)
        for (size_t j = i + 1; j < a.cols; ++j) m = std::max(m, std::abs(a.at(i, j) - a.at(j, i)));
    return m;
}

struct EighResult {
    std::vector<double> values;  // ascending
    Mat vectors;                 // columns are eigenvectors
};

// Cyclic Jacobi for symmetric matrices. Quadratically convergent; plenty of
// accuracy for the metric-sized matrices this library handles.
inline EighResult eigh(const Mat& a_in, int max_sweeps = 100) {
    if (a_in.rows != a_in.cols) throw Error("eigh: matrix not square");
    const size_t n = a_in.rows;
    Mat a = a_in;
    // enforce exact symmetry before rotating
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j) {
            const double m = 0.5 * (a.at(i, j) + a.at(j, i));
            a.at(i, j) = m;
            a.at(j, i) = m;
        }
    Mat vec = Mat::identity(n);
    const double scale = std::max(a.max_abs(), 1.0);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (size_t p = 0; p < n; ++p)
            for (size_t q = p + 1; q < n; ++q) off = std::max(off, std::abs(a.at(p, q)));
        if (off <= 1e-15 * scale) break;
        for (size_t p = 0; p + 1 < n; ++p) {
            for (size_t q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (std::abs(apq) <= 1e-18 * scale) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (size_t k = 0; k < n; ++k) {
                    const double akp = a.at(k, p), akq = a.at(k, q);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, q) = s * akp + c * akq;
                }
                for (size_t k = 0; k < n; ++k) {
                    const double apk = a.at(p, k), aqk = a.at(q, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(q, k) = s * apk + c * aqk;
                }
                for (size_t k = 0; k < n; ++k) {
                    const double vkp = vec.at(k, p), vkq = vec.at(k, q);
                    vec.at(k, p) = c * vkp - s * vkq;
                    vec.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t x, size_t y) { return a.at(x, x) < a.at(y, y); });
    EighResult res;
    res.values.resize(n);
    res.vectors = Mat(n, n);
    for (size_t j = 0; j < n; ++j) {
        res.values[j] = a.at(order[j], order[j]);
        for (size_t i = 0; i < n; ++i) res.vectors.at(i, j) = vec.at(i, order[j]);
    }
    return res;
}

// Symmetric PSD square root: B with B*B ~= A. Eigenvalues in [-1e-8, 0) are
// clamped to zero; anything more negative is rejected.
inline Mat sqrtm_psd(const Mat& a) {
    if (a.rows != a.cols) throw Error("sqrtm_psd: matrix not square");
    const double asym = max_asymmetry(a);
    const double tol = 1e-9 * (1.0 + a.max_abs());
    if (asym > tol) {
        throw Error("sqrtm_psd: input asymmetric by " + std::to_string(asym));
    }
    EighResult e = eigh(a);
    // square roots amplify eigenvalue noise near zero, so anything within
    // solver precision of zero is treated as exactly zero
    const double zero_tol = 1e-12 * (1.0 + a.max_abs());
    for (double& lam : e.values) {
        if (lam < -1e-8) {
            throw Error("sqrtm_psd: eigenvalue " + std::to_string(lam) +
                        " below PSD tolerance");
        }
        lam = lam < zero_tol ? 0.0 : lam;
    }
    const size_t n = a.rows;
    Mat b(n, n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i; j < n; ++j) {
            double s = 0.0;
            for (size_t k = 0; k < n; ++k)
                s += e.vectors.at(i, k) * std::sqrt(e.values[k]) * e.vectors.at(j, k);
            b.at(i, j) = s;
            b.at(j, i) = s;
        }
    return b;
}

struct GaussianStats {
    std::vector<double> mean;  // length d
    Mat cov;                   // d x d, symmetric

    size_t dim() const { return mean.size(); }
};

// Column means and unbiased sample covariance (divisor n-1), symmetrized.
inline GaussianStats gaussian_stats(const Mat& samples) {
    const size_t n = samples.rows, d = samples.cols;
    if (n < 2) throw Error("gaussian_stats: need at least 2 samples, got " + std::to_string(n));
    GaussianStats out;
    out.mean.assign(d, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) out.mean[j] += samples.at(i, j);
    for (size_t j = 0; j < d; ++j) out.mean[j] /= static_cast<double>(n);
    out.cov = Mat(d, d);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) {
            const double dj = samples.at(i, j) - out.mean[j];
            for (size_t k = j; k < d; ++k)
                out.cov.at(j, k) += dj * (samples.at(i, k) - out.mean[k]);
        }
    const double inv = 1.0 / static_cast<double>(n - 1);
    for (size_t j = 0; j < d; ++j)
        for (size_t k = j; k < d; ++k) {
            out.cov.at(j, k) *= inv;
            out.cov.at(k, j) = out.cov.at(j, k);
        }
    return out;
}

}  // namespace taiyi
