#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dfsl {

enum class BasisFamily { bspline, fourier, wavelet };
enum class WaveletFamily { haar, daubechies4 };

inline const char* to_string(BasisFamily f)
{
    switch (f) {
    case BasisFamily::bspline: return "bspline";
    case BasisFamily::fourier: return "fourier";
    case BasisFamily::wavelet: return "wavelet";
    }
    return "unknown";
}

inline const char* to_string(WaveletFamily f)
{
    return f == WaveletFamily::haar ? "haar" : "daubechies4";
}

/// Sampled basis functions, one per column.
struct BasisMatrix
{
    Eigen::MatrixXd columns;
    BasisFamily family = BasisFamily::bspline;
    std::string params;

    Eigen::Index n_points() const { return columns.rows(); }
    Eigen::Index width() const { return columns.cols(); }
};

namespace detail {

inline void normalize_columns(Eigen::MatrixXd& m)
{
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double norm = m.col(c).norm();
        if (!(norm > 0.0)) throw std::invalid_argument("basis: column " + std::to_string(c) + " vanishes on the grid");
        m.col(c) /= norm;
    }
}

inline std::vector<double> clamped_uniform_knots(std::size_t n_knots, std::size_t order)
{
    std::vector<double> knots;
    knots.reserve(n_knots + 2 * (order - 1));
    for (std::size_t r = 1; r < order; ++r) knots.push_back(0.0);
    for (std::size_t i = 0; i < n_knots; ++i)
        knots.push_back(n_knots == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n_knots - 1));
    for (std::size_t r = 1; r < order; ++r) knots.push_back(1.0);
    return knots;
}

} // namespace detail

/**
 * Every B-spline of the given order (degree order-1) on a clamped uniform
 * knot vector with n_knots distinct knots in [0,1], evaluated at n_points
 * equally spaced points of [0,1]. Columns are not normalized, so rows sum
 * to one. There are n_knots + order - 2 functions.
 */
inline Eigen::MatrixXd bspline_full(std::size_t n_points, std::size_t order, std::size_t n_knots)
{
    if (n_points < 1 || order < 1 || n_knots < 2) throw std::invalid_argument("bspline: need n_points >= 1, order >= 1, n_knots >= 2");
    const auto knots = detail::clamped_uniform_knots(n_knots, order);
    const std::size_t n_basis = knots.size() - order;
    // Last interval with positive length; the right endpoint belongs to it.
    std::size_t last = 0;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i)
        if (knots[i] < knots[i + 1]) last = i;

    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_points), static_cast<Eigen::Index>(n_basis));
    std::vector<double> b(knots.size() - 1);
    for (std::size_t k = 0; k < n_points; ++k) {
        const double t = n_points == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(n_points - 1);
        for (std::size_t i = 0; i + 1 < knots.size(); ++i)
            b[i] = (knots[i] <= t && t < knots[i + 1]) ? 1.0 : 0.0;
        if (t >= knots.back()) b[last] = 1.0;
        // Cox-de Boor recursion, degree raised in place.
        for (std::size_t deg = 1; deg < order; ++deg) {
            for (std::size_t i = 0; i + deg + 1 < knots.size(); ++i) {
                double v = 0.0;
                const double left = knots[i + deg] - knots[i];
                const double right = knots[i + deg + 1] - knots[i + 1];
                if (left > 0.0) v += (t - knots[i]) / left * b[i];
                if (right > 0.0) v += (knots[i + deg + 1] - t) / right * b[i + 1];
                b[i] = v;
            }
        }
        for (std::size_t i = 0; i < n_basis; ++i) out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = b[i];
    }
    return out;
}

/**
 * Selected B-splines of the given order on a clamped grid of n_points
 * uniform knots in [0,1], sampled at the same n_points and unit-normalized.
 * `selected` holds 0-based indices into the n_points + order - 2 functions.
 */
inline BasisMatrix bspline_basis(std::size_t n_points, std::size_t order, const std::vector<std::size_t>& selected)
{
    if (n_points < 2) throw std::invalid_argument("bspline_basis: need at least two points");
    const Eigen::MatrixXd full = bspline_full(n_points, order, n_points);
    BasisMatrix out;
    out.family = BasisFamily::bspline;
    out.columns.resize(full.rows(), static_cast<Eigen::Index>(selected.size()));
    std::string idx;
    for (std::size_t c = 0; c < selected.size(); ++c) {
        if (selected[c] >= static_cast<std::size_t>(full.cols()))
            throw std::invalid_argument("bspline_basis: index " + std::to_string(selected[c]) + " exceeds the " +
                                        std::to_string(full.cols()) + " available functions");
        out.columns.col(static_cast<Eigen::Index>(c)) = full.col(static_cast<Eigen::Index>(selected[c]));
        idx += (c ? "," : "") + std::to_string(selected[c]);
    }
    detail::normalize_columns(out.columns);
    out.params = "order=" + std::to_string(order) + ";selected=" + idx;
    return out;
}

/// Columns cos(q t + q pi), q = 1..q_max, on n_points equally spaced points
/// of [0, 2 pi] with both endpoints included; unit-normalized.
inline BasisMatrix fourier_basis(std::size_t n_points, std::size_t q_max)
{
    if (n_points < 1 || q_max < 1) throw std::invalid_argument("fourier_basis: need n_points >= 1 and q_max >= 1");
    BasisMatrix out;
    out.family = BasisFamily::fourier;
    out.columns.resize(static_cast<Eigen::Index>(n_points), static_cast<Eigen::Index>(q_max));
    for (std::size_t k = 0; k < n_points; ++k) {
        const double t = n_points == 1 ? 0.0 : 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_points - 1);
        for (std::size_t q = 1; q <= q_max; ++q) {
            const double qd = static_cast<double>(q);
            out.columns(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(q - 1)) = std::cos(qd * t + qd * std::numbers::pi);
        }
    }
    detail::normalize_columns(out.columns);
    out.params = "q_max=" + std::to_string(q_max);
    return out;
}

/// Orthonormal low-pass filter of the family.
inline std::vector<double> wavelet_filter(WaveletFamily family)
{
    if (family == WaveletFamily::haar) return {std::numbers::sqrt2 / 2.0, std::numbers::sqrt2 / 2.0};
    const double s3 = std::sqrt(3.0);
    const double d = 4.0 * std::numbers::sqrt2;
    return {(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d};
}

/**
 * Inverse periodized discrete wavelet transform, decomposed down to a
 * single coarse coefficient. Coefficient layout: [approx, coarsest detail,
 * ..., finest detail]. Length must be a power of two.
 */
inline Eigen::VectorXd inverse_dwt(const Eigen::VectorXd& coeffs, WaveletFamily family)
{
    const auto n = coeffs.size();
    if (n < 1 || (n & (n - 1)) != 0)
        throw std::invalid_argument("wavelet: length " + std::to_string(n) + " is not a power of two; resample or pad the segment");
    const auto h = wavelet_filter(family);
    const auto taps = static_cast<Eigen::Index>(h.size());
    // High-pass by quadrature mirror: g_k = (-1)^k h_{L-1-k}.
    std::vector<double> g(h.size());
    for (Eigen::Index k = 0; k < taps; ++k) g[k] = ((k % 2) ? -1.0 : 1.0) * h[taps - 1 - k];

    Eigen::VectorXd approx = coeffs.head(1);
    for (Eigen::Index half = 1; half < n; half *= 2) {
        const Eigen::Index len = 2 * half;
        Eigen::VectorXd next = Eigen::VectorXd::Zero(len);
        const auto detail = coeffs.segment(half, half);
        for (Eigen::Index m = 0; m < half; ++m)
            for (Eigen::Index k = 0; k < taps; ++k) {
                const Eigen::Index idx = (2 * m + k) % len;
                next(idx) += h[k] * approx(m) + g[k] * detail(m);
            }
        approx = std::move(next);
    }
    return approx;
}

/// First n_funcs synthesis vectors: inverse transforms of unit coordinate
/// vectors e_0..e_{n_funcs-1}. Mutually orthonormal.
inline BasisMatrix wavelet_basis(std::size_t n_points, std::size_t n_funcs, WaveletFamily family = WaveletFamily::daubechies4)
{
    if (n_points < 1 || (n_points & (n_points - 1)) != 0)
        throw std::invalid_argument("wavelet_basis: n_points=" + std::to_string(n_points) +
                                    " is not a power of two; use a power-of-two segment length");
    if (n_funcs < 1 || n_funcs > n_points) throw std::invalid_argument("wavelet_basis: need 1 <= n_funcs <= n_points");
    BasisMatrix out;
    out.family = BasisFamily::wavelet;
    out.columns.resize(static_cast<Eigen::Index>(n_points), static_cast<Eigen::Index>(n_funcs));
    for (std::size_t q = 0; q < n_funcs; ++q) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_points));
        e(static_cast<Eigen::Index>(q)) = 1.0;
        out.columns.col(static_cast<Eigen::Index>(q)) = inverse_dwt(e, family);
    }
    detail::normalize_columns(out.columns);
    out.params = std::string("family=") + to_string(family) + ";n_funcs=" + std::to_string(n_funcs);
    return out;
}

/**
 * Gram-Schmidt in column order (two passes for stability). The first column
 * keeps its direction; the span is unchanged. Throws on rank deficiency.
 */
inline BasisMatrix orthogonalize(const BasisMatrix& basis)
{
    BasisMatrix out = basis;
    auto& q = out.columns;
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
        const double original = basis.columns.col(c).norm();
        for (int pass = 0; pass < 2; ++pass)
            for (Eigen::Index prev = 0; prev < c; ++prev) q.col(c) -= q.col(prev).dot(q.col(c)) * q.col(prev);
        const double norm = q.col(c).norm();
        if (!(norm > 1e-10 * original) || !(original > 0.0))
            throw std::invalid_argument("orthogonalize: column " + std::to_string(c) + " is linearly dependent on earlier columns");
        q.col(c) /= norm;
    }
    return out;
}

} // namespace dfsl
