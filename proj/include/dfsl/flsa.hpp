#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace dfsl {

/// min_b 1/2 ||b - z||^2 + s_sparsity ||b||_1 + s_fusion ||D b||_1
struct FlsaProblem
{
    Eigen::VectorXd z;
    double s_sparsity = 0.0;
    double s_fusion = 0.0;
};

/// Scratch buffers for the O(n) total-variation pass; reusable across calls.
struct TvWorkspace
{
    std::vector<double> x, a, b, tm, tp;

    void reserve(std::size_t n)
    {
        if (x.size() < 2 * n) {
            x.resize(2 * n);
            a.resize(2 * n);
            b.resize(2 * n);
        }
        if (tm.size() < n) {
            tm.resize(n);
            tp.resize(n);
        }
    }
};

/**
 * Exact 1-D total-variation denoising,
 *   argmin_b 1/2 ||b - z||^2 + weight * sum_k |b_{k+1} - b_k|,
 * by dynamic programming over the piecewise-linear derivative of the
 * running cost (Johnson, 2013). O(n) time. `out` may alias `z`.
 */
inline void tv_denoise(std::span<const double> z, double weight, std::span<double> out, TvWorkspace& ws)
{
    const std::size_t n = z.size();
    if (out.size() != n) throw std::invalid_argument("tv_denoise: output size mismatch");
    if (n == 0) return;
    if (n == 1 || weight == 0.0) {
        std::copy(z.begin(), z.end(), out.begin());
        return;
    }
    ws.reserve(n);
    double* x = ws.x.data();
    double* a = ws.a.data();
    double* b = ws.b.data();
    double* tm = ws.tm.data();
    double* tp = ws.tp.data();
    const double lam = weight;

    // The derivative of the running cost is stored as knots x[l..r] with
    // slope/intercept increments a, b; first/last pieces are kept apart.
    tm[0] = -lam + z[0];
    tp[0] = lam + z[0];
    std::size_t l = n - 1;
    std::size_t r = n;
    x[l] = tm[0];
    x[r] = tp[0];
    a[l] = 1.0;
    b[l] = -z[0] + lam;
    a[r] = -1.0;
    b[r] = z[0] + lam;
    double afirst = 1.0, bfirst = -z[1] - lam;
    double alast = -1.0, blast = z[1] - lam;

    for (std::size_t k = 1; k + 1 < n; ++k) {
        double alo = afirst, blo = bfirst;
        std::size_t lo = l;
        for (; lo <= r; ++lo) {
            if (alo * x[lo] + blo > -lam) break;
            alo += a[lo];
            blo += b[lo];
        }
        double ahi = alast, bhi = blast;
        std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(r);
        for (; hi >= static_cast<std::ptrdiff_t>(lo); --hi) {
            if (-ahi * x[hi] - bhi < lam) break;
            ahi += a[hi];
            bhi += b[hi];
        }

        tm[k] = (-lam - blo) / alo;
        l = lo - 1;
        x[l] = tm[k];
        tp[k] = (lam + bhi) / (-ahi);
        r = static_cast<std::size_t>(hi + 1);
        x[r] = tp[k];

        a[l] = alo;
        b[l] = blo + lam;
        a[r] = ahi;
        b[r] = bhi + lam;
        afirst = 1.0;
        bfirst = -z[k + 1] - lam;
        alast = -1.0;
        blast = z[k + 1] - lam;
    }

    // Last coefficient: zero of the final derivative.
    double alo = afirst, blo = bfirst;
    for (std::size_t lo = l; lo <= r; ++lo) {
        if (alo * x[lo] + blo > 0.0) break;
        alo += a[lo];
        blo += b[lo];
    }
    out[n - 1] = -blo / alo;
    for (std::size_t k = n - 1; k-- > 0;) {
        if (out[k + 1] > tp[k]) out[k] = tp[k];
        else if (out[k + 1] < tm[k]) out[k] = tm[k];
        else out[k] = out[k + 1];
    }
}

inline Eigen::VectorXd tv_denoise(const Eigen::VectorXd& z, double weight)
{
    if (!(weight >= 0.0) || !std::isfinite(weight)) throw std::invalid_argument("tv_denoise: weight must be finite and >= 0");
    if (!z.allFinite()) throw std::invalid_argument("tv_denoise: non-finite input");
    Eigen::VectorXd out(z.size());
    TvWorkspace ws;
    tv_denoise(std::span<const double>(z.data(), static_cast<std::size_t>(z.size())), weight,
               std::span<double>(out.data(), static_cast<std::size_t>(out.size())), ws);
    return out;
}

inline double soft_threshold(double v, double t)
{
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

/// In-place FLSA prox: total-variation pass, then soft-thresholding.
inline void flsa_solve(std::span<double> z, double s_sparsity, double s_fusion, TvWorkspace& ws)
{
    tv_denoise(std::span<const double>(z.data(), z.size()), s_fusion, z, ws);
    if (s_sparsity > 0.0)
        for (auto& v : z) v = soft_threshold(v, s_sparsity);
}

inline Eigen::VectorXd flsa_solve(const FlsaProblem& problem)
{
    if (problem.z.size() < 1) throw std::invalid_argument("flsa_solve: empty input");
    if (!problem.z.allFinite()) throw std::invalid_argument("flsa_solve: non-finite input");
    if (!(problem.s_sparsity >= 0.0) || !(problem.s_fusion >= 0.0) || !std::isfinite(problem.s_sparsity) ||
        !std::isfinite(problem.s_fusion))
        throw std::invalid_argument("flsa_solve: weights must be finite and >= 0");
    Eigen::VectorXd out = problem.z;
    TvWorkspace ws;
    flsa_solve(std::span<double>(out.data(), static_cast<std::size_t>(out.size())), problem.s_sparsity, problem.s_fusion, ws);
    return out;
}

inline double flsa_objective(const FlsaProblem& problem, const Eigen::VectorXd& b)
{
    double fused = 0.0;
    for (Eigen::Index k = 1; k < b.size(); ++k) fused += std::abs(b(k) - b(k - 1));
    return 0.5 * (b - problem.z).squaredNorm() + problem.s_sparsity * b.lpNorm<1>() + problem.s_fusion * fused;
}

} // namespace dfsl
