#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "dataset.hpp"
#include "detail/parallel.hpp"
#include "flsa.hpp"

namespace dfsl {

/// lambda1 weights the fusion (successive differences), lambda2 the sparsity.
struct PenaltyConfig
{
    double lambda1 = 0.0;
    double lambda2 = 0.0;
};

inline void validate(const PenaltyConfig& pen)
{
    if (!std::isfinite(pen.lambda1) || !std::isfinite(pen.lambda2) || pen.lambda1 < 0.0 || pen.lambda2 < 0.0)
        throw std::invalid_argument("penalties must be finite and non-negative");
}

/**
 * Time-varying self-expression coefficients b_jr(t_k).
 *
 * slice(j) is a p x n matrix whose row r is b_jr over the grid; row j is
 * identically zero.
 */
class CoefficientPath
{
public:
    CoefficientPath() = default;
    CoefficientPath(std::size_t p, std::size_t n)
        : p_(p), n_(n), slices_(p, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n)))
    {
    }
    explicit CoefficientPath(std::vector<Eigen::MatrixXd> slices)
        : p_(slices.size()), n_(slices.empty() ? 0 : static_cast<std::size_t>(slices.front().cols())), slices_(std::move(slices))
    {
        for (std::size_t j = 0; j < p_; ++j) check_slice(j, slices_[j]);
    }

    std::size_t n_channels() const { return p_; }
    std::size_t n_times() const { return n_; }
    double operator()(std::size_t j, std::size_t r, std::size_t k) const
    {
        return slices_[j](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
    }
    const Eigen::MatrixXd& slice(std::size_t j) const { return slices_.at(j); }
    void set_slice(std::size_t j, Eigen::MatrixXd s)
    {
        check_slice(j, s);
        slices_.at(j) = std::move(s);
    }

    /// Number of entries with |b| > threshold in slice j.
    std::size_t nonzeros(std::size_t j, double threshold = 1e-10) const
    {
        return static_cast<std::size_t>((slices_.at(j).array().abs() > threshold).count());
    }
    std::size_t nonzeros(double threshold = 1e-10) const
    {
        std::size_t total = 0;
        for (std::size_t j = 0; j < p_; ++j) total += nonzeros(j, threshold);
        return total;
    }

    /// p x p matrix with entry (j, r) = mean over k in [lo, hi) of |b_jr(t_k)|.
    Eigen::MatrixXd mean_abs(std::size_t lo, std::size_t hi) const
    {
        if (lo >= hi || hi > n_) throw std::invalid_argument("coefficient path: empty or out-of-range segment");
        Eigen::MatrixXd out(static_cast<Eigen::Index>(p_), static_cast<Eigen::Index>(p_));
        const auto len = static_cast<Eigen::Index>(hi - lo);
        for (std::size_t j = 0; j < p_; ++j)
            out.row(static_cast<Eigen::Index>(j)) =
                slices_[j].middleCols(static_cast<Eigen::Index>(lo), len).cwiseAbs().rowwise().mean().transpose();
        return out;
    }

    /// p x p matrix with entry (j, r) = mean over all k of b_jr(t_k).
    Eigen::MatrixXd mean() const
    {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(p_), static_cast<Eigen::Index>(p_));
        for (std::size_t j = 0; j < p_; ++j) out.row(static_cast<Eigen::Index>(j)) = slices_[j].rowwise().mean().transpose();
        return out;
    }

    /// Constant-in-time path from a static p x p matrix (row j = b_j).
    static CoefficientPath constant(const Eigen::MatrixXd& b, std::size_t n)
    {
        std::vector<Eigen::MatrixXd> slices;
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            Eigen::MatrixXd s = b.row(j).transpose().replicate(1, static_cast<Eigen::Index>(n));
            s.row(j).setZero();
            slices.push_back(std::move(s));
        }
        return CoefficientPath(std::move(slices));
    }

    friend bool operator==(const CoefficientPath& a, const CoefficientPath& b)
    {
        if (a.p_ != b.p_ || a.n_ != b.n_) return false;
        for (std::size_t j = 0; j < a.p_; ++j)
            if (a.slices_[j] != b.slices_[j]) return false;
        return true;
    }

private:
    void check_slice(std::size_t j, const Eigen::MatrixXd& s) const
    {
        if (static_cast<std::size_t>(s.rows()) != p_ || static_cast<std::size_t>(s.cols()) != n_)
            throw std::invalid_argument("coefficient path: slice " + std::to_string(j) + " has wrong shape");
        if (!s.allFinite()) throw std::invalid_argument("coefficient path: slice " + std::to_string(j) + " has non-finite entries");
        if (!s.row(static_cast<Eigen::Index>(j)).isZero(0.0))
            throw std::invalid_argument("coefficient path: b_jj must be zero (channel " + std::to_string(j) + ")");
    }

    std::size_t p_ = 0;
    std::size_t n_ = 0;
    std::vector<Eigen::MatrixXd> slices_;
};

struct SolverOptions
{
    double tol = 1e-8;            // squared coefficient change e1
    std::size_t max_iter = 5000;
    bool restart = true;          // reset momentum when the objective increases
    unsigned threads = 0;         // 0 = hardware concurrency
};

/**
 * Gamma^{-1/2} by symmetric eigendecomposition with eigenvalues floored at
 * `floor`. Diagonal input is handled entrywise, so the identity maps to the
 * identity exactly.
 */
inline Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& gamma, double floor = 1e-10)
{
    if (NoiseModel::is_diagonal(gamma)) {
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(gamma.rows(), gamma.cols());
        for (Eigen::Index k = 0; k < gamma.rows(); ++k) out(k, k) = 1.0 / std::sqrt(std::max(gamma(k, k), floor));
        return out;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gamma);
    if (es.info() != Eigen::Success) throw std::runtime_error("inverse_sqrt: eigendecomposition failed");
    const Eigen::VectorXd d = es.eigenvalues().cwiseMax(floor).cwiseSqrt().cwiseInverse();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

/**
 * Cross-time second moments M(k, m) = sum_i Y_i(t_k)' Y_i(t_m) (p x p).
 * Small problems cache every pair; larger ones cache the equal-time blocks
 * and compute the rest on request.
 */
class TimeMoments
{
public:
    explicit TimeMoments(const FunctionalDataset& data, std::size_t dense_limit = 2048)
        : n_(data.n_times()), p_(data.n_channels())
    {
        const auto N = static_cast<Eigen::Index>(data.n_samples());
        const auto p = static_cast<Eigen::Index>(p_);
        slices_.assign(n_, Eigen::MatrixXd(N, p));
        for (Eigen::Index i = 0; i < N; ++i)
            for (std::size_t k = 0; k < n_; ++k) slices_[k].row(i) = data.sample(static_cast<std::size_t>(i)).row(static_cast<Eigen::Index>(k));
        if (n_ * p_ <= dense_limit) {
            Eigen::MatrixXd flat(N, static_cast<Eigen::Index>(n_ * p_));
            for (std::size_t k = 0; k < n_; ++k) flat.middleCols(static_cast<Eigen::Index>(k) * p, p) = slices_[k];
            gram_ = Eigen::MatrixXd::Zero(flat.cols(), flat.cols());
            gram_.selfadjointView<Eigen::Lower>().rankUpdate(flat.transpose());
            gram_.triangularView<Eigen::StrictlyUpper>() = gram_.transpose();
        } else {
            diag_.reserve(n_);
            for (std::size_t k = 0; k < n_; ++k) diag_.push_back(slices_[k].transpose() * slices_[k]);
        }
    }

    std::size_t n_times() const { return n_; }
    std::size_t n_channels() const { return p_; }

    Eigen::MatrixXd block(std::size_t k, std::size_t m) const
    {
        const auto p = static_cast<Eigen::Index>(p_);
        if (gram_.size() > 0) return gram_.block(static_cast<Eigen::Index>(k) * p, static_cast<Eigen::Index>(m) * p, p, p);
        if (k == m) return diag_[k];
        return slices_[k].transpose() * slices_[m];
    }

    /// N x p matrix of all samples at time k.
    const Eigen::MatrixXd& time_slice(std::size_t k) const { return slices_[k]; }

private:
    std::size_t n_, p_;
    std::vector<Eigen::MatrixXd> slices_;
    Eigen::MatrixXd gram_;
    std::vector<Eigen::MatrixXd> diag_;
};

/**
 * Quadratic form of the per-channel least-squares term
 *   f(b) = 1/2 sum_i Z_ij' Gamma_j^{-1} Z_ij,  Z_ij = Y_ij - sum_{r != j} diag(Y_ir) b_jr,
 * written as f(b) = constant - linear'b + 1/2 b' H b over the stacked vector
 * b = [b_jr1; b_jr2; ...] (peer r in increasing order, n entries each).
 *
 * H is the Gram matrix of the whitened design Gamma^{-1/2} diag(Y_ir)
 * stacked over samples; its sparsity follows that of Gamma^{-1}.
 */
class ChannelDesign
{
public:
    ChannelDesign(const TimeMoments& moments, std::size_t channel, const Eigen::MatrixXd* gamma = nullptr)
        : channel_(channel), n_(moments.n_times()), p_(moments.n_channels())
    {
        if (channel >= p_) throw std::invalid_argument("channel index out of range");
        for (std::size_t r = 0; r < p_; ++r)
            if (r != channel) peers_.push_back(r);
        const auto n = static_cast<Eigen::Index>(n_);
        const auto q = static_cast<Eigen::Index>(peers_.size());
        const Eigen::Index dim = q * n;

        Eigen::MatrixXd precision;
        if (gamma) {
            if (gamma->rows() != n || gamma->cols() != n) throw std::invalid_argument("gamma does not match the time grid");
            const Eigen::MatrixXd w = inverse_sqrt(*gamma);
            precision = NoiseModel::is_diagonal(w) ? Eigen::MatrixXd(w.cwiseProduct(w)) : Eigen::MatrixXd(w.transpose() * w);
            block_diagonal_ = NoiseModel::is_diagonal(precision);
        }

        const double scale = precision.size() ? precision.cwiseAbs().maxCoeff() : 1.0;
        std::vector<Eigen::Triplet<double>> triplets;
        linear_ = Eigen::VectorXd::Zero(dim);
        constant_ = 0.0;
        const auto jj = static_cast<Eigen::Index>(channel);
        for (Eigen::Index k = 0; k < n; ++k) {
            for (Eigen::Index m = 0; m < n; ++m) {
                const double g = precision.size() ? precision(k, m) : (k == m ? 1.0 : 0.0);
                if (g == 0.0 || std::abs(g) <= 1e-14 * scale) continue;
                const Eigen::MatrixXd mom = moments.block(static_cast<std::size_t>(k), static_cast<std::size_t>(m));
                for (Eigen::Index a = 0; a < q; ++a) {
                    const auto ra = static_cast<Eigen::Index>(peers_[a]);
                    for (Eigen::Index b = 0; b < q; ++b)
                        triplets.emplace_back(a * n + k, b * n + m, g * mom(ra, static_cast<Eigen::Index>(peers_[b])));
                    linear_(a * n + k) += g * mom(ra, jj);
                }
                constant_ += 0.5 * g * mom(jj, jj);
            }
        }
        hessian_.resize(dim, dim);
        hessian_.setFromTriplets(triplets.begin(), triplets.end());
        hessian_.makeCompressed();
        lipschitz_ = compute_lipschitz();
    }

    std::size_t channel() const { return channel_; }
    std::size_t n_times() const { return n_; }
    std::size_t n_channels() const { return p_; }
    const std::vector<std::size_t>& peers() const { return peers_; }
    Eigen::Index dimension() const { return linear_.size(); }
    const Eigen::SparseMatrix<double>& hessian() const { return hessian_; }
    const Eigen::VectorXd& linear() const { return linear_; }
    double constant() const { return constant_; }
    double lipschitz() const { return lipschitz_; }

    void hess(const Eigen::VectorXd& b, Eigen::VectorXd& out) const { out.noalias() = hessian_ * b; }

    /// 1/2 sum_i Z_ij' Gamma^{-1} Z_ij at b.
    double smooth(const Eigen::VectorXd& b) const
    {
        const Eigen::VectorXd hb = hessian_ * b;
        return constant_ - linear_.dot(b) + 0.5 * b.dot(hb);
    }

    Eigen::VectorXd pack(const Eigen::MatrixXd& slice) const
    {
        const auto n = static_cast<Eigen::Index>(n_);
        Eigen::VectorXd v(dimension());
        for (std::size_t a = 0; a < peers_.size(); ++a)
            v.segment(static_cast<Eigen::Index>(a) * n, n) = slice.row(static_cast<Eigen::Index>(peers_[a])).transpose();
        return v;
    }

    Eigen::MatrixXd unpack(const Eigen::VectorXd& v) const
    {
        const auto n = static_cast<Eigen::Index>(n_);
        Eigen::MatrixXd slice = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p_), n);
        for (std::size_t a = 0; a < peers_.size(); ++a)
            slice.row(static_cast<Eigen::Index>(peers_[a])) = v.segment(static_cast<Eigen::Index>(a) * n, n).transpose();
        return slice;
    }

private:
    double compute_lipschitz() const
    {
        const auto n = static_cast<Eigen::Index>(n_);
        const auto q = static_cast<Eigen::Index>(peers_.size());
        if (q == 0) return 0.0;
        if (block_diagonal_) {
            // H is block diagonal over time points: exact per-block eigenvalues.
            double best = 0.0;
            Eigen::MatrixXd blk(q, q);
            for (Eigen::Index k = 0; k < n; ++k) {
                for (Eigen::Index a = 0; a < q; ++a)
                    for (Eigen::Index b = 0; b < q; ++b) blk(a, b) = hessian_.coeff(a * n + k, b * n + k);
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(blk, Eigen::EigenvaluesOnly);
                best = std::max(best, es.eigenvalues().maxCoeff());
            }
            return best;
        }
        if (dimension() <= 400) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(hessian_), Eigen::EigenvaluesOnly);
            return std::max(0.0, es.eigenvalues().maxCoeff());
        }
        // Power iteration on the PSD Hessian.
        Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(dimension(), 1.0, 2.0);
        v.normalize();
        double lambda = 0.0;
        Eigen::VectorXd w;
        for (int it = 0; it < 20000; ++it) {
            w.noalias() = hessian_ * v;
            const double next = v.dot(w);
            const double norm = w.norm();
            if (!(norm > 0.0)) return 0.0;
            v = w / norm;
            if (std::abs(next - lambda) <= 1e-12 * std::abs(next)) {
                lambda = next;
                break;
            }
            lambda = next;
        }
        return lambda;
    }

    std::size_t channel_, n_, p_;
    std::vector<std::size_t> peers_;
    bool block_diagonal_ = true;
    Eigen::SparseMatrix<double> hessian_;
    Eigen::VectorXd linear_;
    double constant_ = 0.0;
    double lipschitz_ = 0.0;
};

/// Squared spectral norm of the whitened stacked design for channel j.
inline double lipschitz_constant(const FunctionalDataset& data, std::size_t channel, const NoiseModel* noise = nullptr)
{
    const TimeMoments moments(data);
    return ChannelDesign(moments, channel, noise ? &noise->gamma(channel) : nullptr).lipschitz();
}

struct FistaResult
{
    Eigen::VectorXd x;
    double objective = 0.0;
    std::size_t iterations = 0;
    std::size_t restarts = 0;
    double step_lipschitz = 0.0;
    bool converged = false;
};

/**
 * Accelerated proximal gradient (Beck-Teboulle momentum
 * t_k = (1 + sqrt(1 + 4 t_{k-1}^2)) / 2) for
 *   min_x constant - linear'x + 1/2 x'Hx + g(x).
 *
 * Problem must provide hess(x, out), linear(), constant(),
 * prox(z, step) (in place, prox of step * g) and penalty(x).
 * With restart enabled, a step that increases the objective is discarded
 * and momentum is reset; if even a plain proximal step fails to descend the
 * step constant is doubled. Stops when ||x_k - x_{k-1}||^2 <= tol.
 */
template <class Problem>
FistaResult fista(const Problem& problem, Eigen::VectorXd x0, double lipschitz, const SolverOptions& opts)
{
    FistaResult res;
    const Eigen::Index dim = x0.size();
    auto value = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& hx) {
        return problem.constant() - problem.linear().dot(x) + 0.5 * x.dot(hx) + problem.penalty(x);
    };

    Eigen::VectorXd x = std::move(x0);
    Eigen::VectorXd hx(dim);
    problem.hess(x, hx);
    double fx = value(x, hx);
    res.step_lipschitz = lipschitz;
    if (!(lipschitz > 0.0) || dim == 0) {
        // Zero design: the smooth part is constant, so x = prox of the linear shift only when H = 0.
        res.x = std::move(x);
        res.objective = fx;
        res.converged = true;
        return res;
    }

    double L = lipschitz * (1.0 + 1e-9);
    Eigen::VectorXd y = x, hy = hx, z(dim), x_new(dim), hx_new(dim);
    double t = 1.0;
    bool y_is_x = true;
    for (std::size_t it = 1; it <= opts.max_iter; ++it) {
        res.iterations = it;
        z = y - (hy - problem.linear()) / L;
        problem.prox(z, 1.0 / L);
        x_new.swap(z);
        problem.hess(x_new, hx_new);
        const double f_new = value(x_new, hx_new);
        if (opts.restart && f_new > fx + 1e-13 * std::max(1.0, std::abs(fx))) {
            ++res.restarts;
            if (y_is_x) {
                L *= 2.0;
            } else {
                t = 1.0;
                y = x;
                hy = hx;
                y_is_x = true;
            }
            continue;
        }
        const double change = (x_new - x).squaredNorm();
        const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        const double beta = (t - 1.0) / t_new;
        y = x_new + beta * (x_new - x);
        hy = hx_new + beta * (hx_new - hx);
        y_is_x = beta == 0.0;
        x.swap(x_new);
        hx.swap(hx_new);
        fx = f_new;
        t = t_new;
        if (change <= opts.tol) {
            res.converged = true;
            break;
        }
    }
    res.x = std::move(x);
    res.objective = fx;
    res.step_lipschitz = L;
    return res;
}

namespace detail {

/// DFSL penalty on the packed per-channel vector: FLSA prox per peer block.
struct DfslProblem
{
    const ChannelDesign& design;
    PenaltyConfig penalties;
    mutable TvWorkspace ws;

    void hess(const Eigen::VectorXd& x, Eigen::VectorXd& out) const { design.hess(x, out); }
    const Eigen::VectorXd& linear() const { return design.linear(); }
    double constant() const { return design.constant(); }

    void prox(Eigen::VectorXd& z, double step) const
    {
        const auto n = static_cast<std::size_t>(design.n_times());
        for (std::size_t a = 0; a < design.peers().size(); ++a)
            flsa_solve(std::span<double>(z.data() + a * n, n), penalties.lambda2 * step, penalties.lambda1 * step, ws);
    }

    double penalty(const Eigen::VectorXd& x) const
    {
        const auto n = static_cast<Eigen::Index>(design.n_times());
        double sparse = 0.0, fused = 0.0;
        for (std::size_t a = 0; a < design.peers().size(); ++a) {
            const auto seg = x.segment(static_cast<Eigen::Index>(a) * n, n);
            sparse += seg.lpNorm<1>();
            for (Eigen::Index k = 1; k < n; ++k) fused += std::abs(seg(k) - seg(k - 1));
        }
        return penalties.lambda2 * sparse + penalties.lambda1 * fused;
    }
};

} // namespace detail

struct ChannelFit
{
    Eigen::MatrixXd coefficients;  // p x n, row j zero
    double objective = 0.0;        // full penalized objective
    double smooth = 0.0;           // 1/2 sum_i Z' Gamma^{-1} Z
    double lipschitz = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/**
 * FISTA for one channel of the DFSL objective. The prox of each iteration is
 * the FLSA of every peer block with weights lambda2/L (sparsity) and
 * lambda1/L (fusion). `init` (p x n) defaults to zero.
 */
inline ChannelFit fit_channel_dfsl(const ChannelDesign& design, const PenaltyConfig& penalties, const SolverOptions& opts = {},
                                   const Eigen::MatrixXd* init = nullptr)
{
    validate(penalties);
    Eigen::VectorXd x0 = init ? design.pack(*init) : Eigen::VectorXd::Zero(design.dimension());
    detail::DfslProblem problem{design, penalties, {}};
    FistaResult r = fista(problem, std::move(x0), design.lipschitz(), opts);
    ChannelFit out;
    out.smooth = design.smooth(r.x);
    out.coefficients = design.unpack(r.x);
    out.objective = r.objective;
    out.lipschitz = design.lipschitz();
    out.iterations = r.iterations;
    out.converged = r.converged;
    return out;
}

inline ChannelFit fit_channel_dfsl(const FunctionalDataset& data, std::size_t channel, const PenaltyConfig& penalties,
                                   const NoiseModel* noise = nullptr, const SolverOptions& opts = {})
{
    const TimeMoments moments(data);
    const ChannelDesign design(moments, channel, noise ? &noise->gamma(channel) : nullptr);
    return fit_channel_dfsl(design, penalties, opts);
}

/// One design per channel; `noise == nullptr` means Gamma_j = I.
inline std::vector<ChannelDesign> build_designs(const FunctionalDataset& data, const NoiseModel* noise = nullptr, unsigned threads = 0)
{
    if (noise && (noise->n_channels() != data.n_channels() || noise->n_times() != data.n_times()))
        throw std::invalid_argument("noise model does not match the dataset dimensions");
    const TimeMoments moments(data);
    std::vector<std::unique_ptr<ChannelDesign>> built(data.n_channels());
    detail::parallel_for(data.n_channels(), [&](std::size_t j) {
        built[j] = std::make_unique<ChannelDesign>(moments, j, noise ? &noise->gamma(j) : nullptr);
    }, threads);
    std::vector<ChannelDesign> out;
    out.reserve(built.size());
    for (auto& d : built) out.push_back(std::move(*d));
    return out;
}

struct DfslFit
{
    CoefficientPath path;
    std::vector<ChannelFit> channels;

    bool converged() const
    {
        return std::all_of(channels.begin(), channels.end(), [](const ChannelFit& c) { return c.converged; });
    }
    double objective() const
    {
        double total = 0.0;
        for (const auto& c : channels) total += c.objective;
        return total;
    }
};

/// Every channel fitted independently (in parallel); see fit_channel_dfsl.
inline DfslFit fit_dfsl(const std::vector<ChannelDesign>& designs, const PenaltyConfig& penalties, const SolverOptions& opts = {},
                        const CoefficientPath* init = nullptr)
{
    validate(penalties);
    const std::size_t p = designs.size();
    DfslFit fit;
    fit.channels.resize(p);
    detail::parallel_for(p, [&](std::size_t j) {
        try {
            fit.channels[j] = fit_channel_dfsl(designs[j], penalties, opts, init ? &init->slice(j) : nullptr);
        } catch (const std::exception& e) {
            throw std::runtime_error("channel " + std::to_string(j) + ": " + e.what());
        }
    }, opts.threads);
    std::vector<Eigen::MatrixXd> slices;
    slices.reserve(p);
    for (auto& c : fit.channels) slices.push_back(c.coefficients);
    fit.path = CoefficientPath(std::move(slices));
    return fit;
}

inline DfslFit fit_dfsl(const FunctionalDataset& data, const PenaltyConfig& penalties, const NoiseModel* noise = nullptr,
                        const SolverOptions& opts = {})
{
    return fit_dfsl(build_designs(data, noise, opts.threads), penalties, opts);
}

/**
 * Objective of one channel evaluated directly from the data (no quadratic
 * form): lambda1 sum |D b_jr| + lambda2 sum |b_jr| + 1/2 sum_i Z' Gamma^{-1} Z.
 */
inline double dfsl_objective(const FunctionalDataset& data, std::size_t channel, const Eigen::MatrixXd& slice,
                             const PenaltyConfig& penalties, const Eigen::MatrixXd* gamma = nullptr)
{
    const auto n = static_cast<Eigen::Index>(data.n_times());
    const auto j = static_cast<Eigen::Index>(channel);
    Eigen::MatrixXd precision;
    if (gamma) precision = gamma->inverse();
    double fit = 0.0;
    for (const auto& y : data.samples()) {
        Eigen::VectorXd z = y.col(j);
        for (Eigen::Index r = 0; r < y.cols(); ++r)
            if (r != j) z -= y.col(r).cwiseProduct(slice.row(r).transpose());
        fit += gamma ? z.dot(precision * z) : z.squaredNorm();
    }
    double sparse = 0.0, fused = 0.0;
    for (Eigen::Index r = 0; r < slice.rows(); ++r) {
        if (r == j) continue;
        sparse += slice.row(r).lpNorm<1>();
        for (Eigen::Index k = 1; k < n; ++k) fused += std::abs(slice(r, k) - slice(r, k - 1));
    }
    return penalties.lambda1 * fused + penalties.lambda2 * sparse + 0.5 * fit;
}

// ---------------------------------------------------------------------------
// Static baseline

namespace detail {

/// Time-constant coefficients: the DFSL quadratic restricted to b_jr(t_k) = b_jr.
struct StaticProblem
{
    Eigen::MatrixXd hessian;
    Eigen::VectorXd linear_term;
    double constant_term = 0.0;
    double lambda = 0.0;

    explicit StaticProblem(const ChannelDesign& design, double lambda_)
        : lambda(lambda_)
    {
        const auto n = static_cast<Eigen::Index>(design.n_times());
        const auto q = static_cast<Eigen::Index>(design.peers().size());
        hessian = Eigen::MatrixXd::Zero(q, q);
        const auto& h = design.hessian();
        for (Eigen::Index col = 0; col < h.outerSize(); ++col)
            for (Eigen::SparseMatrix<double>::InnerIterator it(h, col); it; ++it) hessian(it.row() / n, it.col() / n) += it.value();
        linear_term = Eigen::VectorXd::Zero(q);
        for (Eigen::Index a = 0; a < q; ++a) linear_term(a) = design.linear().segment(a * n, n).sum();
        constant_term = design.constant();
    }

    void hess(const Eigen::VectorXd& x, Eigen::VectorXd& out) const { out.noalias() = hessian * x; }
    const Eigen::VectorXd& linear() const { return linear_term; }
    double constant() const { return constant_term; }
    void prox(Eigen::VectorXd& z, double step) const
    {
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = soft_threshold(z(i), lambda * step);
    }
    double penalty(const Eigen::VectorXd& x) const { return lambda * x.lpNorm<1>(); }

    double lipschitz() const
    {
        if (hessian.size() == 0) return 0.0;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hessian, Eigen::EigenvaluesOnly);
        return std::max(0.0, es.eigenvalues().maxCoeff());
    }
};

} // namespace detail

struct StaticFit
{
    Eigen::MatrixXd coefficients;  // p x p, row j = b_j, zero diagonal
    std::vector<double> smooth;    // per-channel 1/2 sum_i Z' Gamma^{-1} Z
    bool converged = true;
};

/// Largest lambda at which the static fit is nonzero: max |linear|.
inline double static_lambda_max(const std::vector<ChannelDesign>& designs)
{
    double best = 0.0;
    for (const auto& d : designs) {
        detail::StaticProblem sp(d, 0.0);
        if (sp.linear_term.size()) best = std::max(best, sp.linear_term.cwiseAbs().maxCoeff());
    }
    return best;
}

/// Static lasso on the stacked whitened regression, one channel at a time.
inline StaticFit fit_sfsl(const std::vector<ChannelDesign>& designs, double lambda, const SolverOptions& opts = {})
{
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("fit_sfsl: lambda must be finite and >= 0");
    const std::size_t p = designs.size();
    StaticFit out;
    out.coefficients = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    out.smooth.assign(p, 0.0);
    std::vector<char> converged(p, 1);
    detail::parallel_for(p, [&](std::size_t j) {
        detail::StaticProblem sp(designs[j], lambda);
        FistaResult r = fista(sp, Eigen::VectorXd::Zero(sp.linear_term.size()), sp.lipschitz(), opts);
        for (std::size_t a = 0; a < designs[j].peers().size(); ++a)
            out.coefficients(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(designs[j].peers()[a])) = r.x(static_cast<Eigen::Index>(a));
        out.smooth[j] = r.objective - sp.penalty(r.x);
        converged[j] = r.converged;
    }, opts.threads);
    out.converged = std::all_of(converged.begin(), converged.end(), [](char c) { return c != 0; });
    return out;
}

inline StaticFit fit_sfsl(const FunctionalDataset& data, double lambda, const NoiseModel* noise = nullptr, const SolverOptions& opts = {})
{
    return fit_sfsl(build_designs(data, noise, opts.threads), lambda, opts);
}

// ---------------------------------------------------------------------------
// Unknown noise covariance: block coordinate descent

struct BcdOptions
{
    SolverOptions solver;
    double tol_b = 1e-6;
    double tol_sigma = 1e-4;
    std::size_t max_outer = 20;
    bool ols_init = true;                  // per-time least squares; false = zero
    std::optional<NoiseModel> fixed_noise; // skip covariance updates when set
};

struct BcdResult
{
    CoefficientPath path;
    NoiseModel noise;
    std::vector<Eigen::MatrixXd> covariance;  // estimated Sigma_j (n x n)
    std::size_t outer_iterations = 0;
    bool converged = false;
    bool ridge_fallback = false;
    bool solver_converged = true;
};

/**
 * Per-time-point least squares of channel j on its peers (Gamma = I).
 * Falls back to a small ridge when a time point's normal matrix is singular.
 */
inline CoefficientPath ols_path(const TimeMoments& moments, bool* used_ridge = nullptr)
{
    const std::size_t p = moments.n_channels(), n = moments.n_times();
    std::vector<Eigen::MatrixXd> slices(p, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n)));
    bool ridge = false;
    for (std::size_t k = 0; k < n; ++k) {
        const Eigen::MatrixXd m = moments.block(k, k);
        for (std::size_t j = 0; j < p; ++j) {
            std::vector<Eigen::Index> peers;
            for (std::size_t r = 0; r < p; ++r)
                if (r != j) peers.push_back(static_cast<Eigen::Index>(r));
            const auto q = static_cast<Eigen::Index>(peers.size());
            if (q == 0) continue;
            Eigen::MatrixXd a(q, q);
            Eigen::VectorXd rhs(q);
            for (Eigen::Index u = 0; u < q; ++u) {
                rhs(u) = m(peers[u], static_cast<Eigen::Index>(j));
                for (Eigen::Index v = 0; v < q; ++v) a(u, v) = m(peers[u], peers[v]);
            }
            Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
            const double trace = a.trace();
            if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-12) || !(trace > 0.0)) {
                ridge = true;
                const double delta = 1e-6 * std::max(trace / static_cast<double>(q), 1e-12);
                ldlt.compute(a + delta * Eigen::MatrixXd::Identity(q, q));
            }
            const Eigen::VectorXd sol = ldlt.solve(rhs);
            for (Eigen::Index u = 0; u < q; ++u) slices[j](peers[u], static_cast<Eigen::Index>(k)) = sol(u);
        }
    }
    if (used_ridge) *used_ridge = ridge;
    return CoefficientPath(std::move(slices));
}

/// Residuals eps_ij = Y_ij - sum_r Y_ir o b_jr, returned as an N x n matrix.
inline Eigen::MatrixXd residuals(const FunctionalDataset& data, std::size_t channel, const Eigen::MatrixXd& slice)
{
    const auto N = static_cast<Eigen::Index>(data.n_samples());
    const auto n = static_cast<Eigen::Index>(data.n_times());
    const auto j = static_cast<Eigen::Index>(channel);
    Eigen::MatrixXd out(N, n);
    for (Eigen::Index i = 0; i < N; ++i) {
        const auto& y = data.sample(static_cast<std::size_t>(i));
        Eigen::VectorXd z = y.col(j);
        for (Eigen::Index r = 0; r < y.cols(); ++r)
            if (r != j) z -= y.col(r).cwiseProduct(slice.row(r).transpose());
        out.row(i) = z.transpose();
    }
    return out;
}

/**
 * Sample covariance of the residuals, shrunk toward its diagonal with
 * weight min(1, n / (10 N)).
 */
inline Eigen::MatrixXd shrunk_covariance(const Eigen::MatrixXd& eps)
{
    const double N = static_cast<double>(eps.rows());
    const double n = static_cast<double>(eps.cols());
    Eigen::MatrixXd s = (eps.transpose() * eps) / N;
    const double gamma = std::min(1.0, n / (10.0 * N));
    Eigen::MatrixXd out = (1.0 - gamma) * s;
    out.diagonal() = s.diagonal();
    return 0.5 * (out + out.transpose());
}

/// Splits Sigma into sigma^2 = n * mean(diag) and the unit-diagonal correlation.
inline std::pair<double, Eigen::MatrixXd> decompose_covariance(const Eigen::MatrixXd& cov)
{
    const auto n = cov.rows();
    Eigen::VectorXd d = cov.diagonal().cwiseMax(std::numeric_limits<double>::min());
    const double sigma2 = static_cast<double>(n) * d.mean();
    const Eigen::VectorXd inv = d.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd g = inv.asDiagonal() * cov * inv.asDiagonal();
    g = 0.5 * (g + g.transpose());
    g.diagonal().setOnes();
    return {std::sqrt(sigma2), g};
}

/**
 * Alternates residual covariance estimation and FISTA refits (starting from
 * Gamma = I and per-time least squares) until both the coefficient change
 * and the covariance change fall below tol_b and tol_sigma.
 */
inline BcdResult fit_bcd(const FunctionalDataset& data, const PenaltyConfig& penalties, const BcdOptions& opts = {})
{
    validate(penalties);
    const std::size_t p = data.n_channels();
    const std::size_t n = data.n_times();
    const TimeMoments moments(data);

    BcdResult res{.path = {}, .noise = opts.fixed_noise ? *opts.fixed_noise : NoiseModel::white(p, n), .covariance = {}};
    if (opts.fixed_noise && (opts.fixed_noise->n_channels() != p || opts.fixed_noise->n_times() != n))
        throw std::invalid_argument("fit_bcd: fixed noise model does not match the dataset");
    res.path = opts.ols_init ? ols_path(moments, &res.ridge_fallback) : CoefficientPath(p, n);
    for (std::size_t j = 0; j < p; ++j) res.covariance.push_back(res.noise.covariance(j));

    for (std::size_t g = 1; g <= opts.max_outer; ++g) {
        res.outer_iterations = g;
        std::vector<Eigen::MatrixXd> cov(p), gamma(p), slices(p);
        Eigen::VectorXd sigma(static_cast<Eigen::Index>(p));
        std::vector<char> ok(p, 1);
        double change_b = 0.0, change_sigma = 0.0;
        detail::parallel_for(p, [&](std::size_t j) {
            if (opts.fixed_noise) {
                cov[j] = opts.fixed_noise->covariance(j);
                gamma[j] = opts.fixed_noise->gamma(j);
                sigma(static_cast<Eigen::Index>(j)) = opts.fixed_noise->sigma(j);
            } else {
                cov[j] = shrunk_covariance(residuals(data, j, res.path.slice(j)));
                auto [s, gm] = decompose_covariance(cov[j]);
                sigma(static_cast<Eigen::Index>(j)) = s;
                gamma[j] = std::move(gm);
            }
            const ChannelDesign design(moments, j, &gamma[j]);
            ChannelFit fit = fit_channel_dfsl(design, penalties, opts.solver, &res.path.slice(j));
            ok[j] = fit.converged;
            slices[j] = std::move(fit.coefficients);
        }, opts.solver.threads);
        for (std::size_t j = 0; j < p; ++j) {
            change_b += (slices[j] - res.path.slice(j)).squaredNorm();
            change_sigma += (cov[j] - res.covariance[j]).squaredNorm();
        }
        res.solver_converged = std::all_of(ok.begin(), ok.end(), [](char c) { return c != 0; });
        res.path = CoefficientPath(std::move(slices));
        res.covariance = std::move(cov);
        res.noise = NoiseModel(sigma, std::move(gamma));
        if (change_b <= opts.tol_b && change_sigma <= opts.tol_sigma && g > 1) {
            res.converged = true;
            break;
        }
        if (opts.fixed_noise && change_b <= opts.tol_b) {
            res.converged = true;
            break;
        }
    }
    return res;
}

} // namespace dfsl
