#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "basis.hpp"
#include "dataset.hpp"
#include "detail/parallel.hpp"
#include "detail/rng.hpp"

namespace dfsl {

/// One subspace within a segment: X = Phi R V with R drawn per sample.
struct SubspaceSpec
{
    BasisMatrix basis;                  // n_s x d
    std::vector<std::size_t> channels;  // p_l channel ids
    std::size_t n_patterns = 2;         // m
    Eigen::MatrixXd coeff_cov;          // m x m covariance of each row of R
};

struct SegmentSpec
{
    std::size_t length = 0;
    std::vector<SubspaceSpec> subspaces;
};

struct GroundTruth
{
    /// 0-based index of the first time point of each segment after the first.
    std::vector<std::size_t> change_points;
    /// assignment[s][j] = subspace id (0-based) of channel j in segment s.
    std::vector<std::vector<std::size_t>> assignment;
    /// bases[s][l]: n_s x d_l orthonormal basis of subspace l in segment s.
    std::vector<std::vector<Eigen::MatrixXd>> bases;
    /// Noiseless signal, one n x p matrix per sample.
    std::vector<Eigen::MatrixXd> signal;
    NoiseModel noise;

    std::size_t n_segments() const { return change_points.size() + 1; }
    std::pair<std::size_t, std::size_t> segment(std::size_t s, std::size_t n_times) const
    {
        const std::size_t lo = s == 0 ? 0 : change_points[s - 1];
        const std::size_t hi = s < change_points.size() ? change_points[s] : n_times;
        return {lo, hi};
    }
    /// Channels of subspace l in segment s.
    std::vector<std::size_t> members(std::size_t s, std::size_t l) const
    {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < assignment[s].size(); ++j)
            if (assignment[s][j] == l) out.push_back(j);
        return out;
    }
};

struct SimulationOptions
{
    double sigma = 0.05;
    double gamma_decay = 0.2;   // Gamma_uv = decay^|u-v| within each segment
    std::uint64_t seed = 1;
    unsigned threads = 0;
};

/// m x m covariance with entries rho^|u-v|.
inline Eigen::MatrixXd ar_covariance(std::size_t m, double rho) { return ar_correlation(m, rho); }

namespace detail {

/// m x p_l matrix with orthonormal rows from QR of a Gaussian matrix.
inline Eigen::MatrixXd orthonormal_rows(std::size_t m, std::size_t p_l, Engine& engine)
{
    std::normal_distribution<double> normal;
    Eigen::MatrixXd g(static_cast<Eigen::Index>(p_l), static_cast<Eigen::Index>(m));
    for (Eigen::Index c = 0; c < g.cols(); ++c)
        for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = normal(engine);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), g.cols());
    return q.transpose();
}

/// d x m matrix whose rows are independent N(0, L L') draws.
inline Eigen::MatrixXd draw_coefficients(const Eigen::MatrixXd& cov_factor, Eigen::Index d, Engine& engine)
{
    std::normal_distribution<double> normal;
    const auto m = cov_factor.rows();
    Eigen::MatrixXd r(d, m);
    for (Eigen::Index q = 0; q < d; ++q) {
        Eigen::VectorXd z(m);
        for (Eigen::Index u = 0; u < m; ++u) z(u) = normal(engine);
        r.row(q) = (cov_factor * z).transpose();
    }
    return r;
}

inline void validate_specs(const std::vector<SegmentSpec>& specs)
{
    if (specs.empty()) throw std::invalid_argument("generate: no segments");
    std::size_t p = 0;
    for (std::size_t s = 0; s < specs.size(); ++s) {
        const auto& seg = specs[s];
        const std::string who = "generate: segment " + std::to_string(s);
        if (seg.length == 0) throw std::invalid_argument(who + " is empty");
        std::vector<int> seen;
        std::size_t count = 0;
        for (std::size_t l = 0; l < seg.subspaces.size(); ++l) {
            const auto& sub = seg.subspaces[l];
            const std::string sw = who + ", subspace " + std::to_string(l);
            if (static_cast<std::size_t>(sub.basis.columns.rows()) != seg.length)
                throw std::invalid_argument(sw + ": basis has " + std::to_string(sub.basis.columns.rows()) +
                                            " rows, segment length is " + std::to_string(seg.length));
            const auto d = static_cast<std::size_t>(sub.basis.columns.cols());
            if (d > seg.length) throw std::invalid_argument(sw + ": basis wider than segment");
            if (sub.n_patterns < 1 || sub.n_patterns > d)
                throw std::invalid_argument(sw + ": need 1 <= n_patterns <= basis width");
            if (sub.n_patterns > sub.channels.size())
                throw std::invalid_argument(sw + ": variation matrix needs n_patterns <= channel count");
            if (static_cast<std::size_t>(sub.coeff_cov.rows()) != sub.n_patterns ||
                static_cast<std::size_t>(sub.coeff_cov.cols()) != sub.n_patterns)
                throw std::invalid_argument(sw + ": coeff_cov must be n_patterns x n_patterns");
            for (auto j : sub.channels) {
                if (j >= seen.size()) seen.resize(j + 1, 0);
                if (seen[j]++) throw std::invalid_argument(sw + ": channel " + std::to_string(j) + " listed twice");
            }
            count += sub.channels.size();
        }
        for (std::size_t j = 0; j < seen.size(); ++j)
            if (!seen[j]) throw std::invalid_argument(who + ": channel " + std::to_string(j) + " is not assigned");
        if (s == 0) p = count;
        else if (count != p) throw std::invalid_argument(who + ": channel count differs from segment 0");
    }
}

} // namespace detail

/**
 * Draws N samples from a segmented subspace model.
 *
 * Per sample, segment and subspace, each row of R is N(0, coeff_cov);
 * V (orthonormal rows) is fixed per (segment, subspace). X = Phi R V is
 * concatenated over segments, each channel of X is scaled to unit norm over
 * the full grid, and noise N(0, sigma^2 Gamma^s / n) is added per segment.
 * Random streams are keyed by (seed, sample, segment, subspace/channel), so
 * growing N leaves earlier samples unchanged.
 */
inline std::pair<FunctionalDataset, GroundTruth>
generate(const std::vector<SegmentSpec>& specs, std::size_t n_samples, const SimulationOptions& opts)
{
    detail::validate_specs(specs);
    if (!(opts.sigma >= 0.0)) throw std::invalid_argument("generate: sigma must be non-negative");
    if (n_samples < 1) throw std::invalid_argument("generate: need at least one sample");

    const std::size_t S = specs.size();
    std::size_t p = 0;
    for (const auto& sub : specs[0].subspaces) p += sub.channels.size();
    std::size_t n = 0;
    std::vector<std::size_t> offsets;
    for (const auto& seg : specs) {
        offsets.push_back(n);
        n += seg.length;
    }
    const auto N = static_cast<Eigen::Index>(n);

    // Fixed variation patterns and coefficient factors.
    std::vector<std::vector<Eigen::MatrixXd>> patterns(S), cov_factor(S);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t l = 0; l < specs[s].subspaces.size(); ++l) {
            const auto& sub = specs[s].subspaces[l];
            auto engine = detail::make_engine(opts.seed, {detail::tag_patterns, s, l});
            patterns[s].push_back(detail::orthonormal_rows(sub.n_patterns, sub.channels.size(), engine));
            Eigen::LLT<Eigen::MatrixXd> llt(sub.coeff_cov);
            if (llt.info() != Eigen::Success) throw std::invalid_argument("generate: coeff_cov is not positive definite");
            cov_factor[s].push_back(llt.matrixL());
        }

    std::vector<Eigen::MatrixXd> noise_factor(S);
    std::vector<Eigen::MatrixXd> segment_gamma(S);
    for (std::size_t s = 0; s < S; ++s) {
        segment_gamma[s] = ar_correlation(specs[s].length, opts.gamma_decay);
        noise_factor[s] = Eigen::LLT<Eigen::MatrixXd>(segment_gamma[s]).matrixL();
    }
    const double noise_scale = opts.sigma / std::sqrt(static_cast<double>(n));

    std::vector<Eigen::MatrixXd> signal(n_samples), observed(n_samples);
    detail::parallel_for(n_samples, [&](std::size_t i) {
        Eigen::MatrixXd x = Eigen::MatrixXd::Zero(N, static_cast<Eigen::Index>(p));
        std::normal_distribution<double> normal;
        for (std::size_t s = 0; s < S; ++s) {
            const auto len = static_cast<Eigen::Index>(specs[s].length);
            for (std::size_t l = 0; l < specs[s].subspaces.size(); ++l) {
                const auto& sub = specs[s].subspaces[l];
                const auto d = sub.basis.columns.cols();
                auto engine = detail::make_engine(opts.seed, {detail::tag_coefficients, i, s, l});
                const Eigen::MatrixXd r = detail::draw_coefficients(cov_factor[s][l], d, engine);
                const Eigen::MatrixXd block = sub.basis.columns * r * patterns[s][l];
                for (std::size_t c = 0; c < sub.channels.size(); ++c)
                    x.col(static_cast<Eigen::Index>(sub.channels[c])).segment(static_cast<Eigen::Index>(offsets[s]), len) =
                        block.col(static_cast<Eigen::Index>(c));
            }
        }
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const double norm = x.col(j).norm();
            if (!(norm > 0.0)) throw std::runtime_error("generate: degenerate zero signal column");
            x.col(j) /= norm;
        }
        Eigen::MatrixXd y = x;
        if (opts.sigma > 0.0) {
            for (std::size_t s = 0; s < S; ++s) {
                const auto len = static_cast<Eigen::Index>(specs[s].length);
                for (std::size_t j = 0; j < p; ++j) {
                    auto engine = detail::make_engine(opts.seed, {detail::tag_noise, i, s, j});
                    normal.reset();  // no cached variate crosses streams
                    Eigen::VectorXd z(len);
                    for (Eigen::Index k = 0; k < len; ++k) z(k) = normal(engine);
                    y.col(static_cast<Eigen::Index>(j)).segment(static_cast<Eigen::Index>(offsets[s]), len) +=
                        noise_scale * (noise_factor[s] * z);
                }
            }
        }
        signal[i] = std::move(x);
        observed[i] = std::move(y);
    }, opts.threads);

    Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(N, N);
    for (std::size_t s = 0; s < S; ++s) {
        const auto len = static_cast<Eigen::Index>(specs[s].length);
        const auto off = static_cast<Eigen::Index>(offsets[s]);
        gamma.block(off, off, len, len) = segment_gamma[s];
    }

    GroundTruth truth{
        .change_points = {},
        .assignment = {},
        .bases = {},
        .signal = std::move(signal),
        .noise = NoiseModel::shared(p, opts.sigma, gamma),
    };
    for (std::size_t s = 0; s < S; ++s) {
        if (s > 0) truth.change_points.push_back(offsets[s]);
        std::vector<std::size_t> assign(p, 0);
        std::vector<Eigen::MatrixXd> bases;
        for (std::size_t l = 0; l < specs[s].subspaces.size(); ++l) {
            for (auto j : specs[s].subspaces[l].channels) assign[j] = l;
            bases.push_back(specs[s].subspaces[l].basis.columns);
        }
        truth.assignment.push_back(std::move(assign));
        truth.bases.push_back(std::move(bases));
    }
    return {FunctionalDataset(std::move(observed)), std::move(truth)};
}

/// Subspace of `width` functions from one of the preset families,
/// orthogonalized.
inline BasisMatrix preset_basis(BasisFamily family, std::size_t n_points, std::size_t width = 3)
{
    switch (family) {
    case BasisFamily::bspline: {
        // 1st, 4th, 7th, ... functions of order 3.
        std::vector<std::size_t> sel;
        for (std::size_t q = 0; q < width; ++q) sel.push_back(3 * q);
        return orthogonalize(bspline_basis(n_points, 3, sel));
    }
    case BasisFamily::fourier: return orthogonalize(fourier_basis(n_points, width));
    case BasisFamily::wavelet: return orthogonalize(wavelet_basis(n_points, width, WaveletFamily::daubechies4));
    }
    throw std::invalid_argument("preset_basis: unknown family");
}

/// Segments sharing one channel layout: `families[l]` for channel block l of
/// `channels_per_subspace` consecutive channels, d = 3, m = 2,
/// coefficient covariance 0.5^|u-v|.
inline std::vector<SegmentSpec> preset_segments(const std::vector<std::size_t>& lengths,
                                                const std::vector<BasisFamily>& families,
                                                std::size_t channels_per_subspace = 4)
{
    std::vector<SegmentSpec> specs;
    for (auto len : lengths) {
        SegmentSpec seg{.length = len, .subspaces = {}};
        for (std::size_t l = 0; l < families.size(); ++l) {
            SubspaceSpec sub;
            sub.basis = preset_basis(families[l], len, 3);
            for (std::size_t c = 0; c < channels_per_subspace; ++c) sub.channels.push_back(l * channels_per_subspace + c);
            sub.n_patterns = 2;
            sub.coeff_cov = ar_covariance(2, 0.5);
            seg.subspaces.push_back(std::move(sub));
        }
        specs.push_back(std::move(seg));
    }
    return specs;
}

/// Two segments of 20 points (change at index 20, the 21st point); channels
/// 0-3 B-spline, 4-7 Fourier.
inline std::pair<FunctionalDataset, GroundTruth>
model_I(std::size_t n_samples, double sigma, std::uint64_t seed, std::size_t channels_per_subspace = 4)
{
    SimulationOptions opts;
    opts.sigma = sigma;
    opts.seed = seed;
    return generate(preset_segments({20, 20}, {BasisFamily::bspline, BasisFamily::fourier}, channels_per_subspace),
                    n_samples, opts);
}

/// Segments of 32, 32 and 64 points (changes at indices 32 and 64); channels
/// 0-3 B-spline, 4-7 Fourier, 8-11 wavelet.
inline std::pair<FunctionalDataset, GroundTruth>
model_II(std::size_t n_samples, double sigma, std::uint64_t seed, std::size_t channels_per_subspace = 4)
{
    SimulationOptions opts;
    opts.sigma = sigma;
    opts.seed = seed;
    return generate(preset_segments({32, 32, 64}, {BasisFamily::bspline, BasisFamily::fourier, BasisFamily::wavelet},
                                    channels_per_subspace),
                    n_samples, opts);
}

} // namespace dfsl
