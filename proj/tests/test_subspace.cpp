#include <functional>
#include <random>

#include <gtest/gtest.h>

#include <dfsl/simulate.hpp>
#include <dfsl/subspace.hpp>
#include <dfsl/tuning.hpp>

#include "oracles.hpp"

using namespace dfsl;

namespace {

Eigen::MatrixXd block_affinity(const std::vector<std::size_t>& labels, double in, double cross, double noise, std::uint64_t seed)
{
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto p = static_cast<Eigen::Index>(labels.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index r = j + 1; r < p; ++r) {
            const bool same = labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(r)];
            a(j, r) = a(r, j) = (same ? in : cross) + noise * u(eng);
        }
    return a;
}

double normalized_cut(const Eigen::MatrixXd& a, const std::vector<std::size_t>& labels, std::size_t k)
{
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        double cut = 0.0, vol = 0.0;
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (labels[j] != c) continue;
            for (std::size_t r = 0; r < labels.size(); ++r) {
                const double w = a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(r));
                vol += w;
                if (labels[r] != c) cut += w;
            }
        }
        total += cut / vol;
    }
    return total;
}

/// Exhaustive minimum normalized cut over all partitions into exactly k blocks.
std::vector<std::size_t> brute_force_ncut(const Eigen::MatrixXd& a, std::size_t k)
{
    const auto p = static_cast<std::size_t>(a.rows());
    std::vector<std::size_t> labels(p, 0), best;
    double best_value = std::numeric_limits<double>::infinity();
    // Restricted growth strings enumerate each set partition once.
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t pos, std::size_t used) {
        if (pos == p) {
            if (used != k) return;
            const double v = normalized_cut(a, labels, k);
            if (v < best_value) {
                best_value = v;
                best = labels;
            }
            return;
        }
        for (std::size_t c = 0; c <= std::min(used, k - 1); ++c) {
            labels[pos] = c;
            rec(pos + 1, std::max(used, c + 1));
        }
    };
    rec(0, 0);
    return best;
}

CoefficientPath block_path(std::size_t p, std::size_t n, const std::vector<std::size_t>& labels)
{
    std::vector<Eigen::MatrixXd> slices;
    for (std::size_t j = 0; j < p; ++j) {
        Eigen::MatrixXd s = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n));
        for (std::size_t r = 0; r < p; ++r)
            if (r != j && labels[r] == labels[j]) s.row(static_cast<Eigen::Index>(r)).setConstant(0.3 + 0.01 * static_cast<double>(r + j));
        slices.push_back(std::move(s));
    }
    return CoefficientPath(std::move(slices));
}

Eigen::MatrixXd random_orthogonal(Eigen::Index d, std::uint64_t seed)
{
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> normal;
    const Eigen::MatrixXd g = Eigen::MatrixXd::NullaryExpr(d, d, [&] { return normal(eng); });
    return Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
}

} // namespace

TEST(Affinity, BlockSupportGivesBlockAffinity)
{
    const std::vector<std::size_t> labels{0, 0, 0, 1, 1, 1};
    const auto a = segment_affinity(block_path(6, 10, labels), 0, 10);
    for (Eigen::Index j = 0; j < 6; ++j) {
        EXPECT_EQ(a(j, j), 0.0);
        for (Eigen::Index r = 0; r < 6; ++r) {
            EXPECT_EQ(a(j, r), a(r, j));
            if (labels[static_cast<std::size_t>(j)] != labels[static_cast<std::size_t>(r)]) {
                EXPECT_EQ(a(j, r), 0.0);
            } else if (j != r) {
                EXPECT_GT(a(j, r), 0.0);
            }
        }
    }
    EXPECT_THROW(segment_affinity(block_path(6, 10, labels), 4, 4), std::invalid_argument);
}

TEST(Affinity, UsesSegmentMean)
{
    CoefficientPath path(2, 4);
    Eigen::MatrixXd s(2, 4);
    s << 0, 0, 0, 0, 1, -3, 0, 0;
    path.set_slice(0, s);
    const auto a = segment_affinity(path, 0, 2);
    EXPECT_DOUBLE_EQ(a(0, 1), 2.0);
}

TEST(Spectral, ExactBlocks)
{
    const std::vector<std::size_t> labels{0, 0, 0, 0, 1, 1, 1, 1};
    const auto res = spectral_cluster(block_affinity(labels, 1.0, 0.0, 0.0, 1), 2);
    EXPECT_EQ(res.assignment, labels);
    EXPECT_EQ(res.n_clusters, 2u);
    EXPECT_FALSE(res.warning);
}

TEST(Spectral, ScalingInvariant)
{
    const std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2, 0, 1, 2};
    const auto a = block_affinity(labels, 0.6, 0.1, 0.3, 3);
    EXPECT_EQ(spectral_cluster(a, 3, 5).assignment, spectral_cluster(7.5 * a, 3, 5).assignment);
}

TEST(Spectral, MatchesBruteForceNormalizedCut)
{
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const std::vector<std::size_t> labels{0, 0, 1, 1, 2, 2};
        const auto a = block_affinity(labels, 0.8, 0.05, 0.3, seed);
        const auto ref = brute_force_ncut(a, 3);
        EXPECT_DOUBLE_EQ(adjusted_rand_index(spectral_cluster(a, 3, seed).assignment, ref), 1.0) << "seed " << seed;
    }
}

TEST(Spectral, DisconnectedWithTooFewClustersWarns)
{
    const std::vector<std::size_t> labels{0, 0, 1, 1, 2, 2};
    const auto res = spectral_cluster(block_affinity(labels, 1.0, 0.0, 0.0, 1), 2);
    EXPECT_TRUE(res.warning);
    EXPECT_EQ(res.assignment.size(), 6u);
}

TEST(Spectral, RejectsBadInput)
{
    EXPECT_THROW(spectral_cluster(Eigen::MatrixXd::Ones(3, 3), 4), std::invalid_argument);
    EXPECT_THROW(spectral_cluster(-Eigen::MatrixXd::Ones(3, 3), 2), std::invalid_argument);
}

TEST(KMeans, DeterministicGivenSeed)
{
    std::mt19937_64 eng(2);
    std::normal_distribution<double> normal;
    const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(30, 2, [&] { return normal(eng); });
    EXPECT_EQ(kmeans(x, 3, 11), kmeans(x, 3, 11));
}

TEST(Hierarchical, ThresholdLimits)
{
    const auto a = block_affinity({0, 0, 1, 1, 1}, 1.0, 0.1, 0.2, 4);
    EXPECT_EQ(hierarchical_cluster(a, 1e-9).n_clusters, 5u);
    EXPECT_EQ(hierarchical_cluster(a, 1e12).n_clusters, 1u);
    EXPECT_THROW(hierarchical_cluster(a, 0.0), std::invalid_argument);
}

TEST(Hierarchical, GapInstance)
{
    // In-block affinity in [1, 1.2] gives d <= 1; cross affinity in [0.1, 0.3] gives d >= 3.3.
    const std::vector<std::size_t> labels{0, 1, 0, 1, 0, 1};
    const auto a = block_affinity(labels, 1.0, 0.1, 0.2, 6);
    for (double thr : {1.01, 1.4, 3.0}) EXPECT_EQ(hierarchical_cluster(a, thr).assignment, labels) << thr;
}

TEST(Hierarchical, VectorModeWithGroups)
{
    const std::vector<std::size_t> labels{0, 0, 0, 1, 1, 1};
    const auto path = block_path(6, 8, labels);
    const auto plain = hierarchical_cluster_vectors(path, 0, 8, 0.01);
    EXPECT_EQ(plain.n_clusters, 6u);
    const auto grouped = hierarchical_cluster_vectors(path, 0, 8, 0.01, {{0, 1, 2}, {3, 4, 5}});
    EXPECT_EQ(grouped.assignment, labels);
    EXPECT_THROW(hierarchical_cluster_vectors(path, 0, 8, 0.01, {{0, 1}, {1, 2, 3, 4, 5}}), std::invalid_argument);
}

TEST(Mfpca, RankOneRecoversSingularPair)
{
    std::mt19937_64 eng(5);
    std::normal_distribution<double> normal;
    const Eigen::VectorXd phi = Eigen::VectorXd::NullaryExpr(16, [&] { return normal(eng); }).normalized();
    std::vector<Eigen::MatrixXd> seg;
    std::vector<Eigen::VectorXd> scores;
    for (int i = 0; i < 12; ++i) {
        const Eigen::VectorXd a = Eigen::VectorXd::NullaryExpr(3, [&] { return normal(eng); });
        seg.push_back(phi * a.transpose());
        scores.push_back(a);
    }
    MfpcaOptions opts;
    opts.lambda3 = 0.0;
    const auto res = smooth_mfpca(seg, opts);
    ASSERT_EQ(res.n_components(), 1u);
    // Dense SVD of the stacked curves gives the same leading direction.
    Eigen::MatrixXd stacked(16, 36);
    for (int i = 0; i < 12; ++i) stacked.middleCols(3 * i, 3) = seg[static_cast<std::size_t>(i)];
    const Eigen::VectorXd u = Eigen::JacobiSVD<Eigen::MatrixXd>(stacked, Eigen::ComputeThinU).matrixU().col(0);
    const double sign = res.basis.col(0).dot(u) > 0 ? 1.0 : -1.0;
    EXPECT_LT((res.basis.col(0) - sign * u).norm(), 1e-10);
    const double sphi = res.basis.col(0).dot(phi) > 0 ? 1.0 : -1.0;
    for (int i = 0; i < 12; ++i)
        EXPECT_LT((res.scores[static_cast<std::size_t>(i)].col(0) - sphi * scores[static_cast<std::size_t>(i)]).norm(), 1e-10);
    EXPECT_TRUE(res.converged);
}

TEST(Mfpca, HeavySmoothingGivesConstantComponent)
{
    std::mt19937_64 eng(6);
    std::normal_distribution<double> normal;
    std::vector<Eigen::MatrixXd> seg;
    for (int i = 0; i < 20; ++i) seg.push_back(Eigen::MatrixXd::NullaryExpr(12, 2, [&] { return 1.0 + normal(eng); }));
    MfpcaOptions opts;
    opts.lambda3 = 1e8;
    const auto res = smooth_mfpca(seg, opts);
    const Eigen::VectorXd flat = Eigen::VectorXd::Constant(12, 1.0 / std::sqrt(12.0));
    EXPECT_LT((res.basis.col(0) - flat).norm(), 1e-4);
}

TEST(Mfpca, ConstraintsAndBookkeeping)
{
    const auto [data, truth] = model_II(50, 0.05, 2);
    for (double lambda3 : {0.0, 1.0, 10.0}) {
        MfpcaOptions opts;
        opts.lambda3 = lambda3;
        const auto res = smooth_mfpca(data.window(64, 128, std::vector<std::size_t>{8, 9, 10, 11}).samples(), opts);
        const auto d = static_cast<Eigen::Index>(res.n_components());
        ASSERT_GE(d, 1);
        EXPECT_LT((res.basis.transpose() * res.basis - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff(), 1e-8);
        double cumulative = 0.0;
        for (double e : res.explained) {
            EXPECT_GE(e, 0.0);
            cumulative += e;
        }
        EXPECT_LE(cumulative, res.total_variance * (1.0 + 1e-12));
        EXPECT_GE(cumulative, 0.95 * res.total_variance);
        for (Eigen::Index q = 0; q < d; ++q) {
            Eigen::Index arg = 0;
            res.basis.col(q).cwiseAbs().maxCoeff(&arg);
            EXPECT_GT(res.basis(arg, q), 0.0);
        }
        EXPECT_EQ(res.scores.size(), 50u);
        EXPECT_EQ(res.scores[0].rows(), 4);
    }
}

TEST(Mfpca, RejectsBadOptions)
{
    std::vector<Eigen::MatrixXd> seg{Eigen::MatrixXd::Ones(4, 2)};
    MfpcaOptions bad;
    bad.variance_target = 0.0;
    EXPECT_THROW(smooth_mfpca(seg, bad), std::invalid_argument);
    bad.variance_target = 0.9;
    bad.lambda3 = -1.0;
    EXPECT_THROW(smooth_mfpca(seg, bad), std::invalid_argument);
    EXPECT_THROW(smooth_mfpca({}, {}), std::invalid_argument);
}

TEST(Procrustes, IdentityAndExactRotation)
{
    const Eigen::MatrixXd phi = orthogonalize(fourier_basis(20, 3)).columns;
    const auto same = procrustes_align(phi, phi);
    EXPECT_LT((same.rotation - Eigen::MatrixXd::Identity(3, 3)).norm(), 1e-12);
    EXPECT_LT(same.error, 1e-12);
    const Eigen::MatrixXd q = random_orthogonal(3, 9);
    const auto rot = procrustes_align(phi * q.transpose(), phi);
    EXPECT_LT(rot.error, 1e-10);
    EXPECT_LT((rot.rotation.transpose() * rot.rotation - Eigen::MatrixXd::Identity(3, 3)).norm(), 1e-10);
    EXPECT_THROW(procrustes_align(phi, phi.leftCols(2)), std::invalid_argument);
}

TEST(Procrustes, MatchesRotationManifoldDescent)
{
    std::mt19937_64 eng(10);
    std::normal_distribution<double> normal;
    const Eigen::MatrixXd phi = orthogonalize(bspline_basis(20, 3, {0, 3, 6})).columns;
    for (std::uint64_t t = 0; t < 5; ++t) {
        BasisMatrix noisy;
        noisy.columns = phi * random_orthogonal(3, 20 + t) + 0.1 * Eigen::MatrixXd::NullaryExpr(20, 3, [&] { return normal(eng); });
        const Eigen::MatrixXd est = orthogonalize(noisy).columns;
        EXPECT_NEAR(procrustes_align(est, phi).error, oracle::procrustes_descent(est, phi), 1e-6);
    }
}

TEST(Procrustes, CommonRotationInvariance)
{
    std::mt19937_64 eng(12);
    std::normal_distribution<double> normal;
    const Eigen::MatrixXd phi = orthogonalize(fourier_basis(24, 3)).columns;
    BasisMatrix noisy;
    noisy.columns = phi + 0.2 * Eigen::MatrixXd::NullaryExpr(24, 3, [&] { return normal(eng); });
    const Eigen::MatrixXd est = orthogonalize(noisy).columns;
    const Eigen::MatrixXd q = random_orthogonal(3, 13);
    EXPECT_NEAR(procrustes_align(est * q, phi * q).error, procrustes_align(est, phi).error, 1e-12);
}

TEST(SubspaceAffinity, IdentityOrthogonalAndGolden)
{
    const Eigen::MatrixXd w = wavelet_basis(16, 6, WaveletFamily::haar).columns;
    EXPECT_NEAR(subspace_affinity(w.leftCols(3), w.leftCols(3)).value, std::sqrt(3.0), 1e-12);
    EXPECT_NEAR(subspace_affinity(w.leftCols(3), w.rightCols(3)).value, 0.0, 1e-12);
    // Reference values from an independent numpy computation.
    const double golden32 = 0.6751543668221869, golden64 = 0.522403806011829;
    const auto a32 = subspace_affinity(preset_basis(BasisFamily::bspline, 32).columns, preset_basis(BasisFamily::fourier, 32).columns);
    const auto a64 = subspace_affinity(preset_basis(BasisFamily::bspline, 64).columns, preset_basis(BasisFamily::fourier, 64).columns);
    EXPECT_NEAR(a32.value, golden32, 1e-10);
    EXPECT_NEAR(a64.value, golden64, 1e-10);
    EXPECT_NEAR(a32.normalized, golden32 / std::sqrt(3.0), 1e-10);
}

TEST(Ari, KnownValues)
{
    EXPECT_NEAR(adjusted_rand_index({0, 0, 1, 1}, {0, 0, 1, 2}), 0.5714285714285715, 1e-12);
    EXPECT_NEAR(adjusted_rand_index({0, 0, 1, 1}, {1, 1, 0, 0}), 1.0, 1e-15);
    EXPECT_NEAR(adjusted_rand_index({0, 0, 0, 0}, {0, 1, 2, 3}), 0.0, 1e-15);
}

TEST(Segments, FromChangePoints)
{
    EXPECT_EQ(segments_from({}, 10), (std::vector<std::pair<std::size_t, std::size_t>>{{0, 10}}));
    EXPECT_EQ(segments_from({3, 7}, 10), (std::vector<std::pair<std::size_t, std::size_t>>{{0, 3}, {3, 7}, {7, 10}}));
    EXPECT_THROW(segments_from({7, 3}, 10), std::invalid_argument);
    EXPECT_THROW(segments_from({0}, 10), std::invalid_argument);
}

TEST(Infer, SingleSegmentCoversGrid)
{
    const std::vector<std::size_t> labels{0, 0, 0, 1, 1, 1};
    const auto data = oracle::random_dataset(10, 8, 6, 3);
    const auto model = infer(block_path(6, 8, labels), {}, data, {});
    ASSERT_EQ(model.segments.size(), 1u);
    EXPECT_EQ(model.segments[0].lo, 0u);
    EXPECT_EQ(model.segments[0].hi, 8u);
    EXPECT_EQ(model.segments[0].assignment, labels);
    ASSERT_EQ(model.segments[0].clusters.size(), 2u);
    EXPECT_EQ(model.segments[0].clusters[1].channels, (std::vector<std::size_t>{3, 4, 5}));
}

TEST(Infer, ModelIWithTrueChangePoint)
{
    const auto [data, truth] = model_I(500, 0.05, 1);
    const auto fit = select(data).best_fit;
    const Eigen::MatrixXd a = segment_affinity(fit.path, 0, 20);
    double in = 0.0, off = 0.0;
    for (Eigen::Index j = 0; j < 8; ++j)
        for (Eigen::Index r = 0; r < 8; ++r) ((j < 4) == (r < 4) ? in : off) += a(j, r);
    EXPECT_LT(off / in, 0.05);
    const auto model = infer(fit.path, truth.change_points, data, {});
    ASSERT_EQ(model.segments.size(), 2u);
    for (std::size_t s = 0; s < 2; ++s) EXPECT_DOUBLE_EQ(adjusted_rand_index(model.segments[s].assignment, truth.assignment[s]), 1.0);
}

TEST(Infer, ModelIIThreeSegmentsThreeClusters)
{
    const auto [data, truth] = model_II(500, 0.05, 1);
    const auto fit = select(data).best_fit;
    ClusteringConfig cfg;
    cfg.k = 3;
    const auto model = infer(fit.path, truth.change_points, data, cfg);
    ASSERT_EQ(model.segments.size(), 3u);
    for (std::size_t s = 0; s < 3; ++s) {
        EXPECT_EQ(model.segments[s].clusters.size(), 3u);
        EXPECT_DOUBLE_EQ(adjusted_rand_index(model.segments[s].assignment, truth.assignment[s]), 1.0) << "segment " << s;
    }
}
