#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dataset.hpp"
#include "detail/parallel.hpp"
#include "detail/rng.hpp"
#include "solver.hpp"

namespace dfsl {

/// A = Bbar + Bbar' with Bbar_jr = mean_{k in [lo, hi)} |b_jr(t_k)|; zero diagonal.
inline Eigen::MatrixXd segment_affinity(const CoefficientPath& path, std::size_t lo, std::size_t hi)
{
    const Eigen::MatrixXd bbar = path.mean_abs(lo, hi);
    const auto p = bbar.rows();
    Eigen::MatrixXd a(p, p);
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index r = 0; r < p; ++r) a(j, r) = j == r ? 0.0 : bbar(j, r) + bbar(r, j);
    return a;
}

namespace detail {

inline void check_affinity(const Eigen::MatrixXd& a)
{
    if (a.rows() != a.cols() || a.rows() == 0) throw std::invalid_argument("affinity must be a non-empty square matrix");
    if (!a.allFinite() || (a.array() < 0.0).any()) throw std::invalid_argument("affinity must be finite and non-negative");
}

/// Relabels so cluster ids are 0, 1, ... in order of first appearance.
inline std::vector<std::size_t> canonical_labels(const std::vector<std::size_t>& labels)
{
    std::map<std::size_t, std::size_t> remap;
    std::vector<std::size_t> out;
    out.reserve(labels.size());
    for (auto l : labels) {
        auto it = remap.find(l);
        if (it == remap.end()) it = remap.emplace(l, remap.size()).first;
        out.push_back(it->second);
    }
    return out;
}

inline std::size_t connected_components(const Eigen::MatrixXd& a)
{
    const auto p = static_cast<std::size_t>(a.rows());
    std::vector<char> seen(p, 0);
    std::size_t count = 0;
    for (std::size_t s = 0; s < p; ++s) {
        if (seen[s]) continue;
        ++count;
        std::vector<std::size_t> stack{s};
        seen[s] = 1;
        while (!stack.empty()) {
            const auto u = stack.back();
            stack.pop_back();
            for (std::size_t v = 0; v < p; ++v)
                if (!seen[v] && v != u && a(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) > 0.0) {
                    seen[v] = 1;
                    stack.push_back(v);
                }
        }
    }
    return count;
}

struct KMeansResult
{
    std::vector<std::size_t> labels;
    double inertia = std::numeric_limits<double>::infinity();
};

/// Lloyd iterations from a k-means++ start; ties go to the lowest center.
inline KMeansResult kmeans_once(const Eigen::MatrixXd& x, std::size_t k, Engine& engine)
{
    const auto rows = x.rows();
    const auto kk = static_cast<Eigen::Index>(k);
    Eigen::MatrixXd centers(kk, x.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, rows - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    centers.row(0) = x.row(pick(engine));
    Eigen::VectorXd d2(rows);
    for (Eigen::Index c = 1; c < kk; ++c) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (Eigen::Index m = 0; m < c; ++m) best = std::min(best, (x.row(i) - centers.row(m)).squaredNorm());
            d2(i) = best;
        }
        const double total = d2.sum();
        Eigen::Index chosen = rows - 1;
        if (total > 0.0) {
            const double u = unit(engine) * total;
            double acc = 0.0;
            for (Eigen::Index i = 0; i < rows; ++i) {
                acc += d2(i);
                if (u < acc) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = pick(engine);
        }
        centers.row(c) = x.row(chosen);
    }

    KMeansResult res;
    res.labels.assign(static_cast<std::size_t>(rows), k);
    for (int iter = 0; iter < 300; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < rows; ++i) {
            std::size_t best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (Eigen::Index m = 0; m < kk; ++m) {
                const double d = (x.row(i) - centers.row(m)).squaredNorm();
                if (d < bd) {
                    bd = d;
                    best = static_cast<std::size_t>(m);
                }
            }
            inertia += bd;
            if (res.labels[static_cast<std::size_t>(i)] != best) {
                res.labels[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        res.inertia = inertia;
        if (!changed) break;
        for (Eigen::Index m = 0; m < kk; ++m) {
            Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(x.cols());
            std::size_t count = 0;
            for (Eigen::Index i = 0; i < rows; ++i)
                if (res.labels[static_cast<std::size_t>(i)] == static_cast<std::size_t>(m)) {
                    sum += x.row(i);
                    ++count;
                }
            if (count) centers.row(m) = sum / static_cast<double>(count);
        }
    }
    return res;
}

} // namespace detail

/// Best-inertia k-means over seeded k-means++ restarts.
inline std::vector<std::size_t> kmeans(const Eigen::MatrixXd& x, std::size_t k, std::uint64_t seed, std::size_t restarts = 20)
{
    if (k < 1 || k > static_cast<std::size_t>(x.rows())) throw std::invalid_argument("kmeans: need 1 <= k <= number of points");
    detail::KMeansResult best;
    for (std::size_t r = 0; r < restarts; ++r) {
        auto engine = detail::make_engine(seed, {detail::tag_kmeans, r});
        auto res = detail::kmeans_once(x, k, engine);
        if (res.inertia < best.inertia) best = std::move(res);
    }
    return best.labels;
}

struct ClusterResult
{
    std::vector<std::size_t> assignment;  // 0-based contiguous cluster ids
    std::size_t n_clusters = 0;
    bool warning = false;                 // more connected components than clusters
};

/**
 * Ng-Jordan-Weiss spectral clustering: D^{-1/2} A D^{-1/2}, its k leading
 * eigenvectors with rows normalized to unit length, then k-means with 20
 * seeded restarts. Isolated channels get zero rows.
 */
inline ClusterResult spectral_cluster(const Eigen::MatrixXd& affinity, std::size_t k, std::uint64_t seed = 1)
{
    detail::check_affinity(affinity);
    const auto p = affinity.rows();
    if (k < 1 || k > static_cast<std::size_t>(p)) throw std::invalid_argument("spectral_cluster: need 1 <= k <= p");
    Eigen::MatrixXd a = affinity;
    a.diagonal().setZero();
    Eigen::VectorXd dinv(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double deg = a.row(j).sum();
        dinv(j) = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
    }
    const Eigen::MatrixXd m = dinv.asDiagonal() * a * dinv.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    if (es.info() != Eigen::Success) throw std::runtime_error("spectral_cluster: eigendecomposition failed");
    const auto kk = static_cast<Eigen::Index>(k);
    Eigen::MatrixXd u = es.eigenvectors().rightCols(kk);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double norm = u.row(j).norm();
        if (norm > 0.0) u.row(j) /= norm;
    }
    ClusterResult out;
    out.assignment = detail::canonical_labels(kmeans(u, k, seed));
    out.n_clusters = *std::max_element(out.assignment.begin(), out.assignment.end()) + 1;
    out.warning = detail::connected_components(a) > k;
    return out;
}

/**
 * Complete-linkage agglomeration on a dissimilarity matrix: repeatedly merge
 * the closest pair of clusters (lowest indices on ties) while their
 * complete-linkage distance is <= max_within_distance.
 */
inline ClusterResult complete_linkage(const Eigen::MatrixXd& distance, double max_within_distance)
{
    if (!(max_within_distance > 0.0)) throw std::invalid_argument("hierarchical clustering: threshold must be > 0");
    const auto p = static_cast<std::size_t>(distance.rows());
    std::vector<std::vector<std::size_t>> clusters;
    for (std::size_t j = 0; j < p; ++j) clusters.push_back({j});
    auto linkage = [&](const std::vector<std::size_t>& x, const std::vector<std::size_t>& y) {
        double worst = 0.0;
        for (auto u : x)
            for (auto v : y) worst = std::max(worst, distance(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)));
        return worst;
    };
    while (clusters.size() > 1) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < clusters.size(); ++i)
            for (std::size_t j = i + 1; j < clusters.size(); ++j) {
                const double d = linkage(clusters[i], clusters[j]);
                if (d < best) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        if (!(best <= max_within_distance)) break;
        clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(), clusters[bj].end());
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
    }
    std::vector<std::size_t> labels(p);
    for (std::size_t c = 0; c < clusters.size(); ++c)
        for (auto j : clusters[c]) labels[j] = c;
    ClusterResult out;
    out.assignment = detail::canonical_labels(labels);
    out.n_clusters = clusters.size();
    return out;
}

/// Complete linkage on d_jr = 1 / (1e-6 + A_jr).
inline ClusterResult hierarchical_cluster(const Eigen::MatrixXd& affinity, double max_within_distance)
{
    detail::check_affinity(affinity);
    Eigen::MatrixXd d = (affinity.array() + 1e-6).inverse().matrix();
    d.diagonal().setZero();
    return complete_linkage(d, max_within_distance);
}

/**
 * Complete linkage on Euclidean distances between segment-averaged
 * coefficient vectors bbar_j. With `groups`, vectors of each group are
 * averaged first and every member channel inherits the group's cluster.
 */
inline ClusterResult hierarchical_cluster_vectors(const CoefficientPath& path, std::size_t lo, std::size_t hi,
                                                  double max_within_distance,
                                                  const std::vector<std::vector<std::size_t>>& groups = {})
{
    const std::size_t p = path.n_channels();
    if (lo >= hi || hi > path.n_times()) throw std::invalid_argument("hierarchical_cluster_vectors: empty or out-of-range segment");
    Eigen::MatrixXd bbar(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    for (std::size_t j = 0; j < p; ++j)
        bbar.row(static_cast<Eigen::Index>(j)) =
            path.slice(j).middleCols(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo)).rowwise().mean().transpose();

    std::vector<std::vector<std::size_t>> units = groups;
    if (units.empty())
        for (std::size_t j = 0; j < p; ++j) units.push_back({j});
    std::vector<int> owner(p, -1);
    for (std::size_t g = 0; g < units.size(); ++g)
        for (auto j : units[g]) {
            if (j >= p || owner[j] != -1) throw std::invalid_argument("channel groups must partition the channels");
            owner[j] = static_cast<int>(g);
        }
    if (std::find(owner.begin(), owner.end(), -1) != owner.end()) throw std::invalid_argument("channel groups must partition the channels");

    const auto g = static_cast<Eigen::Index>(units.size());
    Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(g, static_cast<Eigen::Index>(p));
    for (Eigen::Index u = 0; u < g; ++u) {
        for (auto j : units[static_cast<std::size_t>(u)]) pooled.row(u) += bbar.row(static_cast<Eigen::Index>(j));
        pooled.row(u) /= static_cast<double>(units[static_cast<std::size_t>(u)].size());
    }
    Eigen::MatrixXd d(g, g);
    for (Eigen::Index u = 0; u < g; ++u)
        for (Eigen::Index v = 0; v < g; ++v) d(u, v) = (pooled.row(u) - pooled.row(v)).norm();
    const ClusterResult by_group = complete_linkage(d, max_within_distance);
    std::vector<std::size_t> labels(p);
    for (std::size_t j = 0; j < p; ++j) labels[j] = by_group.assignment[static_cast<std::size_t>(owner[j])];
    ClusterResult out;
    out.assignment = detail::canonical_labels(labels);
    out.n_clusters = by_group.n_clusters;
    return out;
}

// ---------------------------------------------------------------------------
// Smooth multichannel functional PCA

struct MfpcaOptions
{
    double lambda3 = 1.0;
    double variance_target = 0.95;
    std::size_t max_sweeps = 10000;
    double tol = 1e-12;   // squared change of the basis vector between sweeps
};

struct MfpcaResult
{
    Eigen::MatrixXd basis;                  // n_s x d, orthonormal
    std::vector<Eigen::MatrixXd> scores;    // per sample, p_l x d
    std::vector<double> explained;          // per component
    double total_variance = 0.0;
    std::size_t n_components() const { return static_cast<std::size_t>(basis.cols()); }
    bool converged = true;
};

/// Second-difference operator D'D of the first-difference matrix D.
inline Eigen::MatrixXd difference_gram(Eigen::Index n)
{
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index k = 1; k < n; ++k) {
        g(k, k) += 1.0;
        g(k - 1, k - 1) += 1.0;
        g(k, k - 1) -= 1.0;
        g(k - 1, k) -= 1.0;
    }
    return g;
}

namespace detail {

inline void fix_sign(Eigen::Ref<Eigen::VectorXd> v)
{
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
}

} // namespace detail

/**
 * Sequential penalized rank-one extraction. With C the Gram matrix of all
 * (sample, channel) curves in the segment, each component iterates
 * phi <- normalize((I + lambda3 D'D)^{-1} C_q phi) (orthogonalized against
 * earlier components) from the leading eigenvector of C_q, then deflates
 * C_{q+1} = (I - phi phi') C_q (I - phi phi'). Stops once the cumulative
 * explained variance phi' C_q phi reaches variance_target * trace(C).
 * Uncentered. Each column's largest-magnitude entry is positive.
 */
inline MfpcaResult smooth_mfpca(const std::vector<Eigen::MatrixXd>& segment, const MfpcaOptions& opts = {})
{
    if (segment.empty() || segment.front().size() == 0) throw std::invalid_argument("smooth_mfpca: empty segment");
    if (!(opts.lambda3 >= 0.0) || !std::isfinite(opts.lambda3)) throw std::invalid_argument("smooth_mfpca: lambda3 must be finite and >= 0");
    if (!(opts.variance_target > 0.0 && opts.variance_target <= 1.0)) throw std::invalid_argument("smooth_mfpca: variance_target must lie in (0, 1]");
    const auto ns = segment.front().rows();
    const auto pl = segment.front().cols();
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(ns, ns);
    for (const auto& y : segment) {
        if (y.rows() != ns || y.cols() != pl) throw std::invalid_argument("smooth_mfpca: samples differ in shape");
        c.selfadjointView<Eigen::Lower>().rankUpdate(y);
    }
    c.triangularView<Eigen::StrictlyUpper>() = c.transpose();

    MfpcaResult res;
    res.total_variance = c.trace();
    const Eigen::LLT<Eigen::MatrixXd> smoother(Eigen::MatrixXd::Identity(ns, ns) + opts.lambda3 * difference_gram(ns));
    std::vector<Eigen::VectorXd> phis;
    double cumulative = 0.0;
    while (static_cast<Eigen::Index>(phis.size()) < ns && res.total_variance > 0.0 &&
           cumulative < opts.variance_target * res.total_variance) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
        Eigen::VectorXd phi = es.eigenvectors().col(ns - 1);
        auto orthogonalize = [&](Eigen::VectorXd& v) {
            for (int pass = 0; pass < 2; ++pass)
                for (const auto& prev : phis) v -= prev.dot(v) * prev;
        };
        orthogonalize(phi);
        if (!(phi.norm() > 0.0)) break;
        phi.normalize();
        bool converged = false;
        for (std::size_t sweep = 0; sweep < opts.max_sweeps; ++sweep) {
            Eigen::VectorXd next = smoother.solve(c * phi);
            orthogonalize(next);
            const double norm = next.norm();
            if (!(norm > 0.0)) break;
            next /= norm;
            if (next.dot(phi) < 0.0) next = -next;
            const double change = (next - phi).squaredNorm();
            phi = std::move(next);
            if (change <= opts.tol) {
                converged = true;
                break;
            }
        }
        if (!converged) res.converged = false;
        detail::fix_sign(phi);
        const double explained = phi.dot(c * phi);
        if (!(explained > 1e-14 * res.total_variance)) break;
        res.explained.push_back(explained);
        cumulative += explained;
        phis.push_back(phi);
        const Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(ns, ns) - phi * phi.transpose();
        c = proj * c * proj;
        c = 0.5 * (c + c.transpose());
    }

    res.basis.resize(ns, static_cast<Eigen::Index>(phis.size()));
    for (std::size_t q = 0; q < phis.size(); ++q) res.basis.col(static_cast<Eigen::Index>(q)) = phis[q];
    res.scores.reserve(segment.size());
    for (const auto& y : segment) res.scores.push_back(y.transpose() * res.basis);
    return res;
}

// ---------------------------------------------------------------------------
// Evaluation helpers

struct ProcrustesResult
{
    Eigen::MatrixXd rotation;   // d x d orthogonal
    Eigen::MatrixXd aligned;    // estimated * rotation
    double error = 0.0;         // ||aligned - truth||_F
};

/**
 * Orthogonal R minimizing ||estimated R - truth||_F: R = U V' from the SVD
 * of estimated' truth.
 */
inline ProcrustesResult procrustes_align(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth)
{
    if (estimated.rows() != truth.rows() || estimated.cols() != truth.cols())
        throw std::invalid_argument("procrustes_align: shape mismatch (" + std::to_string(estimated.rows()) + "x" +
                                    std::to_string(estimated.cols()) + " vs " + std::to_string(truth.rows()) + "x" +
                                    std::to_string(truth.cols()) + ")");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(estimated.transpose() * truth, Eigen::ComputeFullU | Eigen::ComputeFullV);
    ProcrustesResult out;
    out.rotation = svd.matrixU() * svd.matrixV().transpose();
    out.aligned = estimated * out.rotation;
    out.error = (out.aligned - truth).norm();
    return out;
}

struct AffinityValue
{
    double value = 0.0;        // ||A' B||_F
    double normalized = 0.0;   // value / sqrt(max(d_a, d_b))
};

inline AffinityValue subspace_affinity(const Eigen::MatrixXd& phi_a, const Eigen::MatrixXd& phi_b)
{
    if (phi_a.rows() != phi_b.rows()) throw std::invalid_argument("subspace_affinity: bases live on different grids");
    AffinityValue out;
    out.value = (phi_a.transpose() * phi_b).norm();
    const double d = static_cast<double>(std::max(phi_a.cols(), phi_b.cols()));
    out.normalized = d > 0.0 ? out.value / std::sqrt(d) : 0.0;
    return out;
}

/// Hubert-Arabie adjusted Rand index; 1.0 when both partitions are trivial and equal.
inline double adjusted_rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b)
{
    if (a.size() != b.size()) throw std::invalid_argument("adjusted_rand_index: label vectors differ in length");
    std::map<std::pair<std::size_t, std::size_t>, double> table;
    std::map<std::size_t, double> rows, cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        table[{a[i], b[i]}] += 1.0;
        rows[a[i]] += 1.0;
        cols[b[i]] += 1.0;
    }
    auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double index = 0.0, sa = 0.0, sb = 0.0;
    for (const auto& [key, v] : table) index += c2(v);
    for (const auto& [key, v] : rows) sa += c2(v);
    for (const auto& [key, v] : cols) sb += c2(v);
    const double total = c2(static_cast<double>(a.size()));
    const double expected = total > 0.0 ? sa * sb / total : 0.0;
    const double max_index = 0.5 * (sa + sb);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

// ---------------------------------------------------------------------------
// Pipeline

enum class ClusterMethod { spectral, hierarchical, hierarchical_vectors };

struct ClusteringConfig
{
    ClusterMethod method = ClusterMethod::spectral;
    std::size_t k = 2;
    double max_within_distance = 1.4;
    std::vector<std::vector<std::size_t>> groups;  // vector mode pooling
    std::uint64_t seed = 1;
};

struct ClusterBasis
{
    std::vector<std::size_t> channels;
    MfpcaResult mfpca;
};

struct SegmentModel
{
    std::size_t lo = 0, hi = 0;   // [lo, hi)
    Eigen::MatrixXd affinity;
    std::vector<std::size_t> assignment;
    std::vector<ClusterBasis> clusters;
    bool warning = false;
};

struct SegmentedSubspaceModel
{
    std::vector<SegmentModel> segments;
};

/// Segment boundaries [0, cp_1), [cp_1, cp_2), ..., [cp_last, n).
inline std::vector<std::pair<std::size_t, std::size_t>> segments_from(const std::vector<std::size_t>& change_points, std::size_t n)
{
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t lo = 0;
    for (auto cp : change_points) {
        if (cp <= lo || cp >= n) throw std::invalid_argument("change points must be strictly increasing inside (0, n)");
        out.emplace_back(lo, cp);
        lo = cp;
    }
    out.emplace_back(lo, n);
    return out;
}

inline ClusterResult cluster_segment(const CoefficientPath& path, std::size_t lo, std::size_t hi, const Eigen::MatrixXd& affinity,
                                     const ClusteringConfig& config)
{
    switch (config.method) {
    case ClusterMethod::spectral: return spectral_cluster(affinity, config.k, config.seed);
    case ClusterMethod::hierarchical: return hierarchical_cluster(affinity, config.max_within_distance);
    case ClusterMethod::hierarchical_vectors:
        return hierarchical_cluster_vectors(path, lo, hi, config.max_within_distance, config.groups);
    }
    throw std::invalid_argument("unknown clustering method");
}

/// Affinity, clustering and smooth MFPCA for every segment.
inline SegmentedSubspaceModel infer(const CoefficientPath& path, const std::vector<std::size_t>& change_points,
                                    const FunctionalDataset& data, const ClusteringConfig& config, const MfpcaOptions& mfpca = {},
                                    unsigned threads = 0)
{
    if (path.n_channels() != data.n_channels() || path.n_times() != data.n_times())
        throw std::invalid_argument("infer: coefficient path does not match the dataset");
    const auto bounds = segments_from(change_points, data.n_times());
    SegmentedSubspaceModel model;
    model.segments.resize(bounds.size());
    detail::parallel_for(bounds.size(), [&](std::size_t s) {
        auto& seg = model.segments[s];
        seg.lo = bounds[s].first;
        seg.hi = bounds[s].second;
        seg.affinity = segment_affinity(path, seg.lo, seg.hi);
        const ClusterResult cl = cluster_segment(path, seg.lo, seg.hi, seg.affinity, config);
        seg.assignment = cl.assignment;
        seg.warning = cl.warning;
        for (std::size_t l = 0; l < cl.n_clusters; ++l) {
            ClusterBasis cb;
            for (std::size_t j = 0; j < seg.assignment.size(); ++j)
                if (seg.assignment[j] == l) cb.channels.push_back(j);
            cb.mfpca = smooth_mfpca(data.window(seg.lo, seg.hi, cb.channels).samples(), mfpca);
            seg.clusters.push_back(std::move(cb));
        }
    }, threads);
    return model;
}

} // namespace dfsl
