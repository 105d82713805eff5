#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "solver.hpp"

namespace dfsl {

/**
 * Change scores and detections. Column k of `scores` (k = 1..n-1, column 0
 * unused and zero) holds c_jk = sum_r |b_jr(t_k) - b_jr(t_{k-1})|; a
 * flagged index k is the first time point of the new regime.
 */
struct ChangeScore
{
    Eigen::MatrixXd scores;                         // p x n
    Eigen::VectorXd thresholds;                     // c_j0
    std::vector<std::vector<std::size_t>> flags;    // T_j
    std::vector<std::size_t> counts;                // C_k, length n
    std::vector<std::size_t> raw_system;            // before merging
    std::vector<std::size_t> change_points;         // merged system detections

    std::size_t n_channels() const { return static_cast<std::size_t>(scores.rows()); }
    std::size_t n_times() const { return static_cast<std::size_t>(scores.cols()); }
};

enum class SystemRule { count_at_least, count_sigma };

struct DetectionPolicy
{
    double channel_sigma = 3.0;                 // c_j0 = channel_sigma * std_j
    SystemRule system = SystemRule::count_at_least;
    double system_value = 1.0;                  // c for count_at_least, m for count_sigma

    static DetectionPolicy count(double c) { return {3.0, SystemRule::count_at_least, c}; }
    static DetectionPolicy sigma(double m) { return {3.0, SystemRule::count_sigma, m}; }
};

/// Parses "count:<c>" or "sigma:<m>".
inline DetectionPolicy parse_policy(const std::string& text)
{
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("policy must be count:<c> or sigma:<m>, got '" + text + "'");
    const std::string kind = text.substr(0, colon);
    double value = 0.0;
    try {
        std::size_t used = 0;
        value = std::stod(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
        throw std::invalid_argument("policy value in '" + text + "' is not a number");
    }
    if (!(value > 0.0) || !std::isfinite(value)) throw std::invalid_argument("policy value must be positive");
    if (kind == "count") return DetectionPolicy::count(value);
    if (kind == "sigma") return DetectionPolicy::sigma(value);
    throw std::invalid_argument("unknown policy kind '" + kind + "'");
}

inline std::string to_string(const DetectionPolicy& p)
{
    return (p.system == SystemRule::count_at_least ? "count:" : "sigma:") + format_double(p.system_value);
}

/// Scores only; thresholds, flags and detections are left empty.
inline ChangeScore score(const CoefficientPath& path)
{
    const auto p = static_cast<Eigen::Index>(path.n_channels());
    const auto n = static_cast<Eigen::Index>(path.n_times());
    ChangeScore out;
    out.scores = Eigen::MatrixXd::Zero(p, n);
    for (Eigen::Index j = 0; j < p; ++j) {
        const auto& s = path.slice(static_cast<std::size_t>(j));
        for (Eigen::Index k = 1; k < n; ++k) out.scores(j, k) = (s.col(k) - s.col(k - 1)).cwiseAbs().sum();
    }
    return out;
}

namespace detail {

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
template <class Range>
double sample_std(const Range& values)
{
    const auto count = static_cast<double>(values.size());
    if (values.size() < 2) return 0.0;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= count;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / (count - 1.0));
}

/// Each run of consecutive indices collapses to its largest count
/// (earliest on ties).
inline std::vector<std::size_t> merge_adjacent(const std::vector<std::size_t>& sorted, const std::vector<std::size_t>& counts)
{
    std::vector<std::size_t> out;
    for (std::size_t a = 0; a < sorted.size();) {
        std::size_t b = a, best = sorted[a];
        while (b + 1 < sorted.size() && sorted[b + 1] == sorted[b] + 1) {
            ++b;
            if (counts[sorted[b]] > counts[best]) best = sorted[b];
        }
        out.push_back(best);
        a = b + 1;
    }
    return out;
}

} // namespace detail

/**
 * Channel flags T_j = {k : c_jk > channel_sigma * std_j(c_j.)} over
 * k = 1..n-1, system counts C_k = #{j : k in T_j}, then the system rule
 * (C_k >= c, or C_k > m * std(C_k)) and adjacent-index merging.
 */
inline ChangeScore detect(ChangeScore sc, const DetectionPolicy& policy = {})
{
    if (!(policy.channel_sigma >= 0.0)) throw std::invalid_argument("detect: channel multiplier must be >= 0");
    const std::size_t p = sc.n_channels(), n = sc.n_times();
    sc.thresholds = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
    sc.flags.assign(p, {});
    sc.counts.assign(n, 0);
    for (std::size_t j = 0; j < p; ++j) {
        std::vector<double> row;
        for (std::size_t k = 1; k < n; ++k) row.push_back(sc.scores(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)));
        const double thr = policy.channel_sigma * detail::sample_std(row);
        sc.thresholds(static_cast<Eigen::Index>(j)) = thr;
        for (std::size_t k = 1; k < n; ++k)
            if (sc.scores(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) > thr) {
                sc.flags[j].push_back(k);
                ++sc.counts[k];
            }
    }
    sc.raw_system.clear();
    if (policy.system == SystemRule::count_at_least) {
        for (std::size_t k = 1; k < n; ++k)
            if (static_cast<double>(sc.counts[k]) >= policy.system_value) sc.raw_system.push_back(k);
    } else {
        std::vector<double> c;
        for (std::size_t k = 1; k < n; ++k) c.push_back(static_cast<double>(sc.counts[k]));
        const double thr = policy.system_value * detail::sample_std(c);
        for (std::size_t k = 1; k < n; ++k)
            if (static_cast<double>(sc.counts[k]) > thr) sc.raw_system.push_back(k);
    }
    sc.change_points = detail::merge_adjacent(sc.raw_system, sc.counts);
    return sc;
}

inline ChangeScore detect(const CoefficientPath& path, const DetectionPolicy& policy = {})
{
    return detect(score(path), policy);
}

/// Detection with the largest system count (earliest on ties); n if none.
inline std::size_t dominant_change_point(const ChangeScore& sc)
{
    std::size_t best = sc.n_times();
    for (auto k : sc.change_points)
        if (best == sc.n_times() || sc.counts[k] > sc.counts[best]) best = k;
    return best;
}

} // namespace dfsl
