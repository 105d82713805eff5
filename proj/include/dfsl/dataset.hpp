#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "detail/rng.hpp"

namespace dfsl {

/**
 * Multichannel functional observations.
 *
 * Sample i is stored as an n x p matrix: row k is the time point t_k,
 * column j is channel j. All samples share the time grid, which must be
 * strictly increasing and equally spaced.
 */
class FunctionalDataset
{
public:
    FunctionalDataset(std::vector<Eigen::MatrixXd> samples,
                      Eigen::VectorXd time_points,
                      std::vector<std::string> channel_names)
        : samples_(std::move(samples))
        , time_points_(std::move(time_points))
        , channel_names_(std::move(channel_names))
    {
        validate();
    }

    /// Grid 0, 1, ..., n-1 and channel names "ch0", "ch1", ...
    explicit FunctionalDataset(std::vector<Eigen::MatrixXd> samples)
        : samples_(std::move(samples))
    {
        if (samples_.empty()) throw std::invalid_argument("dataset: no samples");
        const auto n = samples_.front().rows();
        const auto p = samples_.front().cols();
        time_points_ = Eigen::VectorXd::LinSpaced(n, 0.0, static_cast<double>(n - 1));
        if (n == 1) time_points_(0) = 0.0;
        channel_names_.reserve(p);
        for (Eigen::Index j = 0; j < p; ++j) channel_names_.push_back("ch" + std::to_string(j));
        validate();
    }

    std::size_t n_samples() const { return samples_.size(); }
    std::size_t n_times() const { return static_cast<std::size_t>(time_points_.size()); }
    std::size_t n_channels() const { return channel_names_.size(); }

    const Eigen::MatrixXd& sample(std::size_t i) const { return samples_.at(i); }
    const std::vector<Eigen::MatrixXd>& samples() const { return samples_; }
    double value(std::size_t i, std::size_t k, std::size_t j) const
    {
        return samples_[i](static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
    }
    const Eigen::VectorXd& time_points() const { return time_points_; }
    const std::vector<std::string>& channel_names() const { return channel_names_; }

    FunctionalDataset subset(std::span<const std::size_t> indices) const
    {
        std::vector<Eigen::MatrixXd> picked;
        picked.reserve(indices.size());
        for (auto i : indices) picked.push_back(samples_.at(i));
        return FunctionalDataset(std::move(picked), time_points_, channel_names_);
    }

    /// Rows [lo, hi) of every sample restricted to the given channels.
    FunctionalDataset window(std::size_t lo, std::size_t hi, std::span<const std::size_t> channels) const
    {
        if (lo >= hi || hi > n_times()) throw std::invalid_argument("dataset: empty or out-of-range window");
        std::vector<Eigen::MatrixXd> out;
        out.reserve(samples_.size());
        std::vector<std::string> names;
        for (auto j : channels) names.push_back(channel_names_.at(j));
        const auto len = static_cast<Eigen::Index>(hi - lo);
        for (const auto& s : samples_) {
            Eigen::MatrixXd w(len, static_cast<Eigen::Index>(channels.size()));
            for (std::size_t c = 0; c < channels.size(); ++c)
                w.col(static_cast<Eigen::Index>(c)) = s.col(static_cast<Eigen::Index>(channels[c])).segment(static_cast<Eigen::Index>(lo), len);
            out.push_back(std::move(w));
        }
        return FunctionalDataset(std::move(out), time_points_.segment(static_cast<Eigen::Index>(lo), len), std::move(names));
    }

private:
    void validate() const
    {
        if (samples_.empty()) throw std::invalid_argument("dataset: no samples");
        const auto n = time_points_.size();
        const auto p = static_cast<Eigen::Index>(channel_names_.size());
        if (n < 1 || p < 1) throw std::invalid_argument("dataset: need at least one time point and one channel");
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            const auto& s = samples_[i];
            if (s.rows() != n || s.cols() != p)
                throw std::invalid_argument("dataset: sample " + std::to_string(i) + " has shape " +
                                            std::to_string(s.rows()) + "x" + std::to_string(s.cols()) +
                                            ", expected " + std::to_string(n) + "x" + std::to_string(p));
            if (!s.allFinite()) throw std::invalid_argument("dataset: sample " + std::to_string(i) + " has non-finite values");
        }
        if (!time_points_.allFinite()) throw std::invalid_argument("dataset: non-finite time point");
        if (n >= 2) {
            const double mean_gap = (time_points_(n - 1) - time_points_(0)) / static_cast<double>(n - 1);
            for (Eigen::Index k = 1; k < n; ++k) {
                const double gap = time_points_(k) - time_points_(k - 1);
                if (!(gap > 0.0)) throw std::invalid_argument("dataset: time points must be strictly increasing");
                if (std::abs(gap - mean_gap) >= 1e-9 * std::abs(mean_gap))
                    throw std::invalid_argument("dataset: time grid is not equally spaced (resampling is not supported)");
            }
        }
    }

    std::vector<Eigen::MatrixXd> samples_;
    Eigen::VectorXd time_points_;
    std::vector<std::string> channel_names_;
};

/**
 * Per-channel noise scale and autocorrelation. The noise covariance of
 * channel j over the n grid points is sigma_j^2 * Gamma_j / n.
 */
class NoiseModel
{
public:
    NoiseModel(Eigen::VectorXd sigma, std::vector<Eigen::MatrixXd> gamma)
        : sigma_(std::move(sigma))
        , gamma_(std::move(gamma))
    {
        if (static_cast<std::size_t>(sigma_.size()) != gamma_.size() || gamma_.empty())
            throw std::invalid_argument("noise model: sigma and gamma must both have one entry per channel");
        const auto n = gamma_.front().rows();
        for (std::size_t j = 0; j < gamma_.size(); ++j) {
            const auto& g = gamma_[j];
            const std::string who = "noise model: channel " + std::to_string(j);
            if (!(sigma_(static_cast<Eigen::Index>(j)) >= 0.0) || !std::isfinite(sigma_(static_cast<Eigen::Index>(j))))
                throw std::invalid_argument(who + " has invalid sigma");
            if (g.rows() != n || g.cols() != n) throw std::invalid_argument(who + " gamma has wrong shape");
            if (!g.allFinite()) throw std::invalid_argument(who + " gamma has non-finite entries");
            if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, g.cwiseAbs().maxCoeff()))
                throw std::invalid_argument(who + " gamma is not symmetric");
            if ((g.diagonal().array() - 1.0).abs().maxCoeff() > 1e-10)
                throw std::invalid_argument(who + " gamma must have unit diagonal");
            if (!is_diagonal(g)) {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g, Eigen::EigenvaluesOnly);
                if (!(es.eigenvalues().minCoeff() > 0.0))
                    throw std::invalid_argument(who + " gamma is not positive definite");
            }
        }
    }

    /// Independent noise: Gamma_j = I for every channel.
    static NoiseModel white(std::size_t n_channels, std::size_t n_times, double sigma = 1.0)
    {
        const auto n = static_cast<Eigen::Index>(n_times);
        return NoiseModel(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_channels), sigma),
                          std::vector<Eigen::MatrixXd>(n_channels, Eigen::MatrixXd::Identity(n, n)));
    }

    static NoiseModel shared(std::size_t n_channels, double sigma, const Eigen::MatrixXd& gamma)
    {
        return NoiseModel(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_channels), sigma),
                          std::vector<Eigen::MatrixXd>(n_channels, gamma));
    }

    std::size_t n_channels() const { return gamma_.size(); }
    std::size_t n_times() const { return static_cast<std::size_t>(gamma_.front().rows()); }
    double sigma(std::size_t j) const { return sigma_(static_cast<Eigen::Index>(j)); }
    const Eigen::VectorXd& sigmas() const { return sigma_; }
    const Eigen::MatrixXd& gamma(std::size_t j) const { return gamma_.at(j); }
    const std::vector<Eigen::MatrixXd>& gammas() const { return gamma_; }

    /// Sigma_j = sigma_j^2 Gamma_j / n.
    Eigen::MatrixXd covariance(std::size_t j) const
    {
        const double s = sigma(j);
        return (s * s / static_cast<double>(n_times())) * gamma_.at(j);
    }

    static bool is_diagonal(const Eigen::MatrixXd& m)
    {
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                if (r != c && m(r, c) != 0.0) return false;
        return true;
    }

private:
    Eigen::VectorXd sigma_;
    std::vector<Eigen::MatrixXd> gamma_;
};

/// Toeplitz autocorrelation decay^|u-v| on an m-point grid.
inline Eigen::MatrixXd ar_correlation(std::size_t m, double decay)
{
    const auto n = static_cast<Eigen::Index>(m);
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index u = 0; u < n; ++u)
        for (Eigen::Index v = 0; v < n; ++v) g(u, v) = std::pow(decay, static_cast<double>(std::abs(u - v)));
    return g;
}

/**
 * Scales every (sample, channel) column to unit Euclidean norm over the
 * time grid. Throws naming the first zero-norm column.
 */
inline FunctionalDataset normalize_channels(const FunctionalDataset& data)
{
    std::vector<Eigen::MatrixXd> out = data.samples();
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (Eigen::Index j = 0; j < out[i].cols(); ++j) {
            const double norm = out[i].col(j).norm();
            if (!(norm > 0.0))
                throw std::invalid_argument("normalize_channels: zero-norm column at sample " + std::to_string(i) +
                                            ", channel " + std::to_string(j));
            out[i].col(j) /= norm;
        }
    }
    return FunctionalDataset(std::move(out), data.time_points(), data.channel_names());
}

/// Random disjoint partition into n_train and N - n_train samples.
inline std::pair<FunctionalDataset, FunctionalDataset>
split(const FunctionalDataset& data, std::size_t n_train, std::uint64_t seed)
{
    const std::size_t total = data.n_samples();
    if (n_train == 0 || n_train >= total)
        throw std::invalid_argument("split: n_train must satisfy 0 < n_train < " + std::to_string(total));
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto engine = detail::make_engine(seed, {detail::tag_split});
    std::shuffle(order.begin(), order.end(), engine);
    std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {data.subset(train), data.subset(test)};
}

// ---------------------------------------------------------------------------
// Long-format CSV: sample_id,time_index,channel_id,value

inline constexpr const char* csv_header = "sample_id,time_index,channel_id,value";

inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_csv(const FunctionalDataset& data, std::ostream& out)
{
    out << csv_header << '\n';
    for (std::size_t i = 0; i < data.n_samples(); ++i)
        for (std::size_t k = 0; k < data.n_times(); ++k)
            for (std::size_t j = 0; j < data.n_channels(); ++j)
                out << i << ',' << k << ',' << data.channel_names()[j] << ',' << format_double(data.value(i, k, j)) << '\n';
}

inline void write_csv(const FunctionalDataset& data, const std::string& path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write_csv(data, out);
}

/**
 * Samples and channels are ordered by first appearance. The time grid is
 * the 0-based time_index. Every (sample, time, channel) cell must appear
 * exactly once.
 */
inline FunctionalDataset read_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != csv_header) throw std::invalid_argument("csv: expected header '" + std::string(csv_header) + "'");

    std::vector<std::string> sample_ids, channel_ids;
    std::unordered_map<std::string, std::size_t> sample_index, channel_index;
    struct Cell { std::size_t i, k, j; double v; };
    std::vector<Cell> cells;
    std::size_t max_time = 0;
    std::size_t line_no = 1;

    auto intern = [](std::unordered_map<std::string, std::size_t>& idx, std::vector<std::string>& ids, const std::string& key) {
        auto [it, inserted] = idx.emplace(key, ids.size());
        if (inserted) ids.push_back(key);
        return it->second;
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        for (std::string tok; std::getline(ss, tok, ',');) fields.push_back(tok);
        if (fields.size() != 4) throw std::invalid_argument("csv line " + std::to_string(line_no) + ": expected 4 fields");
        std::size_t k = 0;
        double v = 0.0;
        try {
            std::size_t pos = 0;
            const long long t = std::stoll(fields[1], &pos);
            if (pos != fields[1].size() || t < 0) throw std::invalid_argument("time");
            k = static_cast<std::size_t>(t);
            v = std::stod(fields[3], &pos);
            if (pos != fields[3].size()) throw std::invalid_argument("value");
        } catch (const std::exception&) {
            throw std::invalid_argument("csv line " + std::to_string(line_no) + ": malformed time_index or value");
        }
        cells.push_back({intern(sample_index, sample_ids, fields[0]), k, intern(channel_index, channel_ids, fields[2]), v});
        max_time = std::max(max_time, k);
    }
    if (cells.empty()) throw std::invalid_argument("csv: no data rows");

    const std::size_t N = sample_ids.size(), n = max_time + 1, p = channel_ids.size();
    std::vector<Eigen::MatrixXd> samples(N, Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p),
                                                                      std::numeric_limits<double>::quiet_NaN()));
    std::vector<std::uint8_t> seen(N * n * p, 0);
    for (const auto& c : cells) {
        auto& flag = seen[(c.i * n + c.k) * p + c.j];
        if (flag) throw std::invalid_argument("csv: duplicate cell (sample " + sample_ids[c.i] + ", time " +
                                              std::to_string(c.k) + ", channel " + channel_ids[c.j] + ")");
        flag = 1;
        samples[c.i](static_cast<Eigen::Index>(c.k), static_cast<Eigen::Index>(c.j)) = c.v;
    }
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t j = 0; j < p; ++j)
                if (!seen[(i * n + k) * p + j])
                    throw std::invalid_argument("csv: missing cell (sample " + sample_ids[i] + ", time " +
                                                std::to_string(k) + ", channel " + channel_ids[j] + ")");

    Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(n), 0.0, static_cast<double>(n - 1));
    if (n == 1) grid(0) = 0.0;
    return FunctionalDataset(std::move(samples), std::move(grid), std::move(channel_ids));
}

inline FunctionalDataset read_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_csv(in);
}

} // namespace dfsl
