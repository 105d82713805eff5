#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "changepoint.hpp"
#include "dataset.hpp"
#include "simulate.hpp"
#include "solver.hpp"
#include "subspace.hpp"
#include "tuning.hpp"

namespace dfsl {

/// Yhat_ij(t_k) = sum_{r != j} Y_ir(t_k) b_jr(t_k), one n x p matrix per sample.
inline std::vector<Eigen::MatrixXd> predict(const CoefficientPath& path, const FunctionalDataset& test)
{
    if (path.n_channels() != test.n_channels() || path.n_times() != test.n_times())
        throw std::invalid_argument("predict: model is " + std::to_string(path.n_channels()) + " channels x " +
                                    std::to_string(path.n_times()) + " times, data is " + std::to_string(test.n_channels()) +
                                    " x " + std::to_string(test.n_times()));
    const auto p = static_cast<Eigen::Index>(test.n_channels());
    std::vector<Eigen::MatrixXd> out;
    out.reserve(test.n_samples());
    for (const auto& y : test.samples()) {
        Eigen::MatrixXd yhat(y.rows(), p);
        for (Eigen::Index j = 0; j < p; ++j)
            yhat.col(j) = (y.transpose().cwiseProduct(path.slice(static_cast<std::size_t>(j)))).colwise().sum().transpose();
        out.push_back(std::move(yhat));
    }
    return out;
}

/// Mean over samples, times and channels of (Y - Yhat)^2.
inline double prediction_mse(const CoefficientPath& path, const FunctionalDataset& test)
{
    const auto yhat = predict(path, test);
    double total = 0.0;
    for (std::size_t i = 0; i < yhat.size(); ++i) total += (test.sample(i) - yhat[i]).squaredNorm();
    return total / static_cast<double>(test.n_samples() * test.n_times() * test.n_channels());
}

/**
 * Fraction of channels j for which some peer outside j's true subspace has
 * |coefficients(j, r)| > 1e-10. `coefficients` is p x p: the time-averaged
 * path or a static fit.
 */
inline double false_subspace_rate(const Eigen::MatrixXd& coefficients, const std::vector<std::size_t>& assignment)
{
    const auto p = coefficients.rows();
    if (coefficients.cols() != p || static_cast<std::size_t>(p) != assignment.size())
        throw std::invalid_argument("false_subspace_rate: coefficient matrix and assignment disagree in size");
    std::size_t bad = 0;
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index r = 0; r < p; ++r)
            if (r != j && assignment[static_cast<std::size_t>(r)] != assignment[static_cast<std::size_t>(j)] &&
                std::abs(coefficients(j, r)) > 1e-10) {
                ++bad;
                break;
            }
    }
    return static_cast<double>(bad) / static_cast<double>(p);
}

inline double false_subspace_rate(const CoefficientPath& path, const std::vector<std::size_t>& assignment)
{
    return false_subspace_rate(path.mean(), assignment);
}

struct ChangePointErrors
{
    std::size_t false_count = 0;
    std::size_t miss_count = 0;
};

/**
 * A detection is accurate iff it lies within +-1 of a true change point not
 * yet matched (nearest first, then earliest). Unmatched detections are
 * false; unmatched true points are misses.
 */
inline ChangePointErrors change_point_metrics(const std::vector<std::size_t>& detected, const std::vector<std::size_t>& truth)
{
    std::vector<char> used(truth.size(), 0);
    ChangePointErrors out;
    for (auto d : detected) {
        std::size_t best = truth.size();
        std::size_t best_gap = 2;
        for (std::size_t t = 0; t < truth.size(); ++t) {
            if (used[t]) continue;
            const std::size_t gap = d > truth[t] ? d - truth[t] : truth[t] - d;
            if (gap <= 1 && gap < best_gap) {
                best_gap = gap;
                best = t;
            }
        }
        if (best == truth.size()) ++out.false_count;
        else used[best] = 1;
    }
    for (char u : used)
        if (!u) ++out.miss_count;
    return out;
}

// ---------------------------------------------------------------------------
// Benchmark harness

enum class NoiseSource { truth, white, bcd };

struct BenchmarkConfig
{
    std::string model = "I";                   // "I" or "II"
    std::vector<double> sigmas{0.05};
    std::vector<std::size_t> n_train{500};
    std::vector<std::size_t> p_per_subspace{4};
    std::size_t replications = 10;
    std::size_t test_size = 50;
    std::uint64_t seed = 7;
    NoiseSource noise = NoiseSource::truth;
    TuningSpec tuning;
    DetectionPolicy policy;
    bool timing = false;
    bool run_static = true;
    unsigned threads = 0;
};

struct ReplicationRecord
{
    std::string model;
    double sigma = 0.0;
    std::size_t n_train = 0;
    std::size_t p_per_subspace = 0;
    std::size_t replication = 0;
    std::string method;                         // "DFSL" or "SFSL"
    double mse = std::numeric_limits<double>::quiet_NaN();
    double false_subspace_rate = std::numeric_limits<double>::quiet_NaN();
    double false_cp = std::numeric_limits<double>::quiet_NaN();
    double miss_cp = std::numeric_limits<double>::quiet_NaN();
    double runtime_s = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::size_t> detected;          // system change points
    std::size_t dominant_cp = 0;                // detection with the largest count; n if none
    double mean_ari = std::numeric_limits<double>::quiet_NaN();
    std::string error;
};

struct MetricReport
{
    std::string model;
    double sigma = 0.0;
    std::size_t n_train = 0;
    std::size_t p_per_subspace = 0;
    std::string method;
    double mse_mean = 0.0;
    double mse_se = 0.0;
    double false_subspace_rate = 0.0;
    double false_cp_mean = 0.0;
    double miss_cp_mean = 0.0;
    double runtime_s = std::numeric_limits<double>::quiet_NaN();
    std::size_t replications = 0;               // successful
    std::size_t failures = 0;
};

struct BenchmarkResult
{
    std::vector<ReplicationRecord> records;
    std::vector<MetricReport> reports;
};

inline std::pair<FunctionalDataset, GroundTruth> simulate_model(const std::string& model, std::size_t n_samples, double sigma,
                                                               std::uint64_t seed, std::size_t p_per_subspace = 4)
{
    if (model == "I") return model_I(n_samples, sigma, seed, p_per_subspace);
    if (model == "II") return model_II(n_samples, sigma, seed, p_per_subspace);
    throw std::invalid_argument("unknown model '" + model + "' (expected I or II)");
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Both methods for one replication: records[0] DFSL, records[1] SFSL.
inline std::vector<ReplicationRecord> run_replication(const BenchmarkConfig& cfg, double sigma, std::size_t n_train, std::size_t ppl,
                                                      std::size_t rep, std::uint64_t rep_seed)
{
    ReplicationRecord base;
    base.model = cfg.model;
    base.sigma = sigma;
    base.n_train = n_train;
    base.p_per_subspace = ppl;
    base.replication = rep;
    ReplicationRecord dfsl = base, sfsl = base;
    dfsl.method = "DFSL";
    sfsl.method = "SFSL";
    try {
        auto [data, truth] = simulate_model(cfg.model, n_train + cfg.test_size, sigma, rep_seed, ppl);
        auto [train, test] = split(data, n_train, rep_seed);
        SolverOptions solver = cfg.tuning.solver;
        solver.threads = 1;
        TuningSpec spec = cfg.tuning;
        spec.solver = solver;

        const auto t0 = std::chrono::steady_clock::now();
        std::optional<NoiseModel> noise;
        if (cfg.noise == NoiseSource::truth) noise = truth.noise;
        else if (cfg.noise == NoiseSource::bcd) {
            BcdOptions bo;
            bo.solver = solver;
            // Covariance from BCD at the penalties selected under white noise.
            const TuningResult pilot = select(build_designs(train, nullptr, 1), train.n_samples(), spec);
            noise = fit_bcd(train, pilot.best_penalties(), bo).noise;
        }
        const auto designs = build_designs(train, noise ? &*noise : nullptr, 1);
        const double setup = seconds_since(t0);

        const auto t1 = std::chrono::steady_clock::now();
        const TuningResult tuned = select(designs, train.n_samples(), spec);
        const ChangeScore cs = detect(tuned.best_fit.path, cfg.policy);
        const double dfsl_time = setup + seconds_since(t1);

        const std::vector<std::size_t>& assign = truth.assignment.front();
        dfsl.mse = prediction_mse(tuned.best_fit.path, test);
        dfsl.false_subspace_rate = false_subspace_rate(tuned.best_fit.path, assign);
        const auto errs = change_point_metrics(cs.change_points, truth.change_points);
        dfsl.false_cp = static_cast<double>(errs.false_count);
        dfsl.miss_cp = static_cast<double>(errs.miss_count);
        dfsl.detected = cs.change_points;
        dfsl.dominant_cp = dominant_change_point(cs);

        // Clustering on the detected segments with the true subspace count.
        ClusteringConfig cc;
        cc.k = truth.bases.front().size();
        cc.seed = rep_seed;
        double ari = 0.0;
        const auto bounds = segments_from(cs.change_points, train.n_times());
        for (const auto& [lo, hi] : bounds) {
            const auto cl = spectral_cluster(segment_affinity(tuned.best_fit.path, lo, hi), cc.k, cc.seed);
            // Truth at the segment midpoint.
            const std::size_t mid = (lo + hi - 1) / 2;
            std::size_t s = 0;
            while (s < truth.change_points.size() && mid >= truth.change_points[s]) ++s;
            ari += adjusted_rand_index(cl.assignment, truth.assignment[s]);
        }
        dfsl.mean_ari = ari / static_cast<double>(bounds.size());
        if (cfg.timing) dfsl.runtime_s = dfsl_time;

        if (cfg.run_static) {
            const auto t2 = std::chrono::steady_clock::now();
            const StaticTuningResult st = select_static(designs, train.n_samples(), spec);
            const double sfsl_time = setup + seconds_since(t2);
            const CoefficientPath constant = CoefficientPath::constant(st.best_fit.coefficients, train.n_times());
            sfsl.mse = prediction_mse(constant, test);
            sfsl.false_subspace_rate = false_subspace_rate(st.best_fit.coefficients, assign);
            // A static fit detects no change points.
            sfsl.false_cp = 0.0;
            sfsl.miss_cp = static_cast<double>(truth.change_points.size());
            sfsl.dominant_cp = train.n_times();
            if (cfg.timing) sfsl.runtime_s = sfsl_time;
        }
    } catch (const std::exception& e) {
        dfsl.error = e.what();
        sfsl.error = e.what();
    }
    if (!cfg.run_static) return {dfsl};
    return {dfsl, sfsl};
}

} // namespace detail

/**
 * Every (sigma, N, channels-per-subspace) cell, each replication seeded
 * from (seed, cell, replication): simulate N + test_size samples, hold out
 * test_size, tune and fit DFSL and SFSL, detect, cluster, score. Per-cell
 * failures are recorded and excluded from the aggregates.
 */
inline BenchmarkResult run_benchmark(const BenchmarkConfig& cfg)
{
    if (cfg.sigmas.empty() || cfg.n_train.empty() || cfg.p_per_subspace.empty() || cfg.replications == 0)
        throw std::invalid_argument("run_benchmark: empty grid");
    for (double s : cfg.sigmas)
        if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("run_benchmark: sigma must be finite and >= 0");
    if (cfg.model != "I" && cfg.model != "II") throw std::invalid_argument("run_benchmark: model must be I or II");
    if (cfg.test_size == 0) throw std::invalid_argument("run_benchmark: test_size must be positive");

    struct Job { std::size_t cell; double sigma; std::size_t n; std::size_t ppl; std::size_t rep; };
    std::vector<Job> jobs;
    std::size_t cell = 0;
    for (auto ppl : cfg.p_per_subspace)
        for (auto n : cfg.n_train)
            for (double s : cfg.sigmas) {
                for (std::size_t r = 0; r < cfg.replications; ++r) jobs.push_back({cell, s, n, ppl, r});
                ++cell;
            }

    std::vector<std::vector<ReplicationRecord>> out(jobs.size());
    detail::parallel_for(jobs.size(), [&](std::size_t i) {
        const auto& job = jobs[i];
        const std::uint64_t rep_seed = detail::derive_seed(cfg.seed, {detail::tag_benchmark, job.cell, job.rep});
        out[i] = detail::run_replication(cfg, job.sigma, job.n, job.ppl, job.rep, rep_seed);
    }, cfg.threads);

    BenchmarkResult res;
    for (auto& v : out)
        for (auto& r : v) res.records.push_back(std::move(r));

    const std::vector<std::string> methods = cfg.run_static ? std::vector<std::string>{"DFSL", "SFSL"} : std::vector<std::string>{"DFSL"};
    for (auto ppl : cfg.p_per_subspace)
        for (auto n : cfg.n_train)
            for (double s : cfg.sigmas)
                for (const auto& m : methods) {
                    MetricReport rep;
                    rep.model = cfg.model;
                    rep.sigma = s;
                    rep.n_train = n;
                    rep.p_per_subspace = ppl;
                    rep.method = m;
                    std::vector<const ReplicationRecord*> ok;
                    for (const auto& r : res.records)
                        if (r.method == m && r.sigma == s && r.n_train == n && r.p_per_subspace == ppl) {
                            if (r.error.empty()) ok.push_back(&r);
                            else ++rep.failures;
                        }
                    rep.replications = ok.size();
                    const double count = static_cast<double>(ok.size());
                    double mse = 0.0, mse2 = 0.0, fsr = 0.0, fcp = 0.0, mcp = 0.0, rt = 0.0;
                    for (const auto* r : ok) {
                        mse += r->mse;
                        fsr += r->false_subspace_rate;
                        fcp += r->false_cp;
                        mcp += r->miss_cp;
                        rt += r->runtime_s;
                    }
                    const double nan = std::numeric_limits<double>::quiet_NaN();
                    rep.mse_mean = ok.empty() ? nan : mse / count;
                    for (const auto* r : ok) mse2 += (r->mse - rep.mse_mean) * (r->mse - rep.mse_mean);
                    rep.mse_se = ok.size() > 1 ? std::sqrt(mse2 / (count - 1.0)) / std::sqrt(count) : (ok.empty() ? nan : 0.0);
                    rep.false_subspace_rate = ok.empty() ? nan : fsr / count;
                    rep.false_cp_mean = ok.empty() ? nan : fcp / count;
                    rep.miss_cp_mean = ok.empty() ? nan : mcp / count;
                    rep.runtime_s = cfg.timing && !ok.empty() ? rt / count : nan;
                    res.reports.push_back(rep);
                }
    return res;
}

inline std::string format_metric(double v)
{
    return std::isnan(v) ? std::string("nan") : format_double(v);
}

inline void write_report_csv(const std::vector<MetricReport>& reports, std::ostream& out)
{
    out << "model,sigma,N,p_per_subspace,method,mse_mean,mse_se,false_subspace_rate,false_cp_mean,miss_cp_mean,runtime_s\n";
    for (const auto& r : reports)
        out << r.model << ',' << format_double(r.sigma) << ',' << r.n_train << ',' << r.p_per_subspace << ',' << r.method << ','
            << format_metric(r.mse_mean) << ',' << format_metric(r.mse_se) << ',' << format_metric(r.false_subspace_rate) << ','
            << format_metric(r.false_cp_mean) << ',' << format_metric(r.miss_cp_mean) << ',' << format_metric(r.runtime_s) << '\n';
}

} // namespace dfsl
