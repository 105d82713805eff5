#pragma once

#include <cfloat>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "flsa.hpp"
#include "solver.hpp"

namespace dfsl {

/// Fusion weight rho * lambda0, sparsity weight (1 - rho) * lambda0.
inline PenaltyConfig reparameterize(double lambda0, double rho)
{
    return {.lambda1 = rho * lambda0, .lambda2 = (1.0 - rho) * lambda0};
}

namespace detail {

/// True iff the all-zero path is optimal for every channel at (lambda0, rho):
/// prox of the penalty at the negative gradient at zero must vanish, i.e.
/// ||tv_denoise(c, rho lambda0)||_inf <= (1 - rho) lambda0 per peer block.
inline bool zero_is_optimal(const std::vector<ChannelDesign>& designs, double lambda0, double rho)
{
    TvWorkspace ws;
    std::vector<double> buf;
    for (const auto& d : designs) {
        const auto n = static_cast<std::size_t>(d.n_times());
        buf.resize(n);
        for (std::size_t a = 0; a < d.peers().size(); ++a) {
            tv_denoise(std::span<const double>(d.linear().data() + a * n, n), rho * lambda0, buf, ws);
            for (double v : buf)
                if (std::abs(v) > (1.0 - rho) * lambda0) return false;
        }
    }
    return true;
}

} // namespace detail

/**
 * Smallest lambda0 at which the fit with (rho lambda0, (1 - rho) lambda0) is
 * identically zero. Bisection between 0 and max |linear| / (1 - rho), with
 * zero-optimality decided by the exact first-order condition at b = 0
 * rather than by full fits. Returns the certified upper end of the final
 * bracket (relative width 1e-6); 0 for all-zero data.
 */
inline double lambda_max(const std::vector<ChannelDesign>& designs, double rho)
{
    if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("lambda_max: rho must lie in (0, 1)");
    double top = 0.0;
    for (const auto& d : designs)
        if (d.linear().size()) top = std::max(top, d.linear().cwiseAbs().maxCoeff());
    if (!(top > 0.0)) return 0.0;
    double hi = top / (1.0 - rho);
    double lo = 0.0;
    while (hi - lo > 1e-6 * hi) {
        const double mid = 0.5 * (lo + hi);
        if (detail::zero_is_optimal(designs, mid, rho)) hi = mid;
        else lo = mid;
    }
    return hi;
}

inline double lambda_max(const FunctionalDataset& data, double rho, const NoiseModel* noise = nullptr)
{
    return lambda_max(build_designs(data, noise), rho);
}

struct TuningSpec
{
    std::vector<double> rho_values{0.1, 0.3, 0.5, 0.7, 0.9};
    std::size_t n_lambda = 10;
    double lambda_ratio = 0.01;  // smallest candidate is ratio * lambda_max (exclusive)
    SolverOptions solver;
};

struct TuningCell
{
    double rho = 0.0;
    double lambda0 = 0.0;
    PenaltyConfig penalties;
    double criterion = 0.0;
    double fit_term = 0.0;       // (Nn) sum_j log(RSS_j / (Nn))
    std::size_t nonzeros = 0;    // sum_j k(j)
    bool converged = false;
};

struct TuningResult
{
    std::vector<TuningCell> cells;
    std::size_t best = 0;
    DfslFit best_fit;

    const TuningCell& best_cell() const { return cells.at(best); }
    PenaltyConfig best_penalties() const { return cells.at(best).penalties; }
};

/// lambda_max * ratio^(i / count) for i = 0..count-1.
inline std::vector<double> lambda_grid(double lambda_max_value, std::size_t count, double ratio = 0.01)
{
    std::vector<double> out;
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(lambda_max_value * std::pow(ratio, static_cast<double>(i) / static_cast<double>(count)));
    return out;
}

/**
 * (Nn) sum_j log(RSS_j / (Nn)) + log(Nn) sum_j k(j), where RSS_j is the
 * whitened residual sum of squares and k(j) the nonzero count of channel j.
 */
inline double information_criterion(const std::vector<double>& rss, std::size_t nonzeros, std::size_t n_samples,
                                     std::size_t n_times, double* fit_term = nullptr)
{
    const double nn = static_cast<double>(n_samples) * static_cast<double>(n_times);
    double fit = 0.0;
    for (double r : rss) fit += nn * std::log(std::max(r, DBL_MIN) / nn);
    if (fit_term) *fit_term = fit;
    return fit + std::log(nn) * static_cast<double>(nonzeros);
}

namespace detail {

/// Argmin over converged cells; ties go to larger lambda0, then larger rho.
inline std::size_t select_cell(const std::vector<TuningCell>& cells)
{
    std::size_t best = cells.size();
    for (std::size_t c = 0; c < cells.size(); ++c) {
        if (!cells[c].converged) continue;
        if (best == cells.size()) {
            best = c;
            continue;
        }
        const auto& a = cells[c];
        const auto& b = cells[best];
        if (a.criterion < b.criterion ||
            (a.criterion == b.criterion && (a.lambda0 > b.lambda0 || (a.lambda0 == b.lambda0 && a.rho > b.rho))))
            best = c;
    }
    return best;
}

inline std::string describe_cells(const std::vector<TuningCell>& cells)
{
    std::string msg;
    for (const auto& c : cells)
        msg += "\n  rho=" + format_double(c.rho) + " lambda0=" + format_double(c.lambda0) + (c.converged ? " converged" : " not converged");
    return msg;
}

} // namespace detail

/**
 * Fits every (rho, lambda0) cell cold and returns the information-criterion
 * minimizer. Cells run in parallel; the reduction does not depend on order.
 */
inline TuningResult select(const std::vector<ChannelDesign>& designs, std::size_t n_samples, const TuningSpec& spec)
{
    if (spec.rho_values.empty() || spec.n_lambda == 0) throw std::invalid_argument("select: empty tuning grid");
    if (!(spec.lambda_ratio > 0.0 && spec.lambda_ratio < 1.0)) throw std::invalid_argument("select: lambda_ratio must lie in (0, 1)");
    const std::size_t n = designs.empty() ? 0 : designs.front().n_times();

    TuningResult res;
    for (double rho : spec.rho_values) {
        for (double l0 : lambda_grid(lambda_max(designs, rho), spec.n_lambda, spec.lambda_ratio)) {
            TuningCell cell;
            cell.rho = rho;
            cell.lambda0 = l0;
            cell.penalties = reparameterize(l0, rho);
            res.cells.push_back(cell);
        }
    }

    SolverOptions inner = spec.solver;
    const unsigned outer_threads = inner.threads;
    inner.threads = 1;
    detail::parallel_for(res.cells.size(), [&](std::size_t c) {
        auto& cell = res.cells[c];
        const DfslFit fit = fit_dfsl(designs, cell.penalties, inner);
        std::vector<double> rss;
        for (const auto& ch : fit.channels) rss.push_back(2.0 * ch.smooth);
        cell.nonzeros = fit.path.nonzeros();
        cell.criterion = information_criterion(rss, cell.nonzeros, n_samples, n, &cell.fit_term);
        cell.converged = fit.converged() && std::isfinite(cell.criterion);
    }, outer_threads);

    res.best = detail::select_cell(res.cells);
    if (res.best == res.cells.size())
        throw std::runtime_error("select: no tuning cell converged" + detail::describe_cells(res.cells));
    res.best_fit = fit_dfsl(designs, res.best_penalties(), spec.solver);
    return res;
}

inline TuningResult select(const FunctionalDataset& data, const TuningSpec& spec = {}, const NoiseModel* noise = nullptr)
{
    return select(build_designs(data, noise, spec.solver.threads), data.n_samples(), spec);
}

struct StaticTuningResult
{
    std::vector<TuningCell> cells;  // rho = 0, penalties.lambda2 = lambda
    std::size_t best = 0;
    StaticFit best_fit;
};

/// Same criterion for the static baseline over lambda_max * ratio^(i/count).
inline StaticTuningResult select_static(const std::vector<ChannelDesign>& designs, std::size_t n_samples, const TuningSpec& spec)
{
    const std::size_t n = designs.empty() ? 0 : designs.front().n_times();
    const std::size_t count = spec.n_lambda * std::max<std::size_t>(1, spec.rho_values.size());
    StaticTuningResult res;
    for (double lam : lambda_grid(static_lambda_max(designs), count, spec.lambda_ratio)) {
        TuningCell cell;
        cell.lambda0 = lam;
        cell.penalties = {.lambda1 = 0.0, .lambda2 = lam};
        res.cells.push_back(cell);
    }
    SolverOptions inner = spec.solver;
    inner.threads = 1;
    std::vector<StaticFit> fits(res.cells.size());
    detail::parallel_for(res.cells.size(), [&](std::size_t c) {
        auto& cell = res.cells[c];
        fits[c] = fit_sfsl(designs, cell.lambda0, inner);
        std::vector<double> rss;
        for (double s : fits[c].smooth) rss.push_back(2.0 * s);
        cell.nonzeros = static_cast<std::size_t>((fits[c].coefficients.array().abs() > 1e-10).count());
        cell.criterion = information_criterion(rss, cell.nonzeros, n_samples, n, &cell.fit_term);
        cell.converged = fits[c].converged && std::isfinite(cell.criterion);
    }, spec.solver.threads);
    res.best = detail::select_cell(res.cells);
    if (res.best == res.cells.size())
        throw std::runtime_error("select_static: no tuning cell converged" + detail::describe_cells(res.cells));
    res.best_fit = std::move(fits[res.best]);
    return res;
}

inline void write_grid_csv(const std::vector<TuningCell>& cells, std::size_t best, std::ostream& out)
{
    out << "rho,lambda0,lambda1,lambda2,criterion,fit_term,nonzeros,converged,selected\n";
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto& x = cells[c];
        out << format_double(x.rho) << ',' << format_double(x.lambda0) << ',' << format_double(x.penalties.lambda1) << ','
            << format_double(x.penalties.lambda2) << ',' << format_double(x.criterion) << ',' << format_double(x.fit_term) << ','
            << x.nonzeros << ',' << (x.converged ? 1 : 0) << ',' << (c == best ? 1 : 0) << '\n';
    }
}

} // namespace dfsl
