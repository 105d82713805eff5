// End-to-end walk through Model I: simulate, tune, detect, cluster and
// extract per-segment bases, printing what each stage recovered.

#include <iomanip>
#include <iostream>

#include <dfsl/dfsl.hpp>

int main(int argc, char** argv)
{
    const std::size_t n_samples = argc > 1 ? std::stoul(argv[1]) : 200;
    const std::uint64_t seed = argc > 2 ? std::stoull(argv[2]) : 1;

    const auto [data, truth] = dfsl::model_I(n_samples, 0.05, seed);
    std::cout << "simulated " << data.n_samples() << " samples, " << data.n_times() << " time points, " << data.n_channels()
              << " channels; true change at index " << truth.change_points.front() << '\n';

    const auto tuned = dfsl::select(data, dfsl::TuningSpec{}, &truth.noise);
    const auto& cell = tuned.best_cell();
    std::cout << "selected rho " << cell.rho << ", lambda0 " << cell.lambda0 << " (fusion " << cell.penalties.lambda1
              << ", sparsity " << cell.penalties.lambda2 << ")\n";

    std::cout << "time-averaged |coefficients| per channel (rows) on each peer (columns):\n" << std::fixed << std::setprecision(3);
    const Eigen::MatrixXd avg = tuned.best_fit.path.mean_abs(0, data.n_times());
    for (Eigen::Index j = 0; j < avg.rows(); ++j) {
        for (Eigen::Index r = 0; r < avg.cols(); ++r) std::cout << std::setw(7) << avg(j, r);
        std::cout << '\n';
    }
    std::cout << std::defaultfloat;
    std::cout << "false subspace rate " << dfsl::false_subspace_rate(tuned.best_fit.path, truth.assignment.front()) << '\n';

    const auto cs = dfsl::detect(tuned.best_fit.path);
    std::cout << "system change points (count >= 1):";
    for (auto k : cs.change_points) std::cout << ' ' << k << " [count " << cs.counts[k] << ']';
    std::cout << "\ndominant change point " << dfsl::dominant_change_point(cs) << '\n';

    dfsl::ClusteringConfig cc;
    cc.k = 2;
    cc.seed = seed;
    const auto model = dfsl::infer(tuned.best_fit.path, truth.change_points, data, cc);
    for (std::size_t s = 0; s < model.segments.size(); ++s) {
        const auto& seg = model.segments[s];
        std::cout << "segment [" << seg.lo << ", " << seg.hi << "): clusters";
        for (auto a : seg.assignment) std::cout << ' ' << a;
        std::cout << " (ARI " << dfsl::adjusted_rand_index(seg.assignment, truth.assignment[s]) << ")\n";
        for (std::size_t l = 0; l < seg.clusters.size(); ++l) {
            const auto& c = seg.clusters[l];
            std::cout << "  cluster " << l << ": " << c.mfpca.basis.cols() << " components";
            // Match against the true subspace of the cluster's first channel.
            const Eigen::MatrixXd& phi = truth.bases[s][truth.assignment[s][c.channels.front()]];
            if (c.mfpca.basis.cols() == phi.cols())
                std::cout << ", aligned basis error " << (dfsl::procrustes_align(c.mfpca.basis, phi).aligned - phi).norm();
            std::cout << '\n';
        }
    }
    return 0;
}
