// Command-line front end: simulate, fit, tune, changepoints, cluster, mfpca, benchmark.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <dfsl/dfsl.hpp>
#include <dfsl/io.hpp>

namespace {

using dfsl::io::json;

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what)
{
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::stringstream is(item);
        T v{};
        if (!(is >> v) || !is.eof()) throw std::invalid_argument(std::string("invalid ") + what + " entry '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument(std::string(what) + " list is empty");
    return out;
}

std::ofstream open_out(const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

dfsl::BasisFamily parse_family(const std::string& name)
{
    if (name == "bspline") return dfsl::BasisFamily::bspline;
    if (name == "fourier") return dfsl::BasisFamily::fourier;
    if (name == "wavelet") return dfsl::BasisFamily::wavelet;
    throw std::invalid_argument("unknown basis family '" + name + "'");
}

/// {"gamma_decay": 0.2, "segments": [{"length": 20, "subspaces": [{"family": "bspline",
///   "width": 3, "channels": [0,1,2,3], "n_patterns": 2, "coeff_decay": 0.5}]}]}
std::pair<std::vector<dfsl::SegmentSpec>, double> parse_custom(const json& cfg)
{
    std::vector<dfsl::SegmentSpec> specs;
    for (const auto& seg : cfg.at("segments")) {
        dfsl::SegmentSpec s;
        s.length = seg.at("length").get<std::size_t>();
        for (const auto& sub : seg.at("subspaces")) {
            dfsl::SubspaceSpec ss;
            ss.basis = dfsl::preset_basis(parse_family(sub.at("family").get<std::string>()), s.length, sub.value("width", std::size_t{3}));
            ss.channels = sub.at("channels").get<std::vector<std::size_t>>();
            ss.n_patterns = sub.value("n_patterns", std::size_t{2});
            ss.coeff_cov = dfsl::ar_covariance(ss.n_patterns, sub.value("coeff_decay", 0.5));
            s.subspaces.push_back(std::move(ss));
        }
        specs.push_back(std::move(s));
    }
    return {specs, cfg.value("gamma_decay", 0.2)};
}

std::optional<dfsl::NoiseModel> load_noise(const std::string& path)
{
    if (path.empty()) return std::nullopt;
    const json j = dfsl::io::read_json(path);
    return dfsl::io::json_noise(j.contains("noise") ? j.at("noise") : j);
}

dfsl::FunctionalDataset load_data(const std::string& path, bool normalize)
{
    auto data = dfsl::read_csv(path);
    return normalize ? dfsl::normalize_channels(data) : data;
}

/// CSV field with embedded quotes doubled.
std::string quoted(const std::string& text)
{
    std::string out = "\"";
    for (char c : text) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + '"';
}

json fit_diagnostics(const dfsl::DfslFit& fit)
{
    json channels = json::array();
    for (const auto& c : fit.channels)
        channels.push_back({{"iterations", c.iterations}, {"converged", c.converged}, {"objective", c.objective}, {"lipschitz", c.lipschitz}});
    return {{"channels", std::move(channels)}};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Dynamic functional subspace learning"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "Worker threads (0 = all cores)");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset and its ground truth");
    std::string sim_model = "I", sim_out, sim_truth, sim_config;
    std::size_t sim_n = 500, sim_ppl = 4;
    double sim_sigma = 0.05;
    std::uint64_t sim_seed = 1;
    sim->add_option("--model", sim_model, "I, II or custom")->check(CLI::IsMember({"I", "II", "custom"}));
    sim->add_option("--n-samples", sim_n, "Number of samples")->check(CLI::PositiveNumber);
    sim->add_option("--sigma", sim_sigma, "Noise scale")->check(CLI::NonNegativeNumber);
    sim->add_option("--seed", sim_seed, "Random seed");
    sim->add_option("--p-per-subspace", sim_ppl, "Channels per subspace (presets)")->check(CLI::PositiveNumber);
    sim->add_option("--config", sim_config, "Segment specification JSON for --model custom");
    sim->add_option("--out", sim_out, "Output CSV")->required();
    sim->add_option("--truth", sim_truth, "Ground-truth JSON");

    // fit
    auto* fit = app.add_subcommand("fit", "Fit the dynamic self-expressive model");
    std::string fit_in, fit_out, fit_noise;
    double lambda1 = 0.0, lambda2 = 0.0, fit_tol = 1e-8;
    std::size_t fit_iter = 5000, fit_outer = 20;
    bool fit_bcd = false, fit_norm = false, fit_static = false;
    fit->add_option("--input", fit_in, "Input CSV")->required();
    fit->add_option("--lambda1", lambda1, "Fusion weight")->check(CLI::NonNegativeNumber);
    fit->add_option("--lambda2", lambda2, "Sparsity weight")->check(CLI::NonNegativeNumber);
    fit->add_flag("--bcd", fit_bcd, "Estimate the noise covariance by block coordinate descent");
    fit->add_flag("--static", fit_static, "Time-constant baseline with sparsity weight --lambda2");
    fit->add_option("--noise", fit_noise, "JSON holding a noise model (truth or model file)");
    fit->add_option("--tol", fit_tol, "Squared coefficient change tolerance")->check(CLI::PositiveNumber);
    fit->add_option("--max-iter", fit_iter, "Maximum iterations per channel")->check(CLI::PositiveNumber);
    fit->add_option("--max-outer", fit_outer, "Maximum BCD iterations")->check(CLI::PositiveNumber);
    fit->add_flag("--normalize", fit_norm, "Scale every (sample, channel) column to unit norm first");
    fit->add_option("--out", fit_out, "Model JSON")->required();

    // tune
    auto* tune = app.add_subcommand("tune", "Select penalties over the (rho, lambda0) grid");
    std::string tune_in, tune_out, tune_model, tune_noise, rho_grid = "0.1,0.3,0.5,0.7,0.9";
    std::size_t n_lambda = 10;
    bool tune_norm = false;
    tune->add_option("--input", tune_in, "Input CSV")->required();
    tune->add_option("--rho-grid", rho_grid, "Comma-separated rho values in (0,1)");
    tune->add_option("--n-lambda", n_lambda, "Candidates per rho")->check(CLI::PositiveNumber);
    tune->add_option("--noise", tune_noise, "JSON holding a noise model");
    tune->add_flag("--normalize", tune_norm, "Scale every (sample, channel) column to unit norm first");
    tune->add_option("--out", tune_out, "Grid CSV")->required();
    tune->add_option("--model-out", tune_model, "Also write the selected fit as model JSON");

    // changepoints
    auto* cps = app.add_subcommand("changepoints", "Detect change points from a fitted model");
    std::string cps_model, cps_out, cps_policy = "count:1";
    double cps_sigma = 3.0;
    cps->add_option("--model", cps_model, "Model JSON")->required();
    cps->add_option("--policy", cps_policy, "System rule count:<c> or sigma:<m>");
    cps->add_option("--channel-sigma", cps_sigma, "Channel threshold multiplier")->check(CLI::NonNegativeNumber);
    cps->add_option("--out", cps_out, "Output JSON")->required();

    // cluster
    auto* clu = app.add_subcommand("cluster", "Cluster channels within each segment");
    std::string clu_model, clu_cps, clu_out, clu_method = "spectral:2", clu_groups;
    std::uint64_t clu_seed = 1;
    clu->add_option("--model", clu_model, "Model JSON")->required();
    clu->add_option("--cps", clu_cps, "Change point JSON (omit for a single segment)");
    clu->add_option("--method", clu_method, "spectral:<k>, hier:<distance> or hiervec:<distance>");
    clu->add_option("--groups", clu_groups, "hiervec pooling: consecutive group size, e.g. 3");
    clu->add_option("--seed", clu_seed, "k-means seed");
    clu->add_option("--out", clu_out, "Output JSON")->required();

    // mfpca
    auto* mf = app.add_subcommand("mfpca", "Smooth functional PCA for every segment and cluster");
    std::string mf_in, mf_sub, mf_out;
    double lambda3 = 1.0, variance = 0.95;
    bool mf_norm = false, mf_scores = false;
    mf->add_option("--input", mf_in, "Input CSV")->required();
    mf->add_option("--subspaces", mf_sub, "Cluster JSON from the cluster command")->required();
    mf->add_option("--lambda3", lambda3, "Smoothness weight")->check(CLI::NonNegativeNumber);
    mf->add_option("--variance", variance, "Cumulative explained variance target")->check(CLI::Range(1e-12, 1.0));
    mf->add_flag("--normalize", mf_norm, "Scale every (sample, channel) column to unit norm first");
    mf->add_flag("--scores", mf_scores, "Include per-sample scores");
    mf->add_option("--out", mf_out, "Output JSON")->required();

    // benchmark
    auto* bench = app.add_subcommand("benchmark", "Simulation study: DFSL versus the static baseline");
    std::string b_model = "I", b_sigmas = "0.05,0.1,0.2,0.3,0.5", b_ns = "500", b_ppl = "4", b_out, b_records, b_noise = "truth";
    std::size_t b_reps = 10, b_test = 50;
    std::uint64_t b_seed = 7;
    bool b_timing = false;
    bench->add_option("--model", b_model, "I or II")->check(CLI::IsMember({"I", "II"}));
    bench->add_option("--sigmas", b_sigmas, "Comma-separated noise scales");
    bench->add_option("--n-train", b_ns, "Comma-separated training sizes");
    bench->add_option("--p-per-subspace", b_ppl, "Comma-separated channels per subspace");
    bench->add_option("--reps", b_reps, "Replications per cell")->check(CLI::PositiveNumber);
    bench->add_option("--test-size", b_test, "Held-out samples per replication")->check(CLI::PositiveNumber);
    bench->add_option("--seed", b_seed, "Base seed");
    bench->add_option("--noise", b_noise, "Noise model used for fitting: truth, white or bcd")->check(CLI::IsMember({"truth", "white", "bcd"}));
    bench->add_flag("--timing", b_timing, "Record wall-clock runtime (output is then not reproducible)");
    bench->add_option("--out", b_out, "Report CSV")->required();
    bench->add_option("--records", b_records, "Per-replication CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*sim) {
            std::pair<dfsl::FunctionalDataset, dfsl::GroundTruth> result = [&] {
                if (sim_model == "custom") {
                    if (sim_config.empty()) throw std::invalid_argument("--model custom requires --config");
                    auto [specs, decay] = parse_custom(dfsl::io::read_json(sim_config));
                    dfsl::SimulationOptions opts;
                    opts.sigma = sim_sigma;
                    opts.seed = sim_seed;
                    opts.gamma_decay = decay;
                    opts.threads = threads;
                    return dfsl::generate(specs, sim_n, opts);
                }
                return dfsl::simulate_model(sim_model, sim_n, sim_sigma, sim_seed, sim_ppl);
            }();
            dfsl::write_csv(result.first, sim_out);
            if (!sim_truth.empty()) dfsl::io::write_json(dfsl::io::truth_json(result.second), sim_truth);
        } else if (*fit) {
            const auto data = load_data(fit_in, fit_norm);
            dfsl::SolverOptions so{.tol = fit_tol, .max_iter = fit_iter, .restart = true, .threads = threads};
            dfsl::io::FittedModel m;
            m.channel_names = data.channel_names();
            m.penalties = {lambda1, lambda2};
            auto noise = load_noise(fit_noise);
            if (fit_static) {
                const auto designs = dfsl::build_designs(data, noise ? &*noise : nullptr, threads);
                const auto st = dfsl::fit_sfsl(designs, lambda2, so);
                m.path = dfsl::CoefficientPath::constant(st.coefficients, data.n_times());
                m.noise = noise;
                m.converged = st.converged;
                m.diagnostics = {{"method", "static"}};
            } else if (fit_bcd) {
                dfsl::BcdOptions bo;
                bo.solver = so;
                bo.max_outer = fit_outer;
                bo.fixed_noise = noise;
                const auto res = dfsl::fit_bcd(data, m.penalties, bo);
                m.path = res.path;
                m.noise = res.noise;
                m.converged = res.converged && res.solver_converged;
                json cov = json::array();
                for (const auto& c : res.covariance) cov.push_back(dfsl::io::matrix_rows(c));
                m.diagnostics = {{"method", "bcd"}, {"outer_iterations", res.outer_iterations}, {"ridge_fallback", res.ridge_fallback},
                                 {"covariance", std::move(cov)}};
            } else {
                const auto res = dfsl::fit_dfsl(data, m.penalties, noise ? &*noise : nullptr, so);
                m.path = res.path;
                m.noise = noise;
                m.converged = res.converged();
                m.diagnostics = fit_diagnostics(res);
            }
            dfsl::io::write_json(dfsl::io::model_json(m), fit_out);
            if (!m.converged) std::cerr << "warning: solver did not converge; see diagnostics in " << fit_out << '\n';
        } else if (*tune) {
            const auto data = load_data(tune_in, tune_norm);
            dfsl::TuningSpec spec;
            spec.rho_values = parse_list<double>(rho_grid, "rho");
            spec.n_lambda = n_lambda;
            spec.solver.threads = threads;
            auto noise = load_noise(tune_noise);
            const auto res = dfsl::select(data, spec, noise ? &*noise : nullptr);
            auto out = open_out(tune_out);
            dfsl::write_grid_csv(res.cells, res.best, out);
            if (!tune_model.empty()) {
                dfsl::io::FittedModel m;
                m.path = res.best_fit.path;
                m.noise = noise;
                m.penalties = res.best_penalties();
                m.channel_names = data.channel_names();
                m.converged = res.best_fit.converged();
                m.diagnostics = fit_diagnostics(res.best_fit);
                m.diagnostics["rho"] = res.best_cell().rho;
                m.diagnostics["lambda0"] = res.best_cell().lambda0;
                dfsl::io::write_json(dfsl::io::model_json(m), tune_model);
            }
        } else if (*cps) {
            const auto m = dfsl::io::json_model(dfsl::io::read_json(cps_model));
            auto policy = dfsl::parse_policy(cps_policy);
            policy.channel_sigma = cps_sigma;
            const auto cs = dfsl::detect(m.path, policy);
            dfsl::io::write_json(dfsl::io::change_score_json(cs, policy), cps_out);
        } else if (*clu) {
            const auto m = dfsl::io::json_model(dfsl::io::read_json(clu_model));
            std::vector<std::size_t> cp;
            if (!clu_cps.empty()) cp = dfsl::io::read_json(clu_cps).at("change_points").get<std::vector<std::size_t>>();
            dfsl::ClusteringConfig cc;
            cc.seed = clu_seed;
            const auto colon = clu_method.find(':');
            const std::string kind = clu_method.substr(0, colon);
            const std::string value = colon == std::string::npos ? "" : clu_method.substr(colon + 1);
            if (kind == "spectral") {
                cc.method = dfsl::ClusterMethod::spectral;
                cc.k = value.empty() ? 2 : parse_list<std::size_t>(value, "k").front();
            } else if (kind == "hier" || kind == "hiervec") {
                cc.method = kind == "hier" ? dfsl::ClusterMethod::hierarchical : dfsl::ClusterMethod::hierarchical_vectors;
                cc.max_within_distance = value.empty() ? 1.4 : parse_list<double>(value, "distance").front();
            } else {
                throw std::invalid_argument("unknown clustering method '" + clu_method + "'");
            }
            if (!clu_groups.empty()) {
                const auto size = parse_list<std::size_t>(clu_groups, "group size").front();
                if (size == 0 || m.path.n_channels() % size != 0) throw std::invalid_argument("--groups must divide the channel count");
                for (std::size_t g = 0; g < m.path.n_channels(); g += size) {
                    std::vector<std::size_t> grp;
                    for (std::size_t j = g; j < g + size; ++j) grp.push_back(j);
                    cc.groups.push_back(std::move(grp));
                }
            }
            json segments = json::array();
            for (const auto& [lo, hi] : dfsl::segments_from(cp, m.path.n_times())) {
                dfsl::SegmentModel seg;
                seg.lo = lo;
                seg.hi = hi;
                seg.affinity = dfsl::segment_affinity(m.path, lo, hi);
                const auto cl = dfsl::cluster_segment(m.path, lo, hi, seg.affinity, cc);
                seg.assignment = cl.assignment;
                seg.warning = cl.warning;
                for (std::size_t l = 0; l < cl.n_clusters; ++l) {
                    dfsl::ClusterBasis cb;
                    for (std::size_t j = 0; j < seg.assignment.size(); ++j)
                        if (seg.assignment[j] == l) cb.channels.push_back(j);
                    seg.clusters.push_back(std::move(cb));
                }
                segments.push_back(dfsl::io::segment_json(seg));
            }
            dfsl::io::write_json({{"format", "dfsl-subspaces"}, {"method", clu_method}, {"segments", std::move(segments)}}, clu_out);
        } else if (*mf) {
            const auto data = load_data(mf_in, mf_norm);
            json sub = dfsl::io::read_json(mf_sub);
            dfsl::MfpcaOptions mo;
            mo.lambda3 = lambda3;
            mo.variance_target = variance;
            for (auto& seg : sub.at("segments")) {
                const auto lo = seg.at("lo").get<std::size_t>(), hi = seg.at("hi").get<std::size_t>();
                for (auto& c : seg.at("clusters")) {
                    const auto channels = c.at("channels").get<std::vector<std::size_t>>();
                    const auto r = dfsl::smooth_mfpca(data.window(lo, hi, channels).samples(), mo);
                    c["mfpca"] = dfsl::io::mfpca_json(r, mf_scores);
                }
            }
            sub["lambda3"] = lambda3;
            sub["variance_target"] = variance;
            dfsl::io::write_json(sub, mf_out);
        } else if (*bench) {
            dfsl::BenchmarkConfig cfg;
            cfg.model = b_model;
            cfg.sigmas = parse_list<double>(b_sigmas, "sigma");
            cfg.n_train = parse_list<std::size_t>(b_ns, "N");
            cfg.p_per_subspace = parse_list<std::size_t>(b_ppl, "p_per_subspace");
            cfg.replications = b_reps;
            cfg.test_size = b_test;
            cfg.seed = b_seed;
            cfg.noise = b_noise == "bcd" ? dfsl::NoiseSource::bcd : b_noise == "white" ? dfsl::NoiseSource::white : dfsl::NoiseSource::truth;
            cfg.timing = b_timing;
            cfg.threads = threads;
            const auto res = dfsl::run_benchmark(cfg);
            auto out = open_out(b_out);
            dfsl::write_report_csv(res.reports, out);
            if (!b_records.empty()) {
                auto rec = open_out(b_records);
                rec << "model,sigma,N,p_per_subspace,replication,method,mse,false_subspace_rate,false_cp,miss_cp,dominant_cp,mean_ari,runtime_s,error\n";
                for (const auto& r : res.records)
                    rec << r.model << ',' << dfsl::format_double(r.sigma) << ',' << r.n_train << ',' << r.p_per_subspace << ','
                        << r.replication << ',' << r.method << ',' << dfsl::format_metric(r.mse) << ','
                        << dfsl::format_metric(r.false_subspace_rate) << ',' << dfsl::format_metric(r.false_cp) << ','
                        << dfsl::format_metric(r.miss_cp) << ',' << r.dominant_cp << ',' << dfsl::format_metric(r.mean_ari) << ','
                        << dfsl::format_metric(r.runtime_s) << ',' << quoted(r.error) << '\n';
            }
            for (const auto& r : res.reports)
                if (r.failures) std::cerr << "warning: " << r.failures << " failed replications in cell sigma=" << r.sigma << " N=" << r.n_train << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
