#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bench.hpp"
#include "changepoint.hpp"
#include "simulate.hpp"
#include "solver.hpp"
#include "subspace.hpp"

namespace dfsl::io {

using json = nlohmann::ordered_json;

inline json matrix_rows(const Eigen::MatrixXd& m)
{
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Columns as arrays (one array per basis function).
inline json matrix_columns(const Eigen::MatrixXd& m) { return matrix_rows(m.transpose()); }

inline Eigen::MatrixXd rows_matrix(const json& rows)
{
    if (!rows.is_array() || rows.empty()) throw std::invalid_argument("expected a non-empty array of rows");
    const auto r = static_cast<Eigen::Index>(rows.size());
    const auto c = static_cast<Eigen::Index>(rows.front().size());
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != c) throw std::invalid_argument("ragged matrix rows");
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
    }
    return m;
}

inline json vector_json(const Eigen::VectorXd& v)
{
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline Eigen::VectorXd json_vector(const json& a)
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
    return v;
}

inline json noise_json(const NoiseModel& noise)
{
    json g = json::array();
    for (const auto& m : noise.gammas()) g.push_back(matrix_rows(m));
    return {{"sigma", vector_json(noise.sigmas())}, {"gamma", std::move(g)}};
}

inline NoiseModel json_noise(const json& j)
{
    std::vector<Eigen::MatrixXd> gammas;
    for (const auto& g : j.at("gamma")) gammas.push_back(rows_matrix(g));
    return NoiseModel(json_vector(j.at("sigma")), std::move(gammas));
}

/// Dense (j, r, k) row-major values with declared shape [p, p, n].
inline json path_json(const CoefficientPath& path)
{
    json values = json::array();
    for (std::size_t j = 0; j < path.n_channels(); ++j)
        for (std::size_t r = 0; r < path.n_channels(); ++r)
            for (std::size_t k = 0; k < path.n_times(); ++k) values.push_back(path(j, r, k));
    return {{"shape", {path.n_channels(), path.n_channels(), path.n_times()}}, {"order", "row-major (channel, peer, time)"},
            {"values", std::move(values)}};
}

inline CoefficientPath json_path(const json& j)
{
    const auto shape = j.at("shape");
    const std::size_t p = shape.at(0).get<std::size_t>(), n = shape.at(2).get<std::size_t>();
    if (shape.at(1).get<std::size_t>() != p) throw std::invalid_argument("coefficient shape must be [p, p, n]");
    const auto& values = j.at("values");
    if (values.size() != p * p * n) throw std::invalid_argument("coefficient values do not match the declared shape");
    std::vector<Eigen::MatrixXd> slices(p, Eigen::MatrixXd(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n)));
    std::size_t idx = 0;
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t r = 0; r < p; ++r)
            for (std::size_t k = 0; k < n; ++k) slices[a](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = values[idx++].get<double>();
    return CoefficientPath(std::move(slices));
}

struct FittedModel
{
    CoefficientPath path;
    std::optional<NoiseModel> noise;
    PenaltyConfig penalties;
    std::vector<std::string> channel_names;
    bool converged = true;
    json diagnostics = json::object();
};

inline json model_json(const FittedModel& m)
{
    json out;
    out["format"] = "dfsl-model";
    out["n_channels"] = m.path.n_channels();
    out["n_times"] = m.path.n_times();
    out["channel_names"] = m.channel_names;
    out["penalties"] = {{"lambda1", m.penalties.lambda1}, {"lambda2", m.penalties.lambda2}};
    out["converged"] = m.converged;
    out["coefficients"] = path_json(m.path);
    out["noise"] = m.noise ? noise_json(*m.noise) : json(nullptr);
    out["diagnostics"] = m.diagnostics;
    return out;
}

inline FittedModel json_model(const json& j)
{
    if (j.value("format", "") != "dfsl-model") throw std::invalid_argument("not a dfsl model file");
    FittedModel m;
    m.path = json_path(j.at("coefficients"));
    if (!j.at("noise").is_null()) m.noise = json_noise(j.at("noise"));
    m.penalties = {j.at("penalties").at("lambda1").get<double>(), j.at("penalties").at("lambda2").get<double>()};
    m.channel_names = j.at("channel_names").get<std::vector<std::string>>();
    m.converged = j.at("converged").get<bool>();
    m.diagnostics = j.value("diagnostics", json::object());
    return m;
}

inline json truth_json(const GroundTruth& t)
{
    json bases = json::array();
    for (const auto& seg : t.bases) {
        json s = json::array();
        for (const auto& b : seg) s.push_back(matrix_columns(b));
        bases.push_back(std::move(s));
    }
    return {{"format", "dfsl-truth"},
            {"change_points", t.change_points},
            {"assignment", t.assignment},
            {"bases", std::move(bases)},
            {"noise", noise_json(t.noise)}};
}

inline json change_score_json(const ChangeScore& cs, const DetectionPolicy& policy)
{
    return {{"format", "dfsl-changepoints"},
            {"policy", to_string(policy)},
            {"channel_sigma", policy.channel_sigma},
            {"change_points", cs.change_points},
            {"unmerged", cs.raw_system},
            {"counts", cs.counts},
            {"thresholds", vector_json(cs.thresholds)},
            {"channel_flags", cs.flags},
            {"scores", matrix_rows(cs.scores)}};
}

inline json mfpca_json(const MfpcaResult& r, bool with_scores)
{
    json out = {{"components", r.n_components()},
                {"basis", matrix_columns(r.basis)},
                {"explained", r.explained},
                {"total_variance", r.total_variance},
                {"converged", r.converged}};
    if (with_scores) {
        json scores = json::array();
        for (const auto& s : r.scores) scores.push_back(matrix_rows(s));
        out["scores"] = std::move(scores);
    }
    return out;
}

inline json segment_json(const SegmentModel& s)
{
    json clusters = json::array();
    for (const auto& c : s.clusters) {
        json cj = {{"channels", c.channels}};
        if (c.mfpca.basis.size()) cj["mfpca"] = mfpca_json(c.mfpca, true);
        clusters.push_back(std::move(cj));
    }
    return {{"lo", s.lo}, {"hi", s.hi}, {"assignment", s.assignment}, {"warning", s.warning},
            {"affinity", matrix_rows(s.affinity)}, {"clusters", std::move(clusters)}};
}

inline json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

inline void write_json(const json& j, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("error writing " + path);
}

} // namespace dfsl::io
