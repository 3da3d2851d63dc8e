#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "recon/backbone.hpp"
#include "recon/clustering.hpp"
#include "recon/data.hpp"
#include "recon/evaluation.hpp"
#include "recon/model.hpp"
#include "recon/reconstruction.hpp"

namespace recon {

using json = nlohmann::json;

// Shortest round-trip decimal form of a double.
inline std::string fmt_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    if (res.ec != std::errc()) throw std::runtime_error("fmt_double: conversion failed");
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\r')) ++pos;
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(context + ": bad number '" + s + "'");
    }
}

inline long parse_int(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(s, &pos);
        while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\r')) ++pos;
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(context + ": bad integer '" + s + "'");
    }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    return f;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    return f;
}

inline void write_text(const std::string& path, const std::string& text) {
    auto f = open_out(path);
    f << text;
    if (!f) throw std::runtime_error("write failed: " + path);
}

// ---- dataset CSV: header label,x0,...,x{d-1} ----

inline void save_dataset(const EmbeddingDataset& ds, const std::string& path) {
    auto f = open_out(path);
    f << "label";
    for (std::size_t j = 0; j < ds.d(); ++j) f << ",x" << j;
    f << "\n";
    for (std::size_t i = 0; i < ds.n(); ++i) {
        f << ds.y[i];
        const double* r = ds.x.row(i);
        for (std::size_t j = 0; j < ds.d(); ++j) f << ',' << fmt_double(r[j]);
        f << "\n";
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline EmbeddingDataset load_dataset(const std::string& path) {
    auto f = open_in(path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error(path + ": empty file");
    const auto header = split_csv_line(line);
    if (header.empty() || header[0] != "label")
        throw std::runtime_error(path + ":1: expected header starting with 'label'");
    const std::size_t d = header.size() - 1;
    if (d == 0) throw std::runtime_error(path + ":1: no feature columns");

    EmbeddingDataset ds;
    std::vector<double> values;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        const std::string ctx = path + ":" + std::to_string(lineno);
        if (cells.size() != d + 1)
            throw std::runtime_error(ctx + ": expected " + std::to_string(d + 1) + " columns, got " +
                                     std::to_string(cells.size()));
        ds.y.push_back(static_cast<int>(parse_int(cells[0], ctx)));
        for (std::size_t j = 0; j < d; ++j) values.push_back(parse_double(cells[j + 1], ctx));
    }
    ds.x = Matrix(ds.y.size(), d);
    ds.x.a = std::move(values);
    if (ds.n() == 0) throw std::runtime_error(path + ": no data rows");
    bool binary_ok = true, multi_ok = true;
    for (int y : ds.y) {
        if (y != 1 && y != -1) binary_ok = false;
        if (y < 0) multi_ok = false;
    }
    if (!binary_ok && !multi_ok) throw std::runtime_error(path + ": unknown label scheme");
    return ds;
}

// Image datasets reuse the dataset CSV with a sidecar JSON {"ch","h","w"}.
inline void save_image_dataset(const ImageDataset& ds, const std::string& path,
                               const std::string& sidecar_path) {
    EmbeddingDataset flat;
    flat.x = ds.s;
    flat.y = ds.y;
    save_dataset(flat, path);
    json j = {{"ch", ds.shape.ch}, {"h", ds.shape.h}, {"w", ds.shape.w}};
    write_text(sidecar_path, j.dump(2) + "\n");
}

inline ImageDataset load_image_dataset(const std::string& path, const std::string& sidecar_path) {
    EmbeddingDataset flat = load_dataset(path);
    auto f = open_in(sidecar_path);
    json j = json::parse(f);
    ImageDataset ds;
    ds.shape = {j.at("ch").get<std::size_t>(), j.at("h").get<std::size_t>(),
                j.at("w").get<std::size_t>()};
    if (ds.shape.pixels() != flat.d())
        throw std::runtime_error(sidecar_path + ": shape does not match CSV width");
    ds.s = std::move(flat.x);
    ds.y = std::move(flat.y);
    return ds;
}

// ---- model JSON ----

inline void save_model(const MlpParams& p, const std::optional<NormStats>& norm,
                       const std::string& path) {
    p.check_shapes();
    json j;
    j["d"] = p.d;
    j["h"] = p.h;
    j["c"] = p.c;
    j["w1"] = p.w1.a;
    j["b1"] = p.b1;
    j["w2"] = p.w2.a;
    // mu and sigma ride with the model; identity stats when data was not normalized
    j["norm_mu"] = norm ? norm->mu : Vec(p.d, 0.0);
    j["norm_sigma"] = norm ? norm->sigma : Vec(p.d, 1.0);
    write_text(path, j.dump() + "\n");
}

struct ModelFile {
    MlpParams params;
    NormStats norm;
};

inline ModelFile load_model(const std::string& path) {
    auto f = open_in(path);
    json j = json::parse(f);
    ModelFile mf;
    mf.params = make_mlp(j.at("d").get<std::size_t>(), j.at("h").get<std::size_t>(),
                         j.at("c").get<std::size_t>());
    mf.params.w1.a = j.at("w1").get<std::vector<double>>();
    mf.params.b1 = j.at("b1").get<std::vector<double>>();
    mf.params.w2.a = j.at("w2").get<std::vector<double>>();
    if (mf.params.w1.a.size() != mf.params.h * mf.params.d ||
        mf.params.b1.size() != mf.params.h ||
        mf.params.w2.a.size() != mf.params.c * mf.params.h)
        throw std::runtime_error(path + ": weight array sizes do not match dims");
    mf.norm.mu = j.at("norm_mu").get<std::vector<double>>();
    mf.norm.sigma = j.at("norm_sigma").get<std::vector<double>>();
    if (mf.norm.mu.size() != mf.params.d || mf.norm.sigma.size() != mf.params.d)
        throw std::runtime_error(path + ": normalization stats have wrong length");
    return mf;
}

// ---- backbone JSON ----

inline void save_backbone(const ToyBackbone& bb, const std::string& path) {
    json j;
    j["ch"] = bb.shape.ch;
    j["h"] = bb.shape.h;
    j["w"] = bb.shape.w;
    j["d"] = bb.d;
    j["k"] = bb.k;
    j["seed"] = bb.seed;
    j["a1"] = bb.a1.a;
    j["c1"] = bb.c1;
    j["a2"] = bb.a2.a;
    write_text(path, j.dump() + "\n");
}

inline ToyBackbone load_backbone(const std::string& path) {
    auto f = open_in(path);
    json j = json::parse(f);
    ToyBackbone bb;
    bb.shape = {j.at("ch").get<std::size_t>(), j.at("h").get<std::size_t>(),
                j.at("w").get<std::size_t>()};
    bb.d = j.at("d").get<std::size_t>();
    bb.k = j.at("k").get<std::size_t>();
    bb.seed = j.at("seed").get<std::uint64_t>();
    bb.a1 = Matrix(bb.k, bb.shape.pixels());
    bb.a1.a = j.at("a1").get<std::vector<double>>();
    bb.c1 = j.at("c1").get<std::vector<double>>();
    bb.a2 = Matrix(bb.d, bb.k);
    bb.a2.a = j.at("a2").get<std::vector<double>>();
    if (bb.a1.a.size() != bb.k * bb.shape.pixels() || bb.c1.size() != bb.k ||
        bb.a2.a.size() != bb.d * bb.k)
        throw std::runtime_error(path + ": weight array sizes do not match dims");
    return bb;
}

// ---- candidate pool CSV: run_id,cand_id,lambda,label,final_loss,x0..x{d-1} ----

inline void save_pools(const std::vector<CandidatePool>& pools, const std::string& path) {
    if (pools.empty()) throw std::invalid_argument("save_pools: nothing to save");
    const std::size_t d = pools.front().d();
    auto f = open_out(path);
    f << "run_id,cand_id,lambda,label,final_loss";
    for (std::size_t j = 0; j < d; ++j) f << ",x" << j;
    f << "\n";
    for (const auto& pool : pools) {
        for (std::size_t i = 0; i < pool.m(); ++i) {
            f << pool.run_id << ',' << i << ',' << fmt_double(pool.lambda[i]) << ',' << pool.y[i]
              << ',' << fmt_double(pool.failed ? std::numeric_limits<double>::quiet_NaN() : pool.final_loss);
            const double* r = pool.xhat.row(i);
            for (std::size_t j = 0; j < d; ++j) f << ',' << fmt_double(r[j]);
            f << "\n";
        }
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::vector<CandidatePool> load_pools(const std::string& path) {
    auto f = open_in(path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error(path + ": empty file");
    const auto header = split_csv_line(line);
    if (header.size() < 6 || header[0] != "run_id")
        throw std::runtime_error(path + ":1: bad pool header");
    const std::size_t d = header.size() - 5;

    struct Row {
        int run;
        double lambda, loss;
        int label;
        Vec x;
    };
    std::vector<Row> rows;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        const std::string ctx = path + ":" + std::to_string(lineno);
        if (cells.size() != d + 5) throw std::runtime_error(ctx + ": wrong column count");
        Row r;
        r.run = static_cast<int>(parse_int(cells[0], ctx));
        r.lambda = parse_double(cells[2], ctx);
        r.label = static_cast<int>(parse_int(cells[3], ctx));
        r.loss = parse_double(cells[4], ctx);
        r.x.resize(d);
        for (std::size_t j = 0; j < d; ++j) r.x[j] = parse_double(cells[j + 5], ctx);
        rows.push_back(std::move(r));
    }
    std::vector<CandidatePool> pools;
    for (const auto& r : rows) {
        if (pools.empty() || pools.back().run_id != r.run) {
            CandidatePool p;
            p.run_id = r.run;
            p.xhat = Matrix(0, d);
            pools.push_back(std::move(p));
        }
        CandidatePool& p = pools.back();
        p.lambda.push_back(r.lambda);
        p.y.push_back(r.label);
        p.final_loss = r.loss;
        p.failed = !std::isfinite(r.loss);
        p.xhat.a.insert(p.xhat.a.end(), r.x.begin(), r.x.end());
        p.xhat.rows += 1;
        p.xhat.cols = d;
    }
    return pools;
}

// plain numeric matrix CSV with x0.. header (inversion targets, images out)
inline void save_matrix_csv(const Matrix& m, const std::string& path, const std::string& prefix = "x") {
    auto f = open_out(path);
    for (std::size_t j = 0; j < m.cols; ++j) f << (j ? "," : "") << prefix << j;
    f << "\n";
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* r = m.row(i);
        for (std::size_t j = 0; j < m.cols; ++j) f << (j ? "," : "") << fmt_double(r[j]);
        f << "\n";
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline Matrix load_matrix_csv(const std::string& path) {
    auto f = open_in(path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error(path + ": empty file");
    const std::size_t d = split_csv_line(line).size();
    std::vector<double> values;
    std::size_t rows = 0, lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        const std::string ctx = path + ":" + std::to_string(lineno);
        if (cells.size() != d) throw std::runtime_error(ctx + ": wrong column count");
        for (const auto& cell : cells) values.push_back(parse_double(cell, ctx));
        ++rows;
    }
    Matrix m(rows, d);
    m.a = std::move(values);
    return m;
}

// ---- sweep spec JSON (flat keys mirroring SweepSpec) ----

inline json sweep_spec_to_json(const SweepSpec& s) {
    return json{{"runs", s.runs},
                {"m", s.m},
                {"iterations", s.iterations},
                {"penalty_weight", s.penalty_weight},
                {"master_seed", s.master_seed},
                {"lr_min", s.lr_min},
                {"lr_max", s.lr_max},
                {"sigma_min", s.sigma_min},
                {"sigma_max", s.sigma_max},
                {"lambda_min_lo", s.lambda_min_lo},
                {"lambda_min_hi", s.lambda_min_hi},
                {"alpha_lo", s.alpha_lo},
                {"alpha_hi", s.alpha_hi}};
}

inline SweepSpec sweep_spec_from_json(const json& j) {
    SweepSpec s;
    if (j.contains("runs")) s.runs = j["runs"].get<std::size_t>();
    if (j.contains("m")) s.m = j["m"].get<std::size_t>();
    if (j.contains("iterations")) s.iterations = j["iterations"].get<std::size_t>();
    if (j.contains("penalty_weight")) s.penalty_weight = j["penalty_weight"].get<double>();
    if (j.contains("master_seed")) s.master_seed = j["master_seed"].get<std::uint64_t>();
    if (j.contains("lr_min")) s.lr_min = j["lr_min"].get<double>();
    if (j.contains("lr_max")) s.lr_max = j["lr_max"].get<double>();
    if (j.contains("sigma_min")) s.sigma_min = j["sigma_min"].get<double>();
    if (j.contains("sigma_max")) s.sigma_max = j["sigma_max"].get<double>();
    if (j.contains("lambda_min_lo")) s.lambda_min_lo = j["lambda_min_lo"].get<double>();
    if (j.contains("lambda_min_hi")) s.lambda_min_hi = j["lambda_min_hi"].get<double>();
    if (j.contains("alpha_lo")) s.alpha_lo = j["alpha_lo"].get<double>();
    if (j.contains("alpha_hi")) s.alpha_hi = j["alpha_hi"].get<double>();
    return s;
}

// ---- evaluation outputs ----

inline void save_eval_csv(const EvalReport& report, const std::string& path) {
    auto f = open_out(path);
    f << "train_index,label,best_run,best_candidate,best_cosine,ssim\n";
    for (const auto& r : report.rows) {
        f << r.train_index << ',' << r.label << ',' << r.best_run << ',' << r.best_candidate << ','
          << fmt_double(r.best_cosine) << ',' << (r.ssim ? fmt_double(*r.ssim) : "") << "\n";
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline void save_clusters_csv(const ClusterResult& cr, const std::string& path) {
    auto f = open_out(path);
    f << "cand_id,cluster_id\n";
    for (std::size_t i = 0; i < cr.assignment.size(); ++i) f << i << ',' << cr.assignment[i] << "\n";
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline void save_representatives_csv(const std::vector<Representative>& reps, std::size_t d,
                                     const std::string& path) {
    auto f = open_out(path);
    f << "cluster_id,size";
    for (std::size_t j = 0; j < d; ++j) f << ",x" << j;
    f << "\n";
    for (const auto& r : reps) {
        f << r.cluster_id << ',' << r.size;
        for (std::size_t j = 0; j < d; ++j) f << ',' << fmt_double(r.vec[j]);
        f << "\n";
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace recon
