// recon: training-data reconstruction toolkit for MLPs trained on embeddings.
// Subcommands cover the whole pipeline: data generation, victim training,
// KKT-residual reconstruction, clustering-based identification, toy-backbone
// inversion and evaluation/reporting.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "recon/experiments.hpp"
#include "recon/io.hpp"

namespace fs = std::filesystem;
using recon::json;

namespace {

#ifndef RECON_GIT_DESCRIBE
#define RECON_GIT_DESCRIBE "unknown"
#endif

std::string version_string() { return std::string("recon 0.1.0 (") + RECON_GIT_DESCRIBE + ")"; }

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

// Every artifact-producing command writes one manifest alongside its
// primary output.
void write_manifest(const std::string& subcommand, const json& config,
                    const std::vector<std::uint64_t>& seeds, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, double wall_s) {
    if (outputs.empty()) return;
    json j;
    j["subcommand"] = subcommand;
    j["version"] = version_string();
    j["config"] = config;
    j["seeds"] = seeds;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["wall_time_s"] = wall_s;
    recon::write_text(outputs.front() + ".manifest.json", j.dump(2) + "\n");
}

// defaults < config file < flags
json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    auto f = recon::open_in(path);
    return json::parse(f);
}

template <typename T>
void merge_cfg(const CLI::App& app, const json& cfg, const std::string& flag,
               const std::string& key, T& value) {
    if (app.count(flag) > 0) return;
    if (cfg.contains(key)) value = cfg[key].get<T>();
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
    std::vector<std::size_t> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            out.push_back(std::stoul(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) out.push_back(std::stoul(cur));
    if (out.empty()) throw CLI::ValidationError("empty list");
    return out;
}

recon::EmbeddingDataset load_normalized_for_model(const std::string& data_path,
                                                  const recon::ModelFile& mf) {
    recon::EmbeddingDataset ds = recon::load_dataset(data_path);
    ds.x = recon::apply_normalization(ds.x, mf.norm);
    ds.norm = mf.norm;
    return ds;
}

recon::Matrix stack_pools(const std::vector<recon::CandidatePool>& pools) {
    std::size_t m = 0;
    const std::size_t d = pools.front().d();
    for (const auto& p : pools) m += p.m();
    recon::Matrix out(m, d);
    std::size_t row = 0;
    for (const auto& p : pools)
        for (std::size_t i = 0; i < p.m(); ++i, ++row)
            std::copy(p.xhat.row(i), p.xhat.row(i) + d, out.row(row));
    return out;
}

int run_gen_data(const std::string& kind, std::size_t n, std::size_t d, std::size_t c, double sep,
                 const std::string& shape_str, std::size_t embed_dim, std::size_t backbone_k,
                 std::uint64_t backbone_seed, std::uint64_t seed, const std::string& out,
                 const std::string& out_images, const std::string& out_backbone, const json& cfg_used) {
    Stopwatch sw;
    if (kind == "mixture") {
        const auto ds = recon::gen_gaussian_mixture(n, d, c, sep, seed);
        recon::save_dataset(ds, out);
        write_manifest("gen-data", cfg_used, {seed}, {}, {out}, sw.seconds());
        std::cout << "wrote " << out << " (n=" << ds.n() << ", d=" << ds.d() << ")\n";
        return 0;
    }
    const auto sizes = parse_size_list(shape_str);
    if (sizes.size() != 3) throw CLI::ValidationError("--shape must be ch,h,w");
    const recon::ImageShape shape{sizes[0], sizes[1], sizes[2]};
    const auto imgs = recon::gen_toy_images(n, shape, c, seed);
    if (kind == "toy-images") {
        recon::save_image_dataset(imgs, out, out + ".shape.json");
        write_manifest("gen-data", cfg_used, {seed}, {}, {out, out + ".shape.json"}, sw.seconds());
        std::cout << "wrote " << out << " (n=" << imgs.s.rows << ", " << shape.ch << "x" << shape.h
                  << "x" << shape.w << ")\n";
        return 0;
    }
    if (kind != "embedded") throw CLI::ValidationError("--kind must be mixture|toy-images|embedded");
    const auto bb = recon::make_toy_backbone(shape, embed_dim, backbone_k, backbone_seed);
    recon::EmbeddingDataset ds;
    ds.x = recon::embed(bb, imgs.s);
    ds.y = imgs.y;
    recon::save_dataset(ds, out);
    recon::save_image_dataset(imgs, out_images, out_images + ".shape.json");
    recon::save_backbone(bb, out_backbone);
    write_manifest("gen-data", cfg_used, {seed, backbone_seed}, {},
                   {out, out_images, out_images + ".shape.json", out_backbone}, sw.seconds());
    std::cout << "wrote " << out << ", " << out_images << ", " << out_backbone << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{version_string() + " - training-data reconstruction toolkit"};
    app.require_subcommand(1);

    try {
        // ---- gen-data ----
        auto* gen = app.add_subcommand("gen-data", "generate synthetic datasets");
        std::string g_kind = "mixture", g_out = "dataset.csv", g_out_images = "images.csv";
        std::string g_out_backbone = "backbone.json", g_shape = "3,16,16", g_config;
        std::size_t g_n = 20, g_d = 16, g_c = 2, g_embed_dim = 64, g_backbone_k = 256;
        double g_sep = 3.0;
        std::uint64_t g_seed = 1, g_backbone_seed = 21;
        gen->add_option("--config", g_config, "JSON config file");
        gen->add_option("--kind", g_kind, "mixture|toy-images|embedded");
        gen->add_option("--n", g_n, "number of samples");
        gen->add_option("--d", g_d, "embedding dimension (mixture)");
        gen->add_option("--c", g_c, "number of classes");
        gen->add_option("--sep", g_sep, "class separation (mixture)");
        gen->add_option("--shape", g_shape, "image shape ch,h,w");
        gen->add_option("--embed-dim", g_embed_dim, "backbone output dim (embedded)");
        gen->add_option("--backbone-k", g_backbone_k, "backbone hidden width (embedded)");
        gen->add_option("--backbone-seed", g_backbone_seed, "backbone weight seed (embedded)");
        gen->add_option("--seed", g_seed, "data seed");
        gen->add_option("--out", g_out, "output dataset CSV");
        gen->add_option("--out-images", g_out_images, "output image CSV (embedded)");
        gen->add_option("--out-backbone", g_out_backbone, "output backbone JSON (embedded)");

        // ---- train ----
        auto* tr = app.add_subcommand("train", "train the victim MLP with full-batch GD");
        std::string t_data, t_out = "model.json", t_history = "history.csv", t_ckpt_dir, t_config;
        std::size_t t_h = 500, t_c = 1, t_epochs = 10000, t_ckpt_every = 0;
        double t_lr = 0.01, t_wd = 0.08;
        std::uint64_t t_seed = 0;
        bool t_no_normalize = false;
        tr->add_option("--config", t_config, "JSON config file");
        tr->add_option("--data", t_data, "dataset CSV")->required();
        tr->add_option("--hidden", t_h, "hidden width");
        tr->add_option("--c", t_c, "output count (1 = binary)");
        tr->add_option("--lr", t_lr, "learning rate");
        tr->add_option("--epochs", t_epochs, "epochs");
        tr->add_option("--wd", t_wd, "weight decay");
        tr->add_option("--seed", t_seed, "init seed");
        tr->add_option("--checkpoint-every", t_ckpt_every, "checkpoint cadence (0 = off)");
        tr->add_option("--checkpoint-dir", t_ckpt_dir, "directory for checkpoint models");
        tr->add_flag("--no-normalize", t_no_normalize, "train on raw embeddings");
        tr->add_option("--out", t_out, "output model JSON");
        tr->add_option("--history", t_history, "output loss history CSV");

        // ---- reconstruct ----
        auto* rc = app.add_subcommand("reconstruct", "single reconstruction run");
        std::string r_model, r_out = "pool.csv", r_config;
        recon::ReconConfig r_cfg;
        rc->add_option("--config", r_config, "JSON config file");
        rc->add_option("--model", r_model, "model JSON")->required();
        rc->add_option("--m", r_cfg.m, "candidate count");
        rc->add_option("--sigma", r_cfg.sigma, "candidate init std");
        rc->add_option("--lr", r_cfg.lr, "step size");
        rc->add_option("--lambda-min", r_cfg.lambda_min, "lambda floor");
        rc->add_option("--alpha", r_cfg.alpha, "soft-backward alpha");
        rc->add_option("--iterations", r_cfg.iterations, "GD iterations");
        rc->add_option("--penalty-weight", r_cfg.penalty_weight, "floor penalty weight");
        rc->add_option("--seed", r_cfg.seed, "run seed");
        rc->add_option("--out", r_out, "output pool CSV");

        // ---- sweep ----
        auto* sw_cmd = app.add_subcommand("sweep", "randomized hyperparameter sweep of runs");
        std::string s_model, s_out = "pool.csv", s_spec, s_config;
        recon::SweepSpec s_sp;
        std::size_t s_workers = 1;
        sw_cmd->add_option("--config", s_config, "JSON config file");
        sw_cmd->add_option("--model", s_model, "model JSON")->required();
        sw_cmd->add_option("--spec", s_spec, "sweep spec JSON");
        sw_cmd->add_option("--runs", s_sp.runs, "number of runs");
        sw_cmd->add_option("--m", s_sp.m, "candidates per run");
        sw_cmd->add_option("--iterations", s_sp.iterations, "GD iterations per run");
        sw_cmd->add_option("--penalty-weight", s_sp.penalty_weight, "floor penalty weight");
        sw_cmd->add_option("--seed", s_sp.master_seed, "master seed");
        sw_cmd->add_option("--workers", s_workers, "parallel workers");
        sw_cmd->add_option("--out", s_out, "output pool CSV");

        // ---- cluster ----
        auto* cl = app.add_subcommand("cluster", "agglomerative clustering of a candidate pool");
        std::string c_pool, c_out_clusters = "clusters.csv", c_out_reps = "representatives.csv";
        std::string c_mode = "mean", c_config;
        std::size_t c_maxclust = 1000, c_k_largest = 45;
        cl->add_option("--config", c_config, "JSON config file");
        cl->add_option("--pool", c_pool, "pool CSV")->required();
        cl->add_option("--maxclust", c_maxclust, "number of clusters to cut into");
        cl->add_option("--k-largest", c_k_largest, "representatives from the k largest clusters");
        cl->add_option("--mode", c_mode, "mean|nearest");
        cl->add_option("--out-clusters", c_out_clusters, "assignment CSV");
        cl->add_option("--out-representatives", c_out_reps, "representatives CSV");

        // ---- invert ----
        auto* inv = app.add_subcommand("invert", "invert embeddings through the toy backbone");
        std::string i_backbone, i_embeddings, i_out = "inverted.csv", i_trace = "trace.csv";
        std::string i_objective = "cosine", i_config;
        recon::InversionConfig i_cfg;
        std::size_t i_workers = 1;
        inv->add_option("--config", i_config, "JSON config file");
        inv->add_option("--backbone", i_backbone, "backbone JSON")->required();
        inv->add_option("--embeddings", i_embeddings, "targets CSV (x0..)")->required();
        inv->add_option("--objective", i_objective, "cosine|mse");
        inv->add_option("--lr", i_cfg.lr, "step size");
        inv->add_option("--iterations", i_cfg.iterations, "iterations");
        inv->add_option("--tv-weight", i_cfg.tv_weight, "smoothness penalty weight");
        inv->add_flag("--box", i_cfg.box_constrain, "clamp pixels to [0,1] each step");
        inv->add_option("--seed", i_cfg.seed, "init seed");
        inv->add_option("--workers", i_workers, "parallel workers");
        inv->add_option("--out", i_out, "output images CSV");
        inv->add_option("--trace", i_trace, "objective trace CSV");

        // ---- evaluate ----
        auto* ev = app.add_subcommand("evaluate", "match candidates against training data");
        std::string e_model, e_data, e_out_eval = "eval.csv", e_out_summary = "summary.json";
        std::string e_out_topk = "topk.csv", e_out_reverse, e_config;
        std::vector<std::string> e_pools;
        bool e_no_label_filter = false;
        std::size_t e_top_k = 40;
        double e_cos_thr = 0.75;
        ev->add_option("--config", e_config, "JSON config file");
        ev->add_option("--model", e_model, "model JSON")->required();
        ev->add_option("--data", e_data, "training dataset CSV (raw)")->required();
        ev->add_option("--pool", e_pools, "pool CSV (repeatable)")->required();
        ev->add_flag("--no-label-filter", e_no_label_filter, "match across labels");
        ev->add_option("--top-k", e_top_k, "top matches kept for inversion");
        ev->add_option("--cosine-threshold", e_cos_thr, "good-reconstruction threshold");
        ev->add_option("--out-eval", e_out_eval, "per-sample rows CSV");
        ev->add_option("--out-summary", e_out_summary, "summary JSON");
        ev->add_option("--out-topk", e_out_topk, "top-k candidates CSV (raw embedding space)");
        ev->add_option("--out-reverse", e_out_reverse,
                       "diagnostic candidate->train matching CSV (optional)");

        // ---- report ----
        auto* rp = app.add_subcommand("report", "plot-ready CSVs (margin vs cosine, grid)");
        std::string p_model, p_data, p_grid_in, p_out_fig5 = "fig5_margin_cosine.csv";
        std::string p_out_fig10 = "fig10_grid.csv", p_config;
        std::vector<std::string> p_pools;
        rp->add_option("--config", p_config, "JSON config file");
        rp->add_option("--model", p_model, "model JSON");
        rp->add_option("--data", p_data, "training dataset CSV (raw)");
        rp->add_option("--pool", p_pools, "pool CSV (repeatable)");
        rp->add_option("--grid-csv", p_grid_in, "grid experiment CSV to reshape");
        rp->add_option("--out-fig5", p_out_fig5, "margin/cosine plot data");
        rp->add_option("--out-fig10", p_out_fig10, "grid plot data");

        // ---- grid ----
        auto* gr = app.add_subcommand("grid", "width x dataset-size reconstructability grid");
        std::string gr_widths = "100,200", gr_sizes = "10,20", gr_out = "grid.csv", gr_config;
        recon::GridBaseConfig gr_base;
        gr_base.train.epochs = 20000;
        gr_base.train.weight_decay = 0.08;
        gr_base.attack.sweep.runs = 8;
        gr_base.attack.sweep.m = 100;
        gr_base.attack.sweep.iterations = 4000;
        std::size_t gr_workers = 1;
        gr->add_option("--config", gr_config, "JSON config file");
        gr->add_option("--widths", gr_widths, "comma-separated hidden widths");
        gr->add_option("--sizes", gr_sizes, "comma-separated training-set sizes");
        gr->add_option("--d", gr_base.d, "embedding dimension");
        gr->add_option("--c", gr_base.classes, "classes");
        gr->add_option("--sep", gr_base.class_sep, "class separation");
        gr->add_option("--data-seed", gr_base.data_seed, "data seed");
        gr->add_option("--lr", gr_base.train.lr, "train lr");
        gr->add_option("--epochs", gr_base.train.epochs, "train epochs");
        gr->add_option("--wd", gr_base.train.weight_decay, "train weight decay");
        gr->add_option("--train-seed", gr_base.train.seed, "train seed");
        gr->add_option("--runs", gr_base.attack.sweep.runs, "sweep runs per cell");
        gr->add_option("--m", gr_base.attack.sweep.m, "candidates per run");
        gr->add_option("--iterations", gr_base.attack.sweep.iterations, "recon iterations");
        gr->add_option("--sweep-seed", gr_base.attack.sweep.master_seed, "sweep master seed");
        gr->add_option("--cosine-threshold", gr_base.attack.cosine_threshold, "good threshold");
        gr->add_option("--workers", gr_workers, "parallel workers");
        gr->add_option("--out", gr_out, "output CSV");

        // ---- iters ----
        auto* it_cmd = app.add_subcommand("iters", "reconstructability across training checkpoints");
        std::string it_data, it_test, it_out = "iters.csv", it_config;
        std::size_t it_h = 200, it_c = 1, it_epochs = 10000, it_every = 1000;
        double it_lr = 0.01, it_wd = 0.08;
        std::uint64_t it_train_seed = 0;
        recon::AttackConfig it_attack;
        it_attack.sweep.runs = 8;
        it_attack.sweep.m = 100;
        it_attack.sweep.iterations = 4000;
        std::size_t it_workers = 1;
        bool it_no_normalize = false;
        it_cmd->add_option("--config", it_config, "JSON config file");
        it_cmd->add_option("--data", it_data, "training dataset CSV")->required();
        it_cmd->add_option("--test-data", it_test, "held-out dataset CSV")->required();
        it_cmd->add_option("--hidden", it_h, "hidden width");
        it_cmd->add_option("--c", it_c, "output count");
        it_cmd->add_option("--lr", it_lr, "train lr");
        it_cmd->add_option("--epochs", it_epochs, "train epochs");
        it_cmd->add_option("--wd", it_wd, "train weight decay");
        it_cmd->add_option("--train-seed", it_train_seed, "train seed");
        it_cmd->add_option("--checkpoint-every", it_every, "checkpoint cadence");
        it_cmd->add_flag("--no-normalize", it_no_normalize, "skip embedding normalization");
        it_cmd->add_option("--runs", it_attack.sweep.runs, "sweep runs per checkpoint");
        it_cmd->add_option("--m", it_attack.sweep.m, "candidates per run");
        it_cmd->add_option("--iterations", it_attack.sweep.iterations, "recon iterations");
        it_cmd->add_option("--sweep-seed", it_attack.sweep.master_seed, "sweep master seed");
        it_cmd->add_option("--cosine-threshold", it_attack.cosine_threshold, "good threshold");
        it_cmd->add_option("--workers", it_workers, "parallel workers");
        it_cmd->add_option("--out", it_out, "output CSV");

        // ---- am-baseline ----
        auto* am = app.add_subcommand("am-baseline", "activation-maximization baseline candidates");
        std::string a_model, a_out = "am_candidates.csv", a_config;
        int a_label = 1;
        std::size_t a_count = 100, a_iterations = 1000;
        double a_lr = 0.01;
        std::uint64_t a_seed = 0;
        am->add_option("--config", a_config, "JSON config file");
        am->add_option("--model", a_model, "model JSON")->required();
        am->add_option("--label", a_label, "target label");
        am->add_option("--count", a_count, "candidate count");
        am->add_option("--lr", a_lr, "step size");
        am->add_option("--iterations", a_iterations, "iterations");
        am->add_option("--seed", a_seed, "init seed");
        am->add_option("--out", a_out, "output candidates CSV");

        CLI11_PARSE(app, argc, argv);

        if (gen->parsed()) {
            const json cfg = load_config_file(g_config);
            merge_cfg(*gen, cfg, "--kind", "kind", g_kind);
            merge_cfg(*gen, cfg, "--n", "n", g_n);
            merge_cfg(*gen, cfg, "--d", "d", g_d);
            merge_cfg(*gen, cfg, "--c", "c", g_c);
            merge_cfg(*gen, cfg, "--sep", "sep", g_sep);
            merge_cfg(*gen, cfg, "--seed", "seed", g_seed);
            merge_cfg(*gen, cfg, "--shape", "shape", g_shape);
            json used = {{"kind", g_kind}, {"n", g_n},     {"d", g_d},
                         {"c", g_c},       {"sep", g_sep}, {"seed", g_seed},
                         {"shape", g_shape}};
            return run_gen_data(g_kind, g_n, g_d, g_c, g_sep, g_shape, g_embed_dim, g_backbone_k,
                                g_backbone_seed, g_seed, g_out, g_out_images, g_out_backbone, used);
        }

        if (tr->parsed()) {
            Stopwatch swatch;
            const json cfg = load_config_file(t_config);
            merge_cfg(*tr, cfg, "--hidden", "h", t_h);
            merge_cfg(*tr, cfg, "--c", "c", t_c);
            merge_cfg(*tr, cfg, "--lr", "lr", t_lr);
            merge_cfg(*tr, cfg, "--epochs", "epochs", t_epochs);
            merge_cfg(*tr, cfg, "--wd", "wd", t_wd);
            merge_cfg(*tr, cfg, "--seed", "seed", t_seed);
            merge_cfg(*tr, cfg, "--checkpoint-every", "checkpoint_every", t_ckpt_every);
            recon::EmbeddingDataset ds = recon::load_dataset(t_data);
            std::optional<recon::NormStats> stats;
            if (!t_no_normalize) {
                auto [xn, st] = recon::normalize(ds.x);
                ds.x = std::move(xn);
                ds.norm = st;
                stats = st;
            }
            recon::TrainConfig tc;
            tc.lr = t_lr;
            tc.epochs = t_epochs;
            tc.weight_decay = t_wd;
            tc.c = t_c;
            tc.checkpoint_every = t_ckpt_every;
            tc.seed = t_seed;
            auto [params, report] = recon::train(ds, ds.d(), t_h, t_c, tc);
            recon::save_model(params, stats, t_out);
            {
                auto f = recon::open_out(t_history);
                f << "epoch,loss,train_acc\n";
                for (const auto& row : report.history)
                    f << row.epoch << ',' << recon::fmt_double(row.loss) << ','
                      << recon::fmt_double(row.train_acc) << "\n";
            }
            std::vector<std::string> outputs = {t_out, t_history};
            if (t_ckpt_every > 0 && !t_ckpt_dir.empty()) {
                fs::create_directories(t_ckpt_dir);
                for (const auto& [epoch, ck] : report.checkpoints) {
                    const std::string path =
                        (fs::path(t_ckpt_dir) / ("model_epoch_" + std::to_string(epoch) + ".json"))
                            .string();
                    recon::save_model(ck, stats, path);
                    outputs.push_back(path);
                }
            }
            json used = {{"h", t_h},          {"c", t_c},
                         {"lr", t_lr},        {"epochs", t_epochs},
                         {"wd", t_wd},        {"seed", t_seed},
                         {"normalize", !t_no_normalize}, {"checkpoint_every", t_ckpt_every}};
            write_manifest("train", used, {t_seed}, {t_data}, outputs, swatch.seconds());
            std::cout << "final train acc " << report.final_train_acc << ", model -> " << t_out
                      << "\n";
            return 0;
        }

        if (rc->parsed()) {
            Stopwatch swatch;
            const json cfg = load_config_file(r_config);
            merge_cfg(*rc, cfg, "--m", "m", r_cfg.m);
            merge_cfg(*rc, cfg, "--sigma", "sigma", r_cfg.sigma);
            merge_cfg(*rc, cfg, "--lr", "lr", r_cfg.lr);
            merge_cfg(*rc, cfg, "--lambda-min", "lambda_min", r_cfg.lambda_min);
            merge_cfg(*rc, cfg, "--alpha", "alpha", r_cfg.alpha);
            merge_cfg(*rc, cfg, "--iterations", "iterations", r_cfg.iterations);
            merge_cfg(*rc, cfg, "--penalty-weight", "penalty_weight", r_cfg.penalty_weight);
            merge_cfg(*rc, cfg, "--seed", "seed", r_cfg.seed);
            const recon::ModelFile mf = recon::load_model(r_model);
            auto pool = recon::run_reconstruction(mf.params, r_cfg, recon::pool_classes(mf.params));
            recon::save_pools({pool}, r_out);
            json used = {{"m", r_cfg.m},
                         {"sigma", r_cfg.sigma},
                         {"lr", r_cfg.lr},
                         {"lambda_min", r_cfg.lambda_min},
                         {"alpha", r_cfg.alpha},
                         {"iterations", r_cfg.iterations},
                         {"penalty_weight", r_cfg.penalty_weight},
                         {"seed", r_cfg.seed}};
            write_manifest("reconstruct", used, {r_cfg.seed}, {r_model}, {r_out}, swatch.seconds());
            std::cout << "final loss " << pool.final_loss << (pool.failed ? " (failed)" : "")
                      << ", pool -> " << r_out << "\n";
            return 0;
        }

        if (sw_cmd->parsed()) {
            Stopwatch swatch;
            const json cfg = load_config_file(s_config);
            if (!s_spec.empty()) {
                auto f = recon::open_in(s_spec);
                const json spec_json = json::parse(f);
                recon::SweepSpec from_file = recon::sweep_spec_from_json(spec_json);
                // flags still override spec-file values
                if (sw_cmd->count("--runs") == 0) s_sp.runs = from_file.runs;
                if (sw_cmd->count("--m") == 0) s_sp.m = from_file.m;
                if (sw_cmd->count("--iterations") == 0) s_sp.iterations = from_file.iterations;
                if (sw_cmd->count("--penalty-weight") == 0)
                    s_sp.penalty_weight = from_file.penalty_weight;
                if (sw_cmd->count("--seed") == 0) s_sp.master_seed = from_file.master_seed;
                s_sp.lr_min = from_file.lr_min;
                s_sp.lr_max = from_file.lr_max;
                s_sp.sigma_min = from_file.sigma_min;
                s_sp.sigma_max = from_file.sigma_max;
                s_sp.lambda_min_lo = from_file.lambda_min_lo;
                s_sp.lambda_min_hi = from_file.lambda_min_hi;
                s_sp.alpha_lo = from_file.alpha_lo;
                s_sp.alpha_hi = from_file.alpha_hi;
            }
            merge_cfg(*sw_cmd, cfg, "--runs", "runs", s_sp.runs);
            merge_cfg(*sw_cmd, cfg, "--m", "m", s_sp.m);
            merge_cfg(*sw_cmd, cfg, "--iterations", "iterations", s_sp.iterations);
            merge_cfg(*sw_cmd, cfg, "--seed", "master_seed", s_sp.master_seed);
            merge_cfg(*sw_cmd, cfg, "--workers", "workers", s_workers);
            const recon::ModelFile mf = recon::load_model(s_model);
            const auto pools =
                recon::run_sweep(mf.params, s_sp, recon::pool_classes(mf.params), s_workers);
            recon::save_pools(pools, s_out);
            std::size_t failed = 0;
            for (const auto& p : pools) failed += p.failed ? 1 : 0;
            write_manifest("sweep", recon::sweep_spec_to_json(s_sp), {s_sp.master_seed}, {s_model},
                           {s_out}, swatch.seconds());
            std::cout << pools.size() << " runs (" << failed << " failed), "
                      << pools.size() * s_sp.m << " candidates -> " << s_out << "\n";
            return 0;
        }

        if (cl->parsed()) {
            Stopwatch swatch;
            const auto pools = recon::load_pools(c_pool);
            const recon::Matrix all = stack_pools(pools);
            if (all.rows > 20000)
                throw std::runtime_error(
                    "cluster: pool has " + std::to_string(all.rows) +
                    " candidates; the dense distance matrix caps this command at 20000");
            const recon::Matrix dist = recon::cosine_distance_matrix(all);
            const auto result = recon::agglomerate(dist, c_maxclust);
            const auto mode = c_mode == "nearest" ? recon::RepresentativeMode::NearestToMean
                                                  : recon::RepresentativeMode::Mean;
            const auto reps = recon::representatives(all, result, c_k_largest, mode);
            recon::save_clusters_csv(result, c_out_clusters);
            recon::save_representatives_csv(reps, all.cols, c_out_reps);
            json used = {{"maxclust", c_maxclust}, {"k_largest", c_k_largest}, {"mode", c_mode}};
            write_manifest("cluster", used, {}, {c_pool}, {c_out_clusters, c_out_reps},
                           swatch.seconds());
            std::cout << result.sizes.size() << " clusters, " << reps.size()
                      << " representatives -> " << c_out_reps << "\n";
            return 0;
        }

        if (inv->parsed()) {
            Stopwatch swatch;
            const json cfg = load_config_file(i_config);
            merge_cfg(*inv, cfg, "--objective", "objective", i_objective);
            merge_cfg(*inv, cfg, "--lr", "lr", i_cfg.lr);
            merge_cfg(*inv, cfg, "--iterations", "iterations", i_cfg.iterations);
            merge_cfg(*inv, cfg, "--tv-weight", "tv_weight", i_cfg.tv_weight);
            merge_cfg(*inv, cfg, "--seed", "seed", i_cfg.seed);
            i_cfg.objective = i_objective == "mse" ? recon::InversionObjective::Mse
                                                   : recon::InversionObjective::Cosine;
            const recon::ToyBackbone bb = recon::load_backbone(i_backbone);
            const recon::Matrix targets = recon::load_matrix_csv(i_embeddings);
            if (targets.cols != bb.d)
                throw std::runtime_error("invert: embeddings CSV width does not match backbone d");
            std::vector<recon::InversionResult> results(targets.rows);
            std::atomic<std::size_t> next{0};
            auto work = [&]() {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= targets.rows) return;
                    recon::Vec t(targets.row(i), targets.row(i) + targets.cols);
                    recon::InversionConfig cfg_i = i_cfg;
                    cfg_i.seed = recon::derive_seed(i_cfg.seed, i);
                    results[i] = recon::invert(bb, t, cfg_i);
                }
            };
            if (i_workers <= 1) {
                work();
            } else {
                std::vector<std::thread> ts;
                for (std::size_t t = 0; t < i_workers; ++t) ts.emplace_back(work);
                for (auto& t : ts) t.join();
            }
            recon::Matrix images(targets.rows, bb.input_dim());
            for (std::size_t i = 0; i < targets.rows; ++i)
                std::copy(results[i].image.begin(), results[i].image.end(), images.row(i));
            recon::save_matrix_csv(images, i_out, "p");
            {
                auto f = recon::open_out(i_trace);
                f << "target,iter,objective\n";
                for (std::size_t i = 0; i < results.size(); ++i)
                    for (std::size_t it2 = 0; it2 < results[i].trace.size(); ++it2)
                        f << i << ',' << it2 << ',' << recon::fmt_double(results[i].trace[it2])
                          << "\n";
            }
            json used = {{"objective", i_objective},
                         {"lr", i_cfg.lr},
                         {"iterations", i_cfg.iterations},
                         {"tv_weight", i_cfg.tv_weight},
                         {"box", i_cfg.box_constrain},
                         {"seed", i_cfg.seed}};
            write_manifest("invert", used, {i_cfg.seed}, {i_backbone, i_embeddings},
                           {i_out, i_trace}, swatch.seconds());
            std::cout << targets.rows << " targets inverted -> " << i_out << "\n";
            return 0;
        }

        if (ev->parsed()) {
            Stopwatch swatch;
            const json cfg = load_config_file(e_config);
            merge_cfg(*ev, cfg, "--top-k", "top_k", e_top_k);
            merge_cfg(*ev, cfg, "--cosine-threshold", "cosine_threshold", e_cos_thr);
            const recon::ModelFile mf = recon::load_model(e_model);
            const recon::EmbeddingDataset ds = load_normalized_for_model(e_data, mf);
            std::vector<recon::CandidatePool> pools;
            for (const auto& path : e_pools) {
                auto more = recon::load_pools(path);
                pools.insert(pools.end(), std::make_move_iterator(more.begin()),
                             std::make_move_iterator(more.end()));
            }
            const recon::EvalReport report = recon::match(ds, pools, !e_no_label_filter, e_top_k);
            const recon::GoodCounts good = recon::count_good(report, e_cos_thr);
            const recon::MarginQualityResult mq = recon::margin_vs_quality(mf.params, ds, report);
            recon::save_eval_csv(report, e_out_eval);
            recon::Vec best;
            for (const auto& r : report.rows) best.push_back(r.best_cosine);
            std::sort(best.begin(), best.end());
            const double median = best.size() % 2 == 1
                                      ? best[best.size() / 2]
                                      : 0.5 * (best[best.size() / 2 - 1] + best[best.size() / 2]);
            json summary = {{"n", report.rows.size()},
                            {"cosine_threshold", e_cos_thr},
                            {"n_good", good.n_good},
                            {"fraction_good", good.fraction},
                            {"median_best_cosine", median},
                            {"spearman_rho_absmargin_cosine", mq.rho.rho},
                            {"spearman_tie_degenerate", mq.rho.tie_degenerate}};
            recon::write_text(e_out_summary, summary.dump(2) + "\n");
            {
                // top-k candidates mapped back to raw embedding space for inversion
                auto f = recon::open_out(e_out_topk);
                f << "train_index,run_id,cand_id,cosine";
                for (std::size_t j = 0; j < ds.d(); ++j) f << ",x" << j;
                f << "\n";
                for (const auto& t : report.topk) {
                    const recon::CandidatePool* pool = nullptr;
                    for (const auto& p : pools)
                        if (p.run_id == t.run_id) pool = &p;
                    if (!pool) continue;
                    f << t.train_index << ',' << t.run_id << ',' << t.candidate << ','
                      << recon::fmt_double(t.cosine);
                    for (std::size_t j = 0; j < ds.d(); ++j)
                        f << ','
                          << recon::fmt_double(pool->xhat(t.candidate, j) * mf.norm.sigma[j] +
                                               mf.norm.mu[j]);
                    f << "\n";
                }
            }
            if (!e_out_reverse.empty()) {
                const auto rrows = recon::reverse_match(ds, pools, !e_no_label_filter);
                auto f = recon::open_out(e_out_reverse);
                f << "run_id,cand_id,label,nearest_train,cosine\n";
                for (const auto& r : rrows)
                    f << r.run_id << ',' << r.candidate << ',' << r.label << ',' << r.nearest_train
                      << ',' << recon::fmt_double(r.cosine) << "\n";
            }
            json used = {{"top_k", e_top_k},
                         {"cosine_threshold", e_cos_thr},
                         {"label_filter", !e_no_label_filter}};
            std::vector<std::string> inputs = {e_model, e_data};
            inputs.insert(inputs.end(), e_pools.begin(), e_pools.end());
            write_manifest("evaluate", used, {}, inputs, {e_out_eval, e_out_summary, e_out_topk},
                           swatch.seconds());
            std::printf("n            %zu\n", report.rows.size());
            std::printf("good (>%.2f) %zu  (%.1f%%)\n", e_cos_thr, good.n_good,
                        100.0 * good.fraction);
            std::printf("median cos   %.4f\n", median);
            std::printf("spearman     %.4f%s\n", mq.rho.rho,
                        mq.rho.tie_degenerate ? " (tie-degenerate)" : "");
            return 0;
        }

        if (rp->parsed()) {
            Stopwatch swatch;
            std::vector<std::string> outputs;
            std::vector<std::string> inputs;
            if (!p_model.empty() && !p_data.empty() && !p_pools.empty()) {
                const recon::ModelFile mf = recon::load_model(p_model);
                const recon::EmbeddingDataset ds = load_normalized_for_model(p_data, mf);
                std::vector<recon::CandidatePool> pools;
                for (const auto& path : p_pools) {
                    auto more = recon::load_pools(path);
                    pools.insert(pools.end(), std::make_move_iterator(more.begin()),
                                 std::make_move_iterator(more.end()));
                }
                const recon::EvalReport report = recon::match(ds, pools, true);
                const recon::MarginQualityResult mq = recon::margin_vs_quality(mf.params, ds, report);
                auto f = recon::open_out(p_out_fig5);
                f << "train_index,margin,best_cosine\n";
                for (const auto& r : mq.rows)
                    f << r.train_index << ',' << recon::fmt_double(r.margin) << ','
                      << recon::fmt_double(r.best_cosine) << "\n";
                outputs.push_back(p_out_fig5);
                inputs.insert(inputs.end(), {p_model, p_data});
                inputs.insert(inputs.end(), p_pools.begin(), p_pools.end());
                std::cout << "margin/cosine rows -> " << p_out_fig5
                          << " (spearman " << mq.rho.rho << ")\n";
            }
            if (!p_grid_in.empty()) {
                auto f = recon::open_in(p_grid_in);
                std::string line;
                std::getline(f, line);
                auto out = recon::open_out(p_out_fig10);
                out << "width,n,ratio,pct_good\n";
                std::size_t lineno = 1;
                while (std::getline(f, line)) {
                    ++lineno;
                    if (line.empty()) continue;
                    const auto cells = recon::split_csv_line(line);
                    if (cells.size() < 5)
                        throw std::runtime_error(p_grid_in + ":" + std::to_string(lineno) +
                                                 ": bad grid row");
                    out << cells[0] << ',' << cells[1] << ',' << cells[2] << ',' << cells[4] << "\n";
                }
                outputs.push_back(p_out_fig10);
                inputs.push_back(p_grid_in);
                std::cout << "grid plot data -> " << p_out_fig10 << "\n";
            }
            if (outputs.empty())
                throw std::runtime_error("report: nothing to do (need model+data+pool or --grid-csv)");
            write_manifest("report", json::object(), {}, inputs, outputs, swatch.seconds());
            return 0;
        }

        if (gr->parsed()) {
            Stopwatch swatch;
            const json cfg = load_config_file(gr_config);
            gr_base.attack.workers = 1;
            gr_base.train.c = gr_base.classes == 2 ? 1 : gr_base.classes;
            const auto widths = parse_size_list(gr_widths);
            const auto sizes = parse_size_list(gr_sizes);
            // cells are independent; parallelize across them
            std::vector<std::pair<std::size_t, std::size_t>> cells;
            for (auto w : widths)
                for (auto n : sizes) cells.emplace_back(w, n);
            std::vector<recon::GridCell> results(cells.size());
            std::atomic<std::size_t> next{0};
            auto work = [&]() {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= cells.size()) return;
                    auto one = recon::grid_experiment({cells[i].first}, {cells[i].second}, gr_base);
                    results[i] = one.front();
                }
            };
            if (gr_workers <= 1) {
                work();
            } else {
                std::vector<std::thread> ts;
                for (std::size_t t = 0; t < gr_workers; ++t) ts.emplace_back(work);
                for (auto& t : ts) t.join();
            }
            auto f = recon::open_out(gr_out);
            f << "width,n,ratio,n_good,pct_good,failed\n";
            for (const auto& cell : results)
                f << cell.width << ',' << cell.n_samples << ',' << recon::fmt_double(cell.ratio)
                  << ',' << cell.n_good << ',' << recon::fmt_double(cell.pct_good) << ','
                  << (cell.failed ? 1 : 0) << "\n";
            f.close();
            json used = {{"widths", gr_widths}, {"sizes", gr_sizes},
                         {"d", gr_base.d},      {"sep", gr_base.class_sep},
                         {"epochs", gr_base.train.epochs}, {"wd", gr_base.train.weight_decay}};
            write_manifest("grid", used, {gr_base.data_seed, gr_base.train.seed}, {}, {gr_out},
                           swatch.seconds());
            std::cout << results.size() << " cells -> " << gr_out << "\n";
            return 0;
        }

        if (it_cmd->parsed()) {
            Stopwatch swatch;
            recon::EmbeddingDataset ds = recon::load_dataset(it_data);
            recon::EmbeddingDataset test = recon::load_dataset(it_test);
            if (!it_no_normalize) {
                auto [xn, st] = recon::normalize(ds.x);
                ds.x = std::move(xn);
                ds.norm = st;
                test.x = recon::apply_normalization(test.x, st);
            }
            recon::TrainConfig tc;
            tc.lr = it_lr;
            tc.epochs = it_epochs;
            tc.weight_decay = it_wd;
            tc.c = it_c;
            tc.checkpoint_every = it_every;
            tc.seed = it_train_seed;
            auto [params, report] = recon::train(ds, ds.d(), it_h, it_c, tc);
            it_attack.workers = it_workers;
            const auto rows =
                recon::iterations_experiment(report.checkpoints, ds, test, it_attack);
            auto f = recon::open_out(it_out);
            f << "epoch,test_acc,n_good,failed\n";
            for (const auto& row : rows)
                f << row.epoch << ',' << recon::fmt_double(row.test_acc) << ',' << row.n_good << ','
                  << (row.failed ? 1 : 0) << "\n";
            f.close();
            json used = {{"h", it_h},       {"epochs", it_epochs},
                         {"wd", it_wd},     {"checkpoint_every", it_every},
                         {"runs", it_attack.sweep.runs}, {"m", it_attack.sweep.m}};
            write_manifest("iters", used, {it_train_seed, it_attack.sweep.master_seed},
                           {it_data, it_test}, {it_out}, swatch.seconds());
            std::cout << rows.size() << " checkpoints -> " << it_out << "\n";
            return 0;
        }

        if (am->parsed()) {
            Stopwatch swatch;
            const recon::ModelFile mf = recon::load_model(a_model);
            const auto res = recon::activation_maximization_baseline(mf.params, a_label, a_count,
                                                                     a_lr, a_iterations, a_seed);
            auto f = recon::open_out(a_out);
            f << "cand_id,label,failed";
            for (std::size_t j = 0; j < mf.params.d; ++j) f << ",x" << j;
            f << "\n";
            for (std::size_t i = 0; i < a_count; ++i) {
                f << i << ',' << a_label << ',' << (res.failed[i] ? 1 : 0);
                for (std::size_t j = 0; j < mf.params.d; ++j)
                    f << ',' << recon::fmt_double(res.x(i, j));
                f << "\n";
            }
            f.close();
            json used = {{"label", a_label},
                         {"count", a_count},
                         {"lr", a_lr},
                         {"iterations", a_iterations},
                         {"seed", a_seed}};
            write_manifest("am-baseline", used, {a_seed}, {a_model}, {a_out}, swatch.seconds());
            std::cout << a_count << " baseline candidates -> " << a_out << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
