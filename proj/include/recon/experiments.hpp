#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "recon/data.hpp"
#include "recon/evaluation.hpp"
#include "recon/reconstruction.hpp"
#include "recon/trainer.hpp"

namespace recon {

struct AttackConfig {
    SweepSpec sweep;
    bool label_filter = true;
    double cosine_threshold = 0.75;
    std::size_t workers = 1;
};

struct GridCell {
    std::size_t width;
    std::size_t n_samples;
    double ratio;  // p / (n (d+1))
    std::size_t n_good;
    double pct_good;
    bool failed = false;
    std::string error;
};

struct GridBaseConfig {
    std::size_t d = 16;
    std::size_t classes = 2;
    double class_sep = 3.0;
    std::uint64_t data_seed = 1;
    TrainConfig train;
    AttackConfig attack;
};

// Trains and attacks each (width, n) cell; the ratio column is the
// parameter count over the attack unknowns n*(d+1).
inline std::vector<GridCell> grid_experiment(const std::vector<std::size_t>& widths,
                                             const std::vector<std::size_t>& sizes,
                                             const GridBaseConfig& base) {
    if (widths.empty() || sizes.empty()) throw std::invalid_argument("grid_experiment: empty lists");
    std::vector<GridCell> cells;
    for (std::size_t w : widths) {
        for (std::size_t n : sizes) {
            GridCell cell{};
            cell.width = w;
            cell.n_samples = n;
            const double p = static_cast<double>(w * base.d + w + (base.classes == 2 ? 1 : base.classes) * w);
            cell.ratio = p / (static_cast<double>(n) * static_cast<double>(base.d + 1));
            try {
                EmbeddingDataset ds =
                    gen_gaussian_mixture(n, base.d, base.classes, base.class_sep, base.data_seed);
                auto [xn, stats] = normalize(ds.x);
                ds.x = std::move(xn);
                ds.norm = stats;
                const std::size_t c_out = base.classes == 2 ? 1 : base.classes;
                TrainConfig tc = base.train;
                tc.c = c_out;
                auto [params, report] = train(ds, base.d, w, c_out, tc);
                auto pools = run_sweep(params, base.attack.sweep, base.classes, base.attack.workers);
                EvalReport ev = match(ds, pools, base.attack.label_filter);
                const GoodCounts gc = count_good(ev, base.attack.cosine_threshold);
                cell.n_good = gc.n_good;
                cell.pct_good = gc.fraction;
            } catch (const std::exception& e) {
                cell.failed = true;
                cell.error = e.what();
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

struct IterationsRow {
    std::size_t epoch;
    double test_acc;
    std::size_t n_good;
    bool failed = false;
    std::string error;
};

// Attacks each training checkpoint and reports test accuracy next to the
// good-reconstruction count.
inline std::vector<IterationsRow> iterations_experiment(
    const std::vector<std::pair<std::size_t, MlpParams>>& checkpoints, const EmbeddingDataset& train_set,
    const EmbeddingDataset& test_set, const AttackConfig& attack) {
    if (checkpoints.empty()) throw std::invalid_argument("iterations_experiment: no checkpoints");
    std::vector<IterationsRow> rows;
    const std::size_t classes = num_classes(train_set);
    for (const auto& [epoch, params] : checkpoints) {
        IterationsRow row{};
        row.epoch = epoch;
        try {
            row.test_acc = accuracy(params, test_set);
            auto pools = run_sweep(params, attack.sweep, classes, attack.workers);
            EvalReport ev = match(train_set, pools, attack.label_filter);
            row.n_good = count_good(ev, attack.cosine_threshold).n_good;
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace recon
