#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "recon/data.hpp"
#include "recon/model.hpp"
#include "recon/nnls.hpp"

namespace recon {

struct TrainConfig {
    double lr = 0.01;
    std::size_t epochs = 10000;
    double weight_decay = 0.0;
    std::size_t c = 1;               // outputs (1 = binary)
    std::size_t checkpoint_every = 0;  // 0 = no checkpoints
    std::uint64_t seed = 0;
};

struct TrainHistoryRow {
    std::size_t epoch;
    double loss;       // data loss only, weight decay excluded
    double train_acc;
};

struct TrainReport {
    double final_train_acc = 0.0;
    std::vector<TrainHistoryRow> history;                 // one row per epoch
    std::vector<std::pair<std::size_t, MlpParams>> checkpoints;  // epoch -> params
};

inline double margin_from_logits(const Vec& out, int y, std::size_t c) {
    if (c == 1) return static_cast<double>(y) * out[0];
    return out[y] - out[margin_runner_up(out, y)];
}

// Fraction of samples with strictly positive margin; a zero margin counts
// as an error.
inline double accuracy(const MlpParams& p, const EmbeddingDataset& ds) {
    if (ds.d() != p.d) throw std::invalid_argument("accuracy: dimension mismatch");
    std::size_t good = 0;
    for (std::size_t i = 0; i < ds.n(); ++i) {
        Vec x(ds.x.row(i), ds.x.row(i) + ds.d());
        if (margin(p, x, ds.y[i]) > 0.0) ++good;
    }
    return static_cast<double>(good) / static_cast<double>(ds.n());
}

// log(1 + exp(-t)) without overflow
inline double bce_of_margin(double t) {
    if (t < -30.0) return -t;
    return std::log1p(std::exp(-t));
}

// Full-batch GD: theta <- theta - lr * (grad L + wd * theta).
// Binary: L = mean log(1+exp(-y phi)); multiclass: softmax cross-entropy.
inline std::pair<MlpParams, TrainReport> train(const EmbeddingDataset& ds, std::size_t d,
                                               std::size_t h, std::size_t c,
                                               const TrainConfig& cfg) {
    if (ds.d() != d) throw std::invalid_argument("train: dataset dim != d");
    if (cfg.c != c) throw std::invalid_argument("train: cfg.c != c");
    if (!(cfg.lr > 0.0) || cfg.epochs < 1) throw std::invalid_argument("train: bad config");
    for (int y : ds.y) {
        if (c == 1) {
            if (y != 1 && y != -1) throw std::invalid_argument("train: labels must be +-1");
        } else if (y < 0 || static_cast<std::size_t>(y) >= c) {
            throw std::invalid_argument("train: label out of range");
        }
    }

    MlpParams p = init_mlp(d, h, c, cfg.seed);
    TrainReport report;
    report.history.reserve(cfg.epochs);
    if (cfg.checkpoint_every > 0) report.checkpoints.emplace_back(0, p);

    const std::size_t n = ds.n();
    Matrix z(n, h), a(n, h), out(n, c);
    Matrix gout(n, c);
    Matrix gw1(h, d);
    Vec gb1(h);
    Matrix gw2(c, h);
    Vec probs(c);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        // forward
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = ds.x.row(i);
            double* zi = z.row(i);
            double* ai = a.row(i);
            matvec(p.w1, x, zi);
            for (std::size_t k = 0; k < h; ++k) {
                zi[k] += p.b1[k];
                ai[k] = std::max(zi[k], 0.0);
            }
            matvec(p.w2, ai, out.row(i));
        }

        double loss = 0.0;
        std::size_t correct = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* oi = out.row(i);
            double* go = gout.row(i);
            if (c == 1) {
                const double t = static_cast<double>(ds.y[i]) * oi[0];
                loss += bce_of_margin(t);
                if (t > 0.0) ++correct;
                const double s = ActivationMode::sigmoid(-t);
                go[0] = -static_cast<double>(ds.y[i]) * s / static_cast<double>(n);
            } else {
                double mx = oi[0];
                for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, oi[j]);
                double denom = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    probs[j] = std::exp(oi[j] - mx);
                    denom += probs[j];
                }
                loss += -(oi[ds.y[i]] - mx) + std::log(denom);
                Vec logits(oi, oi + c);
                if (margin_from_logits(logits, ds.y[i], c) > 0.0) ++correct;
                for (std::size_t j = 0; j < c; ++j) {
                    const double soft = probs[j] / denom;
                    go[j] = (soft - (static_cast<std::size_t>(ds.y[i]) == j ? 1.0 : 0.0)) /
                            static_cast<double>(n);
                }
            }
        }
        loss /= static_cast<double>(n);
        if (!std::isfinite(loss) || loss > 1e12)
            throw std::runtime_error("train: loss diverged at epoch " + std::to_string(epoch));
        report.history.push_back({epoch, loss, static_cast<double>(correct) / static_cast<double>(n)});

        // backward
        std::fill(gw1.a.begin(), gw1.a.end(), 0.0);
        std::fill(gb1.begin(), gb1.end(), 0.0);
        std::fill(gw2.a.begin(), gw2.a.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = ds.x.row(i);
            const double* zi = z.row(i);
            const double* ai = a.row(i);
            const double* go = gout.row(i);
            for (std::size_t j = 0; j < c; ++j) {
                const double gj = go[j];
                if (gj == 0.0) continue;
                double* gw2r = gw2.row(j);
                for (std::size_t k = 0; k < h; ++k) gw2r[k] += gj * ai[k];
            }
            for (std::size_t k = 0; k < h; ++k) {
                if (zi[k] <= 0.0) continue;
                double ga = 0.0;
                for (std::size_t j = 0; j < c; ++j) ga += go[j] * p.w2(j, k);
                if (ga == 0.0) continue;
                gb1[k] += ga;
                double* gw1r = gw1.row(k);
                for (std::size_t jj = 0; jj < d; ++jj) gw1r[jj] += ga * x[jj];
            }
        }

        // decoupled weight decay: additive wd * theta in the update
        for (std::size_t ii = 0; ii < p.w1.a.size(); ++ii)
            p.w1.a[ii] -= cfg.lr * (gw1.a[ii] + cfg.weight_decay * p.w1.a[ii]);
        for (std::size_t k = 0; k < h; ++k)
            p.b1[k] -= cfg.lr * (gb1[k] + cfg.weight_decay * p.b1[k]);
        for (std::size_t ii = 0; ii < p.w2.a.size(); ++ii)
            p.w2.a[ii] -= cfg.lr * (gw2.a[ii] + cfg.weight_decay * p.w2.a[ii]);

        if (cfg.checkpoint_every > 0 &&
            (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs)) {
            if (report.checkpoints.empty() || report.checkpoints.back().first != epoch)
                report.checkpoints.emplace_back(epoch, p);
        }
    }

    report.final_train_acc = accuracy(p, ds);
    return {std::move(p), std::move(report)};
}

// R(theta) = min_{lambda >= 0} ||theta - sum lambda_i grad(margin_i)|| / ||theta||,
// the measurable KKT-stationarity trend of the trained model.
inline double kkt_residual(const MlpParams& p, const EmbeddingDataset& ds,
                           ActivationMode mode = ActivationMode::hard()) {
    const Vec theta = flatten(p);
    Matrix a(theta.size(), ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) {
        Vec x(ds.x.row(i), ds.x.row(i) + ds.d());
        const Vec g = param_gradient_of_margin(p, x, ds.y[i], mode);
        for (std::size_t r = 0; r < theta.size(); ++r) a(r, i) = g[r];
    }
    const double tn = norm2(theta);
    if (tn == 0.0) throw std::runtime_error("kkt_residual: zero parameter vector");
    return nnls(a, theta).rnorm / tn;
}

}  // namespace recon
