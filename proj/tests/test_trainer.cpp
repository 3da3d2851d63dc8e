#include <doctest.h>

#include <cmath>

#include "recon/rng.hpp"
#include "recon/trainer.hpp"

using namespace recon;

namespace {

EmbeddingDataset two_point_dataset() {
    EmbeddingDataset ds;
    ds.x = Matrix(2, 2);
    ds.x(0, 0) = 1.0;
    ds.x(0, 1) = 0.5;
    ds.x(1, 0) = -1.0;
    ds.x(1, 1) = -0.5;
    ds.y = {1, -1};
    return ds;
}

}  // namespace

TEST_CASE("train: separable two-point dataset reaches perfect accuracy") {
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.epochs = 5000;
    cfg.weight_decay = 0.0;
    cfg.c = 1;
    cfg.seed = 2;
    const auto ds = two_point_dataset();
    auto [params, report] = train(ds, 2, 8, 1, cfg);
    CHECK(report.final_train_acc == 1.0);
    CHECK(report.history.size() == 5000);
}

TEST_CASE("train: loss is non-increasing at small lr without weight decay") {
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.epochs = 3000;
    cfg.weight_decay = 0.0;
    cfg.c = 1;
    cfg.seed = 5;
    const auto ds = two_point_dataset();
    auto [params, report] = train(ds, 2, 8, 1, cfg);
    for (std::size_t i = 1; i < report.history.size(); ++i)
        CHECK(report.history[i].loss <= report.history[i - 1].loss + 1e-8);
}

TEST_CASE("train: deterministic per seed") {
    const auto ds = gen_gaussian_mixture(16, 6, 2, 3.0, 3);
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.epochs = 500;
    cfg.weight_decay = 0.01;
    cfg.c = 1;
    cfg.seed = 9;
    auto [p1, r1] = train(ds, 6, 16, 1, cfg);
    auto [p2, r2] = train(ds, 6, 16, 1, cfg);
    CHECK(flatten(p1) == flatten(p2));
}

TEST_CASE("train: divergence aborts with the epoch in the message") {
    // identical inputs with opposite labels: one sample is always
    // misclassified, so a blown-up step size drives its loss to infinity
    EmbeddingDataset ds;
    ds.x = Matrix(2, 2);
    ds.x(0, 0) = ds.x(1, 0) = 1.0;
    ds.x(0, 1) = ds.x(1, 1) = 0.5;
    ds.y = {1, -1};
    TrainConfig cfg;
    cfg.lr = 1e6;
    cfg.epochs = 2000;
    cfg.weight_decay = 1.0;
    cfg.c = 1;
    cfg.seed = 1;
    try {
        train(ds, 2, 8, 1, cfg);
        FAIL("expected divergence");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("train: checkpoints follow the cadence") {
    const auto ds = two_point_dataset();
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.epochs = 10;
    cfg.weight_decay = 0.0;
    cfg.c = 1;
    cfg.seed = 1;
    cfg.checkpoint_every = 3;
    auto [params, report] = train(ds, 2, 4, 1, cfg);
    std::vector<std::size_t> epochs;
    for (const auto& [e, p] : report.checkpoints) epochs.push_back(e);
    CHECK(epochs == std::vector<std::size_t>{0, 3, 6, 9, 10});
}

TEST_CASE("train: multiclass mixture reaches zero training error") {
    const auto ds = gen_gaussian_mixture(30, 8, 3, 3.0, 11);
    TrainConfig cfg;
    cfg.lr = 0.05;
    cfg.epochs = 3000;
    cfg.weight_decay = 0.0;
    cfg.c = 3;
    cfg.seed = 4;
    auto [params, report] = train(ds, 8, 32, 3, cfg);
    CHECK(report.final_train_acc == 1.0);
}

TEST_CASE("accuracy: perfect classifier and the zero-margin tie rule") {
    const auto ds = two_point_dataset();
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.epochs = 4000;
    cfg.weight_decay = 0.0;
    cfg.c = 1;
    cfg.seed = 3;
    auto [params, report] = train(ds, 2, 8, 1, cfg);
    CHECK(accuracy(params, ds) == 1.0);

    // constant-zero logits: margins are exactly 0, which counts as wrong
    MlpParams zero = make_mlp(2, 4, 1);
    CHECK(accuracy(zero, ds) == 0.0);
}

TEST_CASE("accuracy: chance level on random labels") {
    const auto train_ds = gen_gaussian_mixture(40, 8, 2, 3.0, 4);
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.epochs = 2000;
    cfg.weight_decay = 0.01;
    cfg.c = 1;
    cfg.seed = 6;
    auto [params, report] = train(train_ds, 8, 32, 1, cfg);

    EmbeddingDataset held = gen_gaussian_mixture(400, 8, 2, 3.0, 999);
    Rng rng(4);
    for (auto& y : held.y) y = rng.uniform() < 0.5 ? 1 : -1;  // random labels
    const double acc = accuracy(params, held);
    CHECK(acc > 0.4);
    CHECK(acc < 0.6);
}

TEST_CASE("train: the paper-scale recipe reaches zero training error") {
    auto ds = gen_gaussian_mixture(100, 16, 2, 3.0, 1);
    auto [xn, st] = normalize(ds.x);
    ds.x = std::move(xn);
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.epochs = 10000;
    cfg.weight_decay = 0.08;
    cfg.c = 1;
    cfg.seed = 3;
    auto [params, report] = train(ds, 16, 500, 1, cfg);
    CHECK(report.final_train_acc == 1.0);
}

TEST_CASE("kkt residual shrinks over training") {
    auto ds = gen_gaussian_mixture(10, 8, 2, 2.0, 7);
    auto [xn, st] = normalize(ds.x);
    ds.x = std::move(xn);
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.epochs = 10000;
    cfg.weight_decay = 0.08;
    cfg.c = 1;
    cfg.seed = 8;
    cfg.checkpoint_every = 500;
    auto [params, report] = train(ds, 8, 32, 1, cfg);
    const MlpParams* at500 = nullptr;
    const MlpParams* at10k = nullptr;
    for (const auto& [epoch, p] : report.checkpoints) {
        if (epoch == 500) at500 = &p;
        if (epoch == 10000) at10k = &p;
    }
    REQUIRE(at500 != nullptr);
    REQUIRE(at10k != nullptr);
    const double early = kkt_residual(*at500, ds);
    const double late = kkt_residual(*at10k, ds);
    CHECK(late < early);
}
