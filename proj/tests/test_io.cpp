#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "recon/io.hpp"
#include "recon/rng.hpp"

using namespace recon;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("recon_test_" + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("fmt_double round-trips exactly") {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.normal() * std::exp(rng.uniform(-30.0, 30.0));
        CHECK(parse_double(fmt_double(v), "t") == v);
    }
    CHECK(parse_double(fmt_double(0.1), "t") == 0.1);
}

TEST_CASE("dataset CSV round-trip is value-identical") {
    TempDir tmp;
    const auto ds = gen_gaussian_mixture(20, 4, 2, 3.0, 1);
    save_dataset(ds, tmp.file("d.csv"));
    const auto back = load_dataset(tmp.file("d.csv"));
    CHECK(back.x == ds.x);
    CHECK(back.y == ds.y);
}

TEST_CASE("dataset CSV parses a minimal two-row file") {
    TempDir tmp;
    write_text(tmp.file("mini.csv"), "label,x0,x1\n1,0.5,-2\n-1,3,4\n");
    const auto ds = load_dataset(tmp.file("mini.csv"));
    CHECK(ds.n() == 2);
    CHECK(ds.d() == 2);
    CHECK(ds.y == std::vector<int>{1, -1});
    CHECK(ds.x(1, 0) == 3.0);
}

TEST_CASE("dataset CSV reports the offending line") {
    TempDir tmp;
    write_text(tmp.file("bad.csv"), "label,x0,x1\n1,0.5,-2\n-1,3\n");
    try {
        load_dataset(tmp.file("bad.csv"));
        FAIL("expected an error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
    write_text(tmp.file("bad2.csv"), "label,x0\n1,abc\n");
    CHECK_THROWS(load_dataset(tmp.file("bad2.csv")));
}

TEST_CASE("model JSON round-trip preserves weights and stats bitwise") {
    TempDir tmp;
    const MlpParams p = init_mlp(6, 4, 2, 9);
    NormStats st;
    Rng rng(3);
    for (int j = 0; j < 6; ++j) {
        st.mu.push_back(rng.normal());
        st.sigma.push_back(std::exp(rng.normal()));
    }
    save_model(p, st, tmp.file("m.json"));
    const ModelFile mf = load_model(tmp.file("m.json"));
    CHECK(mf.params.w1 == p.w1);
    CHECK(mf.params.b1 == p.b1);
    CHECK(mf.params.w2 == p.w2);
    CHECK(mf.norm.mu == st.mu);
    CHECK(mf.norm.sigma == st.sigma);

    // identity stats written when the model was trained on raw data
    save_model(p, std::nullopt, tmp.file("m2.json"));
    const ModelFile mf2 = load_model(tmp.file("m2.json"));
    CHECK(mf2.norm.mu == Vec(6, 0.0));
    CHECK(mf2.norm.sigma == Vec(6, 1.0));
}

TEST_CASE("pool CSV round-trip") {
    TempDir tmp;
    Rng rng(7);
    std::vector<CandidatePool> pools(2);
    for (int r = 0; r < 2; ++r) {
        pools[r].run_id = r;
        pools[r].xhat = Matrix(3, 4);
        for (auto& v : pools[r].xhat.a) v = rng.normal();
        pools[r].lambda = {rng.uniform(), rng.uniform(), rng.uniform()};
        pools[r].y = {1, -1, 1};
        pools[r].final_loss = rng.uniform();
    }
    save_pools(pools, tmp.file("p.csv"));
    const auto back = load_pools(tmp.file("p.csv"));
    REQUIRE(back.size() == 2);
    for (int r = 0; r < 2; ++r) {
        CHECK(back[r].run_id == r);
        CHECK(back[r].xhat == pools[r].xhat);
        CHECK(back[r].lambda == pools[r].lambda);
        CHECK(back[r].y == pools[r].y);
        CHECK(back[r].final_loss == pools[r].final_loss);
        CHECK_FALSE(back[r].failed);
    }
}

TEST_CASE("backbone JSON round-trip") {
    TempDir tmp;
    const ToyBackbone bb = make_toy_backbone({3, 4, 4}, 8, 6, 77);
    save_backbone(bb, tmp.file("b.json"));
    const ToyBackbone back = load_backbone(tmp.file("b.json"));
    CHECK(back.a1 == bb.a1);
    CHECK(back.c1 == bb.c1);
    CHECK(back.a2 == bb.a2);
    CHECK(back.shape.pixels() == bb.shape.pixels());
    CHECK(back.seed == 77);
}

TEST_CASE("image dataset with sidecar round-trip") {
    TempDir tmp;
    const auto imgs = gen_toy_images(4, {2, 5, 5}, 2, 3);
    save_image_dataset(imgs, tmp.file("img.csv"), tmp.file("img.shape.json"));
    const auto back = load_image_dataset(tmp.file("img.csv"), tmp.file("img.shape.json"));
    CHECK(back.s == imgs.s);
    CHECK(back.y == imgs.y);
    CHECK(back.shape.ch == 2);
}

TEST_CASE("matrix CSV round-trip") {
    TempDir tmp;
    Rng rng(4);
    Matrix m(5, 3);
    for (auto& v : m.a) v = rng.normal();
    save_matrix_csv(m, tmp.file("m.csv"));
    CHECK(load_matrix_csv(tmp.file("m.csv")) == m);
}

TEST_CASE("sweep spec JSON mirrors the fields") {
    SweepSpec s;
    s.runs = 7;
    s.m = 123;
    s.iterations = 456;
    s.master_seed = 9;
    s.lr_min = 1e-5;
    const json j = sweep_spec_to_json(s);
    const SweepSpec back = sweep_spec_from_json(j);
    CHECK(back.runs == 7);
    CHECK(back.m == 123);
    CHECK(back.iterations == 456);
    CHECK(back.master_seed == 9);
    CHECK(back.lr_min == 1e-5);
    CHECK(back.alpha_hi == 500.0);

    // defaults fill the gaps
    const SweepSpec sparse = sweep_spec_from_json(json{{"runs", 3}});
    CHECK(sparse.runs == 3);
    CHECK(sparse.m == 500);
    CHECK(sparse.lr_min == 1e-6);
}
