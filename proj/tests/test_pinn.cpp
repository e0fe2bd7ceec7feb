#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "neurophys/checkpoint.hpp"
#include "neurophys/errors.hpp"
#include "neurophys/pinn.hpp"
#include "neurophys/trainer.hpp"

using namespace neurophys;

namespace {

Tensor random_input(const Shape& shape, std::uint64_t seed) {
    RandomSource rng(seed);
    Tensor x(shape);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    return x;
}

PinnModel tiny_model(std::uint64_t seed, double dropout = 0.0) {
    PinnConfig cfg;
    cfg.f1 = 2;
    cfg.f2 = 3;
    cfg.p1 = {2, 1};
    cfg.hidden_dim = 16;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.dropout = dropout;
    cfg.num_nodes = 3;
    cfg.data_points = 4;
    RandomSource rng(seed);
    return PinnModel(cfg, InputGeometry{2, 2, 3, 16}, rng);
}

}  // namespace

TEST_CASE("shape law at the reference geometry") {
    // (B=2, W=4, F=9, C=22, omega=250) -> v,w of (2,4,22,50) with defaults.
    PinnConfig cfg;  // defaults: F1=32, F2=64, hidden 128, L=2, H=4
    InputGeometry geom{4, 9, 22, 250};
    RandomSource rng(1);
    PinnModel model(cfg, geom, rng);
    CHECK(model.config().num_nodes == 22);
    CHECK(model.config().data_points == 50);

    Tensor x = random_input({2, 4, 9, 22, 250}, 2);
    Tape tape;
    StateVars s = model.forward(tape, x, false, nullptr, 0.004);
    CHECK(s.v.value().shape() == Shape{2, 4, 22, 50});
    CHECK(s.w.value().shape() == Shape{2, 4, 22, 50});
    CHECK(s.v.value().all_finite());
    CHECK(s.w.value().all_finite());
}

TEST_CASE("eval mode forward is deterministic with dropout configured") {
    PinnModel model = tiny_model(7, 0.5);
    Tensor x = random_input({1, 2, 2, 3, 16}, 8);
    Tape t1, t2;
    StateVars a = model.forward(t1, x, false, nullptr, 0.05);
    StateVars b = model.forward(t2, x, false, nullptr, 0.05);
    for (std::size_t i = 0; i < a.v.value().size(); ++i) {
        CHECK(a.v.value()[i] == b.v.value()[i]);
        CHECK(a.w.value()[i] == b.w.value()[i]);
    }
}

TEST_CASE("batch equivariance in eval mode") {
    PinnModel model = tiny_model(9);
    Tensor x = random_input({2, 2, 2, 3, 16}, 10);
    // Swap the two trials.
    Tensor swapped(x.shape());
    const std::size_t row = x.size() / 2;
    for (std::size_t i = 0; i < row; ++i) {
        swapped[i] = x[row + i];
        swapped[row + i] = x[i];
    }
    Tape t1, t2;
    StateVars a = model.forward(t1, x, false, nullptr, 0.05);
    StateVars b = model.forward(t2, swapped, false, nullptr, 0.05);
    const std::size_t vrow = a.v.value().size() / 2;
    for (std::size_t i = 0; i < vrow; ++i) {
        CHECK(a.v.value()[i] == b.v.value()[vrow + i]);
        CHECK(a.v.value()[vrow + i] == b.v.value()[i]);
    }
}

TEST_CASE("config and shape validation name the failing stage") {
    RandomSource rng(3);
    {
        PinnConfig cfg;
        cfg.hidden_dim = 10;
        cfg.heads = 4;  // 10 % 4 != 0
        CHECK_THROWS_AS(PinnModel(cfg, InputGeometry{2, 2, 6, 16}, rng), ConfigError);
    }
    {
        PinnConfig cfg;  // two 2x2 pools cannot fit a 3-sample channel axis
        CHECK_THROWS_WITH_AS(PinnModel(cfg, InputGeometry{2, 2, 3, 16}, rng),
                             doctest::Contains("pool2"), ConfigError);
    }
    {
        PinnModel model = tiny_model(4);
        Tensor wrong = random_input({1, 2, 2, 3, 20}, 5);
        CHECK_THROWS_AS(
            [&] {
                Tape tape;
                model.forward(tape, wrong, false, nullptr, 0.05);
            }(),
            ConfigError);
    }
}

TEST_CASE("parameter counting") {
    {
        // A lone linear layer 2 -> 3 with bias.
        RandomSource rng(11);
        LinearLayer lin(2, 3, rng);
        std::size_t n = 0;
        lin.visit("lin", [&n](const std::string&, Parameter& p) { n += p.value.size(); });
        CHECK(n == 9);
    }
    PinnModel small = tiny_model(12);
    const std::size_t base = count_parameters(small);
    {
        PinnConfig cfg;
        cfg.f1 = 2;
        cfg.f2 = 3;
        cfg.p1 = {2, 1};
        cfg.hidden_dim = 32;  // doubled
        cfg.layers = 1;
        cfg.heads = 2;
        cfg.dropout = 0.0;
        cfg.num_nodes = 3;
        cfg.data_points = 4;
        RandomSource rng(12);
        PinnModel wider(cfg, InputGeometry{2, 2, 3, 16}, rng);
        CHECK(count_parameters(wider) > base);
    }
    // Regression-locked golden count for the tiny configuration.
    CHECK(base == 4028);
}

TEST_CASE("outputs stay finite across random tiny configs") {
    RandomSource fuzz(77);
    std::size_t tried = 0;
    for (std::size_t attempt = 0; attempt < 200 && tried < 100; ++attempt) {
        PinnConfig cfg;
        cfg.f1 = 1 + fuzz.index(3);
        cfg.f2 = 1 + fuzz.index(3);
        cfg.k1 = {1 + fuzz.index(3), 1 + fuzz.index(3)};
        cfg.k2 = {1 + fuzz.index(2), 1 + fuzz.index(3)};
        cfg.p1 = {fuzz.index(3), fuzz.index(2)};
        cfg.p2 = {fuzz.index(2), fuzz.index(2)};
        cfg.pool_kernel = 1 + fuzz.index(2);
        cfg.pool_stride = 1 + fuzz.index(2);
        cfg.hidden_dim = 8 * (1 + fuzz.index(2));
        cfg.layers = 1 + fuzz.index(2);
        cfg.heads = 2;
        cfg.dropout = 0.25 * static_cast<double>(fuzz.index(3));
        InputGeometry geom{1 + fuzz.index(3), 1 + fuzz.index(3), 2 + fuzz.index(5),
                           8 + fuzz.index(9)};
        RandomSource init(1000 + attempt);
        try {
            PinnModel model(cfg, geom, init);
            Tensor x = random_input({2, geom.windows, geom.bands, geom.channels,
                                     geom.window_len},
                                    2000 + attempt);
            RandomSource drop(3000 + attempt);
            Tape tape;
            StateVars s = model.forward(tape, x, true, &drop, 0.05);
            CHECK(s.v.value().all_finite());
            CHECK(s.w.value().all_finite());
            const PinnConfig& rc = model.config();
            CHECK(s.v.value().shape() ==
                  Shape{2, geom.windows, rc.num_nodes, rc.data_points});
            ++tried;
        } catch (const ConfigError&) {
            // geometry that does not survive the pools; skip
        }
    }
    CHECK(tried == 100);
}

TEST_CASE("checkpoint round trip is bit-identical through forward") {
    PipelineConfig cfg;
    cfg.pinn.f1 = 2;
    cfg.pinn.f2 = 3;
    cfg.pinn.p1 = {2, 1};
    cfg.pinn.hidden_dim = 16;
    cfg.pinn.layers = 1;
    cfg.pinn.heads = 2;
    cfg.pinn.dropout = 0.0;
    cfg.pinn.data_points = 4;
    cfg.featx.f1 = 2;
    cfg.featx.f2 = 3;
    cfg.featx.latent_dim = 8;
    Pipeline pipe = build_pipeline(cfg, InputGeometry{2, 2, 3, 16}, 16.0, 2, 99);

    // Perturb the batchnorm buffers so they carry non-default state.
    for (auto& [name, buf] : pipe.named_buffers())
        for (std::size_t i = 0; i < buf->size(); ++i) (*buf)[i] += 0.01 * (i + 1);

    const std::string path =
        (std::filesystem::temp_directory_path() / "neurophys_test_ckpt.npnw").string();
    save_checkpoint(pipe, path);
    Pipeline back = load_checkpoint(path);

    Tensor x = random_input({2, 2, 2, 3, 16}, 100);
    Tape t1, t2;
    auto a = pipe.forward_batch(t1, x, false, nullptr);
    auto b = back.forward_batch(t2, x, false, nullptr);
    for (std::size_t i = 0; i < a.logits.value().size(); ++i)
        CHECK(a.logits.value()[i] == b.logits.value()[i]);
    for (std::size_t i = 0; i < a.state.v.value().size(); ++i)
        CHECK(a.state.v.value()[i] == b.state.v.value()[i]);

    // Save -> load -> save produces identical bytes.
    const std::string path2 = path + ".2";
    save_checkpoint(back, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    CHECK(!b1.empty());
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}
