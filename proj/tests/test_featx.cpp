#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "neurophys/errors.hpp"
#include "neurophys/featx.hpp"
#include "neurophys/gradcheck.hpp"
#include "neurophys/ops.hpp"

using namespace neurophys;

namespace {

FeatxConfig tiny_cfg() {
    FeatxConfig cfg;
    cfg.f1 = 2;
    cfg.f2 = 3;
    cfg.kernel = 3;
    cfg.pad = 1;
    cfg.latent_dim = 8;
    cfg.classes = 2;
    return cfg;
}

StateVars random_state(Tape& tape, const Shape& shape, double dt, std::uint64_t seed) {
    RandomSource rng(seed);
    Tensor v(shape), w(shape);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = rng.uniform(-1.0, 1.0);
        w[i] = rng.uniform(-1.0, 1.0);
    }
    return StateVars{tape.input(std::move(v)), tape.input(std::move(w)), dt};
}

void copy_branch_weights(FeatxBranch& dst, FeatxBranch& src) {
    std::vector<Parameter*> from, to;
    src.visit("b", [&from](const std::string&, Parameter& p) { from.push_back(&p); });
    dst.visit("b", [&to](const std::string&, Parameter& p) { to.push_back(&p); });
    REQUIRE(from.size() == to.size());
    for (std::size_t i = 0; i < from.size(); ++i) to[i]->value = from[i]->value;
}

}  // namespace

TEST_CASE("shape trace through the feature branch") {
    // B=2, N=22, W=4, data_points=50, latent 64 -> (2, 64)
    FeatxConfig cfg;  // defaults f1=16, f2=32, k=5, p=2, latent 64
    RandomSource rng(1);
    FeatxNet net(cfg, 22, 4 * 50, rng);
    Tape tape;
    StateVars s = random_state(tape, {2, 4, 22, 50}, 0.05, 2);
    Var f = net.extract_features(tape, s, false);
    CHECK(f.value().shape() == Shape{2, 64});
    CHECK(f.value().all_finite());
}

TEST_CASE("identical fields with tied branch weights fuse to layernorm of twice one branch") {
    RandomSource rng(3);
    FeatxNet net(tiny_cfg(), 2, 8, rng);
    copy_branch_weights(net.w_branch(), net.v_branch());

    Tape tape;
    RandomSource data(4);
    Tensor field({1, 2, 2, 4});
    for (std::size_t i = 0; i < field.size(); ++i) field[i] = data.uniform(-1.0, 1.0);
    StateVars s{tape.input(field), tape.input(field), 0.05};
    Var fused = net.extract_features(tape, s, false);

    // Compose the v branch once, double it, normalize, mean over nodes.
    Tape ref;
    Var input = reshape(permute(ref.input(field), {0, 2, 1, 3}), {2, 1, 8});
    Var vfc = net.v_branch().forward(ref, input, false);
    Var ln = net.fuse_norm().forward(ref, affine(vfc, 2.0, 0.0));
    Var expected = mean_axis(reshape(ln, {1, 2, 8}), 1);
    for (std::size_t i = 0; i < fused.value().size(); ++i)
        CHECK(fused.value()[i] == doctest::Approx(expected.value()[i]).epsilon(1e-12));
}

TEST_CASE("fusion is symmetric in the branch outputs") {
    RandomSource rng(5);
    FeatxNet a(tiny_cfg(), 2, 8, rng);
    // Mirror net: v branch of b = w branch of a and vice versa.
    RandomSource rng2(5);
    FeatxNet b(tiny_cfg(), 2, 8, rng2);
    copy_branch_weights(b.v_branch(), a.w_branch());
    copy_branch_weights(b.w_branch(), a.v_branch());

    Tape t1, t2;
    RandomSource data(6);
    Tensor v({1, 2, 2, 4}), w({1, 2, 2, 4});
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = data.uniform(-1.0, 1.0);
        w[i] = data.uniform(-1.0, 1.0);
    }
    StateVars s1{t1.input(v), t1.input(w), 0.05};
    StateVars s2{t2.input(w), t2.input(v), 0.05};  // swapped fields
    Var f1 = a.extract_features(t1, s1, false);
    Var f2 = b.extract_features(t2, s2, false);
    for (std::size_t i = 0; i < f1.value().size(); ++i)
        CHECK(f1.value()[i] == f2.value()[i]);
}

TEST_CASE("node permutation leaves pooled features unchanged") {
    RandomSource rng(7);
    FeatxNet net(tiny_cfg(), 3, 8, rng);
    RandomSource data(8);
    Tensor v({1, 2, 3, 4}), w({1, 2, 3, 4});
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = data.uniform(-1.0, 1.0);
        w[i] = data.uniform(-1.0, 1.0);
    }
    // Cyclic node permutation on axis 2.
    auto permute_nodes = [](const Tensor& x) {
        Tensor y(x.shape());
        for (std::size_t b = 0; b < 1; ++b)
            for (std::size_t wdx = 0; wdx < 2; ++wdx)
                for (std::size_t n = 0; n < 3; ++n)
                    for (std::size_t t = 0; t < 4; ++t)
                        y[((b * 2 + wdx) * 3 + (n + 1) % 3) * 4 + t] =
                            x[((b * 2 + wdx) * 3 + n) * 4 + t];
        return y;
    };
    Tape t1, t2;
    StateVars s1{t1.input(v), t1.input(w), 0.05};
    StateVars s2{t2.input(permute_nodes(v)), t2.input(permute_nodes(w)), 0.05};
    Var f1 = net.extract_features(t1, s1, false);
    Var f2 = net.extract_features(t2, s2, false);
    for (std::size_t i = 0; i < f1.value().size(); ++i)
        CHECK(f1.value()[i] == doctest::Approx(f2.value()[i]).epsilon(1e-12));
}

TEST_CASE("classifier head") {
    RandomSource rng(9);
    Classifier clf(8, 4, rng);
    {
        // Zero weights: uniform probabilities 1/K.
        clf.visit("clf", [](const std::string&, Parameter& p) { p.value.fill(0.0); });
        Tape tape;
        Tensor feats({2, 8});
        for (std::size_t i = 0; i < feats.size(); ++i) feats[i] = 0.3 * (i % 5);
        Var logits = clf.classify(tape, tape.input(feats));
        Var probs = softmax_lastaxis(logits);
        for (std::size_t i = 0; i < probs.value().size(); ++i)
            CHECK(probs.value()[i] == doctest::Approx(0.25).epsilon(1e-12));
    }
    {
        // Adding a constant to all logits leaves the softmax unchanged.
        Tape tape;
        RandomSource data(10);
        Tensor logits({3, 4});
        for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = data.uniform(-2.0, 2.0);
        Var p1 = softmax_lastaxis(tape.input(logits));
        Tensor shifted = logits;
        for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += 7.5;
        Var p2 = softmax_lastaxis(tape.input(shifted));
        for (std::size_t i = 0; i < p1.value().size(); ++i)
            CHECK(std::fabs(p1.value()[i] - p2.value()[i]) <= 1e-12);
    }
}

TEST_CASE("time axis too short for pooling raises a configuration error") {
    RandomSource rng(11);
    CHECK_THROWS_AS(FeatxNet(tiny_cfg(), 2, 1, rng), ConfigError);
}

TEST_CASE("gradient check through the full branch") {
    RandomSource rng(13);
    FeatxNet net(tiny_cfg(), 2, 8, rng);
    Parameter v(Tensor({1, 2, 2, 4})), w(Tensor({1, 2, 2, 4}));
    RandomSource data(14);
    for (std::size_t i = 0; i < v.value.size(); ++i) {
        v.value[i] = data.uniform(-1.0, 1.0);
        w.value[i] = data.uniform(-1.0, 1.0);
    }
    std::vector<Parameter*> params{&v, &w};
    net.visit("featx", [&params](const std::string&, Parameter& p) { params.push_back(&p); });
    auto build = [&](Tape& t) {
        StateVars s{t.param(v), t.param(w), 0.05};
        return weighted_sum(net.extract_features(t, s, true), 15);
    };
    auto report = grad_check("featx_branch", build, params, 1e-4);
    INFO(report.max_rel_err, " worst ", report.worst);
    CHECK(report.pass());
}
