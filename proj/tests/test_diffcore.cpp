#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "neurophys/errors.hpp"
#include "neurophys/gradcheck.hpp"
#include "neurophys/nn.hpp"
#include "neurophys/ops.hpp"
#include "neurophys/verify.hpp"

using namespace neurophys;

TEST_CASE("tensor invariants") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(t.item(), UsageError);
    CHECK(Tensor::scalar(4.0).item() == 4.0);
    CHECK_THROWS_AS(t.reshaped({5}), ShapeError);
    CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
}

TEST_CASE("linear identity and hand arithmetic") {
    Tape tape;
    {
        Var x = tape.input(Tensor({1, 2}, {1, 2}));
        Parameter w(Tensor({2, 2}, {1, 0, 0, 1})), b(Tensor({2}, {0, 0}));
        Var y = linear(x, tape.param(w), tape.param(b));
        CHECK(y.value()[0] == doctest::Approx(1.0));
        CHECK(y.value()[1] == doctest::Approx(2.0));
    }
    {
        Var x = tape.input(Tensor({1, 2}, {1, 1}));
        Parameter w(Tensor({1, 2}, {2, 3})), b(Tensor({1}, {1}));
        Var y = linear(x, tape.param(w), tape.param(b));
        CHECK(y.value()[0] == doctest::Approx(6.0));
    }
    {
        Parameter w(Tensor({2, 3}, {1, 2, 3, 4, 5, 6})), b(Tensor({2}));
        Var x = tape.input(Tensor({1, 2}, {1, 1}));  // wrong inner dim
        CHECK_THROWS_AS(linear(x, tape.param(w), tape.param(b)), ShapeError);
    }
}

TEST_CASE("conv2d fixtures") {
    Tape tape;
    {
        // 1x1 unit kernel is the identity.
        Tensor x({1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
        Parameter k(Tensor({1, 1, 1, 1}, {1.0}));
        Var y = conv2d(tape.input(x), tape.param(k), {0, 0});
        for (std::size_t i = 0; i < 6; ++i) CHECK(y.value()[i] == doctest::Approx(x[i]));
    }
    {
        Parameter k(Tensor::full({1, 1, 3, 3}, 1.0));
        Var y = conv2d(tape.input(Tensor::full({1, 1, 3, 3}, 1.0)), tape.param(k), {0, 0});
        CHECK(y.value().size() == 1);
        CHECK(y.value()[0] == doctest::Approx(9.0));
    }
    {
        Parameter k(Tensor::full({1, 1, 5, 5}, 1.0));
        CHECK_THROWS_AS(conv2d(tape.input(Tensor({1, 1, 3, 3})), tape.param(k), {0, 0}),
                        ShapeError);
    }
}

TEST_CASE("conv1d fixtures") {
    Tape tape;
    {
        Parameter k(Tensor({1, 1, 1}, {1.0}));
        Var y = conv1d(tape.input(Tensor({1, 1, 3}, {5, 6, 7})), tape.param(k), 0);
        CHECK(y.value()[0] == doctest::Approx(5));
        CHECK(y.value()[2] == doctest::Approx(7));
    }
    {
        Parameter k(Tensor({1, 1, 2}, {1.0, 1.0}));
        Var y = conv1d(tape.input(Tensor({1, 1, 3}, {1, 2, 3})), tape.param(k), 0);
        CHECK(y.value().shape() == Shape{1, 1, 2});
        CHECK(y.value()[0] == doctest::Approx(3.0));
        CHECK(y.value()[1] == doctest::Approx(5.0));
    }
}

TEST_CASE("maxpool fixtures and tie-break") {
    {
        Tape tape;
        Var y = maxpool1d(tape.input(Tensor({1, 1, 4}, {1, 3, 2, 4})), 2, 2);
        CHECK(y.value()[0] == doctest::Approx(3.0));
        CHECK(y.value()[1] == doctest::Approx(4.0));
    }
    {
        // Constant input: gradient routes to the first element of each window.
        Tape tape;
        Parameter x(Tensor::full({1, 1, 4}, 2.0));
        Var y = maxpool1d(tape.param(x), 2, 2);
        CHECK(y.value()[0] == doctest::Approx(2.0));
        tape.backward(mean_all(y));
        CHECK(x.grad[0] == doctest::Approx(0.5));
        CHECK(x.grad[1] == doctest::Approx(0.0));
        CHECK(x.grad[2] == doctest::Approx(0.5));
        CHECK(x.grad[3] == doctest::Approx(0.0));
    }
    {
        Tape tape;
        CHECK_THROWS_AS(maxpool1d(tape.input(Tensor({1, 1, 4})), 0, 2), ParamError);
        CHECK_THROWS_AS(maxpool1d(tape.input(Tensor({1, 1, 4})), 2, 0), ParamError);
    }
}

TEST_CASE("elementwise op fixtures") {
    Tape tape;
    {
        Var y = relu(tape.input(Tensor({3}, {-1, 0, 2})));
        CHECK(y.value()[0] == 0.0);
        CHECK(y.value()[1] == 0.0);
        CHECK(y.value()[2] == 2.0);
    }
    {
        Var y = softmax_lastaxis(tape.input(Tensor({1, 2}, {0, 0})));
        CHECK(y.value()[0] == doctest::Approx(0.5));
        CHECK(y.value()[1] == doctest::Approx(0.5));
    }
    {
        // Constant vector normalizes to zero before scale/shift.
        Parameter g(Tensor::full({4}, 1.0)), b(Tensor({4}));
        Var y = layernorm(tape.input(Tensor::full({1, 4}, 3.7)), tape.param(g), tape.param(b));
        for (std::size_t i = 0; i < 4; ++i) CHECK(std::fabs(y.value()[i]) < 1e-9);
    }
}

TEST_CASE("softmax rows sum to one") {
    RandomSource rng(2024);
    Tensor x({8, 5});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-20.0, 20.0);
    Tape tape;
    Var y = softmax_lastaxis(tape.input(x));
    for (std::size_t r = 0; r < 8; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < 5; ++i) {
            const double p = y.value()[r * 5 + i];
            CHECK(p >= 0.0);
            s += p;
        }
        CHECK(std::fabs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("cross entropy fixtures") {
    Tape tape;
    {
        Var loss = cross_entropy(tape.input(Tensor({1, 4}, {1, 1, 1, 1})), {2});
        CHECK(loss.value().item() == doctest::Approx(std::log(4.0)).epsilon(1e-9));
    }
    {
        Var loss = cross_entropy(tape.input(Tensor({1, 3}, {1000.0, 0.0, 0.0})), {0});
        CHECK(loss.value().item() == doctest::Approx(0.0).epsilon(1e-12));
    }
    {
        CHECK_THROWS_AS(cross_entropy(tape.input(Tensor({1, 3})), {3}), DataError);
    }
}

TEST_CASE("backward basics") {
    {
        // d(x^2)/dx at 3 is 6.
        Tape tape;
        Parameter x(Tensor::scalar(3.0));
        Var v = tape.param(x);
        tape.backward(square(v));
        CHECK(x.grad[0] == doctest::Approx(6.0));
        CHECK(tape.size() == 0);  // tape cleared
    }
    {
        // Constant loss leaves every gradient zero.
        Tape tape;
        Parameter x(Tensor::scalar(3.0));
        Var v = tape.param(x);
        Var loss = affine(v, 0.0, 5.0);
        tape.backward(loss);
        CHECK(x.grad[0] == 0.0);
    }
    {
        Tape tape;
        Parameter x(Tensor({2}, {1, 2}));
        Var v = tape.param(x);
        CHECK_THROWS_AS(tape.backward(v), UsageError);
    }
}

TEST_CASE("dropout semantics") {
    RandomSource rng(99);
    Tensor x({64}, std::vector<double>(64, 1.0));
    {
        // Eval mode is the identity.
        Tape tape;
        Var y = dropout(tape.input(x), 0.5, rng, false);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.value()[i] == 1.0);
    }
    {
        CHECK_THROWS_AS(
            [&] {
                Tape tape;
                dropout(tape.input(x), 1.0, rng, true);
            }(),
            ParamError);
    }
    {
        // Train-mode expectation preserves the input: Monte Carlo mean over
        // >= 10^4 draws stays within 3 sigma.
        const double rate = 0.3;
        const std::size_t draws = 200;  // 200 draws x 64 elements = 12800 samples
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t d = 0; d < draws; ++d) {
            Tape tape;
            Var y = dropout(tape.input(x), rate, rng, true);
            for (std::size_t i = 0; i < x.size(); ++i) sum += y.value()[i];
            count += x.size();
        }
        const double mean = sum / static_cast<double>(count);
        // Per-sample variance: rate/(1-rate) for unit input.
        const double sigma = std::sqrt(rate / (1.0 - rate) / static_cast<double>(count));
        CHECK(std::fabs(mean - 1.0) <= 3.0 * sigma);
    }
}

TEST_CASE("attention single key and symmetry") {
    RandomSource init(5);
    MultiHeadAttention mha(8, 2, init);
    {
        // S=1: softmax over one key is exactly 1, so the output is the
        // output projection of the value path.
        RandomSource rng(6);
        Tensor x({1, 2, 8});
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
        Tape tape;
        Var out = mha.forward(tape, tape.input(x));

        Tape ref;
        Var flat = ref.input(x.reshaped({2, 8}));
        Var vproj = mha.v.forward(ref, flat);
        Var expected = mha.o.forward(ref, vproj);
        for (std::size_t i = 0; i < 16; ++i)
            CHECK(out.value()[i] == doctest::Approx(expected.value()[i]).epsilon(1e-12));
    }
    {
        // Identical tokens at every position: attention is uniform, so all
        // positions produce the single-token result.
        Tensor x({4, 1, 8});
        RandomSource rng(7);
        for (std::size_t i = 0; i < 8; ++i) x[i] = rng.uniform(-1.0, 1.0);
        for (std::size_t s = 1; s < 4; ++s)
            for (std::size_t i = 0; i < 8; ++i) x[s * 8 + i] = x[i];
        Tape tape;
        Var out = mha.forward(tape, tape.input(x));
        for (std::size_t s = 1; s < 4; ++s)
            for (std::size_t i = 0; i < 8; ++i)
                CHECK(out.value()[s * 8 + i] == doctest::Approx(out.value()[i]).epsilon(1e-10));
    }
    CHECK_THROWS_AS(MultiHeadAttention(8, 3, init), ConfigError);
}

TEST_CASE("deterministic forward passes") {
    RandomSource init(11);
    MultiHeadAttention mha(8, 2, init);
    Tensor x({3, 2, 8});
    RandomSource rng(12);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    auto run = [&]() {
        RandomSource drop_rng(77);
        Tape tape;
        Var h = mha.forward(tape, tape.input(x));
        Var d = dropout(h, 0.4, drop_rng, true);
        return d.value();
    };
    Tensor a = run(), b = run();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("gradient suite: primitive and composed operators") {
    // Runs the same checks `neurophys verify --only gradcheck` reports.
    auto checks = run_verification("gradcheck");
    CHECK(checks.size() >= 14);
    for (const auto& c : checks) {
        INFO(c.name, ": max rel err ", c.measured, " tol ", c.threshold, " ", c.detail);
        CHECK(c.pass);
    }
}
