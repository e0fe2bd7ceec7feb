#include <benchmark/benchmark.h>

#include "neurophys/nn.hpp"
#include "neurophys/ops.hpp"
#include "neurophys/random.hpp"
#include "neurophys/sigproc.hpp"

using namespace neurophys;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
    RandomSource rng(seed);
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

}  // namespace

static void BM_Conv2dForward(benchmark::State& state) {
    const std::size_t c = state.range(0);
    Tensor x = random_tensor({4, 9, c, 128}, 1);
    Parameter k(random_tensor({16, 9, 3, 3}, 2));
    for (auto _ : state) {
        Tape tape;
        Var y = conv2d(tape.input(x), tape.param(k), {1, 1});
        benchmark::DoNotOptimize(y.value().data());
    }
}
BENCHMARK(BM_Conv2dForward)->Arg(4)->Arg(8)->Arg(22);

static void BM_Conv2dBackward(benchmark::State& state) {
    Tensor x = random_tensor({4, 9, 8, 128}, 3);
    Parameter k(random_tensor({16, 9, 3, 3}, 4));
    for (auto _ : state) {
        Tape tape;
        Var y = conv2d(tape.input(x), tape.param(k), {1, 1});
        tape.backward(mean_all(y));
        benchmark::DoNotOptimize(k.grad.data());
        k.zero_grad();
    }
}
BENCHMARK(BM_Conv2dBackward);

static void BM_AttentionForward(benchmark::State& state) {
    const std::size_t s = state.range(0);
    RandomSource init(5);
    MultiHeadAttention mha(64, 4, init);
    Tensor x = random_tensor({s, 8, 64}, 6);
    for (auto _ : state) {
        Tape tape;
        Var y = mha.forward(tape, tape.input(x));
        benchmark::DoNotOptimize(y.value().data());
    }
}
BENCHMARK(BM_AttentionForward)->Arg(4)->Arg(16);

static void BM_FilterBankApply(benchmark::State& state) {
    Tensor x = random_tensor({1, 4, 8, 256}, 7);
    auto bank = make_filter_bank(FilterBankSpec::default_bank(), 250.0);
    for (auto _ : state) {
        Tensor y = apply_filter_bank(x, bank);
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_FilterBankApply);
