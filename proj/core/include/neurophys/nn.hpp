#pragma once

#include <array>
#include <functional>
#include <string>

#include "neurophys/autograd.hpp"
#include "neurophys/ops.hpp"
#include "neurophys/random.hpp"

namespace neurophys {

using ParamVisitor = std::function<void(const std::string&, Parameter&)>;
using BufferVisitor = std::function<void(const std::string&, Tensor&)>;

// Weight initializers (He-uniform for conv/linear feeding ReLU).
Tensor init_uniform_fan_in(Shape shape, std::size_t fan_in, RandomSource& rng);

struct LinearLayer {
    LinearLayer() = default;
    LinearLayer(std::size_t in, std::size_t out, RandomSource& rng);
    Var forward(Tape& t, Var x);
    void visit(const std::string& prefix, const ParamVisitor& fn);

    Parameter w;  // [out, in]
    Parameter b;  // [out]
};

struct Conv2dLayer {
    Conv2dLayer() = default;
    Conv2dLayer(std::size_t cin, std::size_t cout, std::array<std::size_t, 2> kernel,
                std::array<std::size_t, 2> pad, RandomSource& rng);
    Var forward(Tape& t, Var x);
    void visit(const std::string& prefix, const ParamVisitor& fn);

    Parameter k;  // [cout, cin, kh, kw]
    std::array<std::size_t, 2> pad{0, 0};
};

struct Conv1dLayer {
    Conv1dLayer() = default;
    Conv1dLayer(std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t pad,
                RandomSource& rng);
    Var forward(Tape& t, Var x);
    void visit(const std::string& prefix, const ParamVisitor& fn);

    Parameter k;  // [cout, cin, kt]
    std::size_t pad = 0;
};

struct BatchNormLayer {
    BatchNormLayer() = default;
    explicit BatchNormLayer(std::size_t channels);
    Var forward(Tape& t, Var x, bool train);
    void visit(const std::string& prefix, const ParamVisitor& fn);
    void visit_buffers(const std::string& prefix, const BufferVisitor& fn);

    Parameter gamma, beta;
    Tensor running_mean, running_var;
    double momentum = 0.1;
    double eps = 1e-5;
};

struct LayerNormLayer {
    LayerNormLayer() = default;
    explicit LayerNormLayer(std::size_t dim);
    Var forward(Tape& t, Var x);
    void visit(const std::string& prefix, const ParamVisitor& fn);

    Parameter gamma, beta;
    double eps = 1e-5;
};

struct MultiHeadAttention {
    MultiHeadAttention() = default;
    MultiHeadAttention(std::size_t dim, std::size_t heads, RandomSource& rng);
    // x: [S,B,D] -> [S,B,D]
    Var forward(Tape& t, Var x);
    void visit(const std::string& prefix, const ParamVisitor& fn);

    LinearLayer q, k, v, o;
    std::size_t heads = 1;
    std::size_t dim = 0;
};

// One encoder layer: post-norm self-attention + position-wise feed-forward
// (expansion x4, ReLU).
struct EncoderLayer {
    EncoderLayer() = default;
    EncoderLayer(std::size_t dim, std::size_t heads, RandomSource& rng);
    Var forward(Tape& t, Var x);
    void visit(const std::string& prefix, const ParamVisitor& fn);

    MultiHeadAttention mha;
    LayerNormLayer ln1, ln2;
    LinearLayer ff1, ff2;
};

// Functional form used by tests and the verification harness.
Var multi_head_attention(Tape& t, Var x, MultiHeadAttention& layer);

}  // namespace neurophys
