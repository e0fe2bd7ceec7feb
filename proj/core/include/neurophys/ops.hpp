#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "neurophys/autograd.hpp"
#include "neurophys/random.hpp"
#include "neurophys/tensor.hpp"

namespace neurophys {

// Shape manipulation (copying views; sizes are desk-scale).
Var reshape(Var x, Shape new_shape);
Var permute(Var x, const std::vector<std::size_t>& axes);
Var slice(Var x, std::size_t axis, std::size_t start, std::size_t len);

// Elementwise arithmetic.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// scale * x + shift, elementwise with scalar constants.
Var affine(Var x, double scale, double shift);
Var square(Var x);

// Reductions.
Var mean_all(Var x);
Var mean_axis(Var x, std::size_t axis);

// x: [S,B,D], bias: [S,D] broadcast over the middle axis.
Var add_seq_bias(Var x, Var bias);

// out[..., i, t] = sum_j m[i][j] * x[..., j, t]; m is an [N,N] constant
// applied over the second-to-last axis.
Var matrix_apply_nodes(Var x, const Tensor& m);

// Forward difference along the last axis, scaled by 1/dt; output one shorter.
Var finite_diff(Var x, double dt);

// y = x * w^T + b with x:[B,din], w:[dout,din], b:[dout].
Var linear(Var x, Var w, Var b);
// a:[n,m] * b:[m,p].
Var matmul(Var a, Var b);
// Batched matmul: a:[...,n,m] * b:[...,m,p] with identical leading dims.
Var bmm(Var a, Var b);

// Cross-correlation, stride 1, zero padding. x:[B,Cin,H,W], k:[Cout,Cin,kh,kw].
Var conv2d(Var x, Var k, std::array<std::size_t, 2> pad);
// x:[B,Cin,T], k:[Cout,Cin,kt].
Var conv1d(Var x, Var k, std::size_t pad);

// Max pooling over the trailing spatial axes; ties route the gradient to the
// lowest flat index within the window.
Var maxpool2d(Var x, std::size_t kernel, std::size_t stride);
Var maxpool1d(Var x, std::size_t kernel, std::size_t stride);

Var relu(Var x);
Var softmax_lastaxis(Var x);

// Normalization over the last axis with learned scale/shift.
Var layernorm(Var x, Var gamma, Var beta, double eps = 1e-5);

// Per-channel normalization over axis 1 of [N,C,...]. Train mode uses batch
// statistics and updates the running buffers in place; eval mode uses the
// running averages.
Var batchnorm(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var, bool train,
              double momentum = 0.1, double eps = 1e-5);

// Train mode zeroes elements with probability rate and scales survivors by
// 1/(1-rate); eval mode is the identity. rate must be in [0,1).
Var dropout(Var x, double rate, RandomSource& rng, bool train);

// Mean over the batch of -log softmax(logits)[label], max-stabilized.
Var cross_entropy(Var logits, const std::vector<std::size_t>& labels);

}  // namespace neurophys
