#include "neurophys/nn.hpp"

#include <cmath>

#include "neurophys/errors.hpp"

namespace neurophys {

Tensor init_uniform_fan_in(Shape shape, std::size_t fan_in, RandomSource& rng) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in > 0 ? fan_in : 1));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

LinearLayer::LinearLayer(std::size_t in, std::size_t out, RandomSource& rng)
    : w(init_uniform_fan_in({out, in}, in, rng)), b(Tensor({out})) {}

Var LinearLayer::forward(Tape& t, Var x) {
    return linear(x, t.param(w), t.param(b));
}

void LinearLayer::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".w", w);
    fn(prefix + ".b", b);
}

Conv2dLayer::Conv2dLayer(std::size_t cin, std::size_t cout, std::array<std::size_t, 2> kernel,
                         std::array<std::size_t, 2> pad, RandomSource& rng)
    : k(init_uniform_fan_in({cout, cin, kernel[0], kernel[1]}, cin * kernel[0] * kernel[1], rng)),
      pad(pad) {}

Var Conv2dLayer::forward(Tape& t, Var x) {
    return conv2d(x, t.param(k), pad);
}

void Conv2dLayer::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".k", k);
}

Conv1dLayer::Conv1dLayer(std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t pad,
                         RandomSource& rng)
    : k(init_uniform_fan_in({cout, cin, kernel}, cin * kernel, rng)), pad(pad) {}

Var Conv1dLayer::forward(Tape& t, Var x) {
    return conv1d(x, t.param(k), pad);
}

void Conv1dLayer::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".k", k);
}

BatchNormLayer::BatchNormLayer(std::size_t channels)
    : gamma(Tensor::full({channels}, 1.0)),
      beta(Tensor({channels})),
      running_mean(Tensor({channels})),
      running_var(Tensor::full({channels}, 1.0)) {}

Var BatchNormLayer::forward(Tape& t, Var x, bool train) {
    return batchnorm(x, t.param(gamma), t.param(beta), running_mean, running_var, train, momentum,
                     eps);
}

void BatchNormLayer::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".gamma", gamma);
    fn(prefix + ".beta", beta);
}

void BatchNormLayer::visit_buffers(const std::string& prefix, const BufferVisitor& fn) {
    fn(prefix + ".running_mean", running_mean);
    fn(prefix + ".running_var", running_var);
}

LayerNormLayer::LayerNormLayer(std::size_t dim)
    : gamma(Tensor::full({dim}, 1.0)), beta(Tensor({dim})) {}

Var LayerNormLayer::forward(Tape& t, Var x) {
    return layernorm(x, t.param(gamma), t.param(beta), eps);
}

void LayerNormLayer::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".gamma", gamma);
    fn(prefix + ".beta", beta);
}

MultiHeadAttention::MultiHeadAttention(std::size_t dim, std::size_t heads, RandomSource& rng)
    : q(dim, dim, rng), k(dim, dim, rng), v(dim, dim, rng), o(dim, dim, rng), heads(heads),
      dim(dim) {
    if (heads == 0 || dim % heads != 0)
        throw ConfigError("attention: model dim " + std::to_string(dim) +
                          " not divisible by heads " + std::to_string(heads));
}

Var MultiHeadAttention::forward(Tape& t, Var x) {
    const Tensor& xv = x.value();
    if (xv.ndim() != 3) throw ShapeError("attention: input must be [S,B,D]");
    const std::size_t S = xv.dim(0), B = xv.dim(1), D = xv.dim(2);
    if (D != dim) throw ConfigError("attention: input dim " + std::to_string(D) +
                                    " != layer dim " + std::to_string(dim));
    const std::size_t H = heads, dh = D / H;
    Var flat = reshape(x, {S * B, D});
    auto split = [&](Var proj) {
        // [S*B, D] -> [B,H,S,dh]
        return permute(reshape(proj, {S, B, H, dh}), {1, 2, 0, 3});
    };
    Var qh = split(q.forward(t, flat));
    Var kh = split(k.forward(t, flat));
    Var vh = split(v.forward(t, flat));
    Var scores = affine(bmm(qh, permute(kh, {0, 1, 3, 2})), 1.0 / std::sqrt(double(dh)), 0.0);
    Var attn = softmax_lastaxis(scores);          // [B,H,S,S]
    Var ctx = bmm(attn, vh);                      // [B,H,S,dh]
    Var merged = reshape(permute(ctx, {2, 0, 1, 3}), {S * B, D});
    return reshape(o.forward(t, merged), {S, B, D});
}

void MultiHeadAttention::visit(const std::string& prefix, const ParamVisitor& fn) {
    q.visit(prefix + ".q", fn);
    k.visit(prefix + ".k", fn);
    v.visit(prefix + ".v", fn);
    o.visit(prefix + ".o", fn);
}

EncoderLayer::EncoderLayer(std::size_t dim, std::size_t heads, RandomSource& rng)
    : mha(dim, heads, rng), ln1(dim), ln2(dim), ff1(dim, 4 * dim, rng), ff2(4 * dim, dim, rng) {}

Var EncoderLayer::forward(Tape& t, Var x) {
    const Tensor& xv = x.value();
    const std::size_t S = xv.dim(0), B = xv.dim(1), D = xv.dim(2);
    Var attn_out = mha.forward(t, x);
    Var h = ln1.forward(t, add(x, attn_out));
    Var flat = reshape(h, {S * B, D});
    Var ff = ff2.forward(t, relu(ff1.forward(t, flat)));
    Var out = ln2.forward(t, add(h, reshape(ff, {S, B, D})));
    return out;
}

void EncoderLayer::visit(const std::string& prefix, const ParamVisitor& fn) {
    mha.visit(prefix + ".mha", fn);
    ln1.visit(prefix + ".ln1", fn);
    ln2.visit(prefix + ".ln2", fn);
    ff1.visit(prefix + ".ff1", fn);
    ff2.visit(prefix + ".ff2", fn);
}

Var multi_head_attention(Tape& t, Var x, MultiHeadAttention& layer) {
    return layer.forward(t, x);
}

}  // namespace neurophys
