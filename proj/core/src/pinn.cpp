#include "neurophys/pinn.hpp"

#include "neurophys/errors.hpp"
#include "neurophys/ops.hpp"

namespace neurophys {

namespace {

std::size_t conv_out(std::size_t in, std::size_t kernel, std::size_t pad, const char* stage) {
    const std::size_t padded = in + 2 * pad;
    if (kernel == 0 || kernel > padded)
        throw ConfigError(std::string(stage) + ": kernel " + std::to_string(kernel) +
                          " larger than padded extent " + std::to_string(padded));
    return padded - kernel + 1;
}

std::size_t pool_out(std::size_t in, std::size_t kernel, std::size_t stride, const char* stage) {
    if (kernel == 0 || stride == 0)
        throw ConfigError(std::string(stage) + ": pool kernel/stride must be positive");
    if (in < kernel)
        throw ConfigError(std::string(stage) + ": pool window " + std::to_string(kernel) +
                          " does not fit extent " + std::to_string(in));
    return (in - kernel) / stride + 1;
}

}  // namespace

void PinnConfig::validate() const {
    if (f1 == 0 || f2 == 0 || hidden_dim == 0 || layers == 0 || heads == 0)
        throw ConfigError("pinn config: counts must be >= 1");
    if (hidden_dim % heads != 0)
        throw ConfigError("pinn config: hidden_dim " + std::to_string(hidden_dim) +
                          " not divisible by heads " + std::to_string(heads));
    if (dropout < 0.0 || dropout >= 1.0)
        throw ConfigError("pinn config: dropout must be in [0,1)");
}

PinnModel::PinnModel(PinnConfig cfg, InputGeometry geom, RandomSource& rng)
    : cfg_(cfg), geom_(geom) {
    cfg_.validate();
    if (geom_.windows == 0 || geom_.bands == 0 || geom_.channels == 0 || geom_.window_len == 0)
        throw ConfigError("pinn model: input geometry must be fully specified");
    if (cfg_.num_nodes == 0) cfg_.num_nodes = geom_.channels;
    if (cfg_.data_points == 0) cfg_.data_points = std::max<std::size_t>(1, geom_.window_len / 5);

    std::size_t h = conv_out(geom_.channels, cfg_.k1[0], cfg_.p1[0], "conv1 (spatial)");
    std::size_t w = conv_out(geom_.window_len, cfg_.k1[1], cfg_.p1[1], "conv1 (temporal)");
    h = pool_out(h, cfg_.pool_kernel, cfg_.pool_stride, "pool1 (spatial)");
    w = pool_out(w, cfg_.pool_kernel, cfg_.pool_stride, "pool1 (temporal)");
    h = conv_out(h, cfg_.k2[0], cfg_.p2[0], "conv2 (spatial)");
    w = conv_out(w, cfg_.k2[1], cfg_.p2[1], "conv2 (temporal)");
    h = pool_out(h, cfg_.pool_kernel, cfg_.pool_stride, "pool2 (spatial)");
    w = pool_out(w, cfg_.pool_kernel, cfg_.pool_stride, "pool2 (temporal)");
    conv_h_ = h;
    conv_w_ = w;
    flat_dim_ = cfg_.f2 * h * w;

    conv1_ = Conv2dLayer(geom_.bands, cfg_.f1, cfg_.k1, cfg_.p1, rng);
    bn1_ = BatchNormLayer(cfg_.f1);
    conv2_ = Conv2dLayer(cfg_.f1, cfg_.f2, cfg_.k2, cfg_.p2, rng);
    bn2_ = BatchNormLayer(cfg_.f2);
    fc_ = LinearLayer(flat_dim_, cfg_.hidden_dim, rng);
    {
        Tensor pos({geom_.windows, cfg_.hidden_dim});
        for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = rng.gaussian(0.0, 0.02);
        pos_ = Parameter(std::move(pos));
    }
    encoder_.reserve(cfg_.layers);
    for (std::size_t l = 0; l < cfg_.layers; ++l)
        encoder_.emplace_back(cfg_.hidden_dim, cfg_.heads, rng);
    head_ = LinearLayer(cfg_.hidden_dim, 2 * cfg_.num_nodes * cfg_.data_points, rng);
    // Near-zero head init keeps the initial fields and their forward
    // differences O(1), on the scale of the rest state.
    for (std::size_t i = 0; i < head_.w.value.size(); ++i) head_.w.value[i] *= 0.01;
}

StateVars PinnModel::forward(Tape& tape, const Tensor& x, bool train, RandomSource* rng,
                             double dt) {
    if (x.ndim() != 5 || x.dim(1) != geom_.windows || x.dim(2) != geom_.bands ||
        x.dim(3) != geom_.channels || x.dim(4) != geom_.window_len)
        throw ConfigError("pinn forward: input " + shape_str(x.shape()) +
                          " does not match model geometry [B," + std::to_string(geom_.windows) +
                          "," + std::to_string(geom_.bands) + "," +
                          std::to_string(geom_.channels) + "," +
                          std::to_string(geom_.window_len) + "]");
    if (train && cfg_.dropout > 0.0 && rng == nullptr)
        throw UsageError("pinn forward: train mode with dropout needs an RNG");
    const std::size_t B = x.dim(0), W = geom_.windows;

    Var h = tape.input(x);
    h = reshape(h, {B * W, geom_.bands, geom_.channels, geom_.window_len});
    h = relu(bn1_.forward(tape, conv1_.forward(tape, h), train));
    h = maxpool2d(h, cfg_.pool_kernel, cfg_.pool_stride);
    h = relu(bn2_.forward(tape, conv2_.forward(tape, h), train));
    h = maxpool2d(h, cfg_.pool_kernel, cfg_.pool_stride);

    h = reshape(h, {B * W, flat_dim_});
    h = relu(fc_.forward(tape, h));
    if (train && cfg_.dropout > 0.0) h = dropout(h, cfg_.dropout, *rng, true);

    // Window embeddings of each trial form the encoder sequence.
    h = permute(reshape(h, {B, W, cfg_.hidden_dim}), {1, 0, 2});  // [W,B,hidden]
    h = add_seq_bias(h, tape.param(pos_));
    for (EncoderLayer& layer : encoder_) h = layer.forward(tape, h);
    h = reshape(permute(h, {1, 0, 2}), {B * W, cfg_.hidden_dim});

    Var out = head_.forward(tape, h);
    out = reshape(out, {B, W, 2 * cfg_.num_nodes, cfg_.data_points});
    StateVars s;
    s.v = slice(out, 2, 0, cfg_.num_nodes);
    s.w = slice(out, 2, cfg_.num_nodes, cfg_.num_nodes);
    s.dt = dt;
    return s;
}

void PinnModel::visit(const std::string& prefix, const ParamVisitor& fn) {
    conv1_.visit(prefix + ".conv1", fn);
    bn1_.visit(prefix + ".bn1", fn);
    conv2_.visit(prefix + ".conv2", fn);
    bn2_.visit(prefix + ".bn2", fn);
    fc_.visit(prefix + ".fc", fn);
    fn(prefix + ".pos", pos_);
    for (std::size_t l = 0; l < encoder_.size(); ++l)
        encoder_[l].visit(prefix + ".enc" + std::to_string(l), fn);
    head_.visit(prefix + ".head", fn);
}

void PinnModel::visit_buffers(const std::string& prefix, const BufferVisitor& fn) {
    bn1_.visit_buffers(prefix + ".bn1", fn);
    bn2_.visit_buffers(prefix + ".bn2", fn);
}

void PinnModel::set_trunk_trainable(bool trainable) {
    const ParamVisitor set = [trainable](const std::string&, Parameter& p) {
        p.trainable = trainable;
    };
    conv1_.visit("", set);
    bn1_.visit("", set);
    conv2_.visit("", set);
    bn2_.visit("", set);
    fc_.visit("", set);
    set("", pos_);
    for (auto& layer : encoder_) layer.visit("", set);
}

std::size_t count_parameters(PinnModel& model) {
    std::size_t n = 0;
    model.visit("pinn", [&n](const std::string&, Parameter& p) {
        if (p.trainable) n += p.value.size();
    });
    return n;
}

}  // namespace neurophys
