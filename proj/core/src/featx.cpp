#include "neurophys/featx.hpp"

#include "neurophys/errors.hpp"
#include "neurophys/ops.hpp"

namespace neurophys {

namespace {

std::size_t pooled(std::size_t in, std::size_t kernel, std::size_t stride, const char* stage) {
    if (in < kernel)
        throw ConfigError(std::string(stage) + ": time axis of length " + std::to_string(in) +
                          " too short for pool window " + std::to_string(kernel));
    return (in - kernel) / stride + 1;
}

}  // namespace

void FeatxConfig::validate() const {
    if (f1 == 0 || f2 == 0 || kernel == 0 || pool_kernel == 0 || pool_stride == 0 ||
        latent_dim == 0 || classes == 0)
        throw ConfigError("featx config: counts must be >= 1");
}

FeatxBranch::FeatxBranch(const FeatxConfig& cfg, std::size_t time_len, RandomSource& rng)
    : conv1(1, cfg.f1, cfg.kernel, cfg.pad, rng),
      conv2(cfg.f1, cfg.f2, cfg.kernel, cfg.pad, rng),
      bn1(cfg.f1),
      bn2(cfg.f2),
      fc(),
      pool_kernel(cfg.pool_kernel),
      pool_stride(cfg.pool_stride) {
    const std::size_t padded1 = time_len + 2 * cfg.pad;
    if (cfg.kernel > padded1) throw ConfigError("featx conv1: kernel larger than padded input");
    std::size_t t = padded1 - cfg.kernel + 1;
    t = pooled(t, cfg.pool_kernel, cfg.pool_stride, "featx pool1");
    const std::size_t padded2 = t + 2 * cfg.pad;
    if (cfg.kernel > padded2) throw ConfigError("featx conv2: kernel larger than padded input");
    t = padded2 - cfg.kernel + 1;
    t = pooled(t, cfg.pool_kernel, cfg.pool_stride, "featx pool2");
    flat_dim = cfg.f2 * t;
    fc = LinearLayer(flat_dim, cfg.latent_dim, rng);
}

Var FeatxBranch::forward(Tape& tape, Var x, bool train) {
    Var h = relu(bn1.forward(tape, conv1.forward(tape, x), train));
    h = maxpool1d(h, pool_kernel, pool_stride);
    h = relu(bn2.forward(tape, conv2.forward(tape, h), train));
    h = maxpool1d(h, pool_kernel, pool_stride);
    h = reshape(h, {h.value().dim(0), flat_dim});
    return relu(fc.forward(tape, h));
}

void FeatxBranch::visit(const std::string& prefix, const ParamVisitor& fn) {
    conv1.visit(prefix + ".conv1", fn);
    bn1.visit(prefix + ".bn1", fn);
    conv2.visit(prefix + ".conv2", fn);
    bn2.visit(prefix + ".bn2", fn);
    fc.visit(prefix + ".fc", fn);
}

void FeatxBranch::visit_buffers(const std::string& prefix, const BufferVisitor& fn) {
    bn1.visit_buffers(prefix + ".bn1", fn);
    bn2.visit_buffers(prefix + ".bn2", fn);
}

FeatxNet::FeatxNet(FeatxConfig cfg, std::size_t num_nodes, std::size_t time_len,
                   RandomSource& rng)
    : cfg_(cfg), num_nodes_(num_nodes), time_len_(time_len) {
    cfg_.validate();
    if (num_nodes == 0 || time_len == 0)
        throw ConfigError("featx: node count and time length must be >= 1");
    v_branch_ = FeatxBranch(cfg_, time_len, rng);
    w_branch_ = FeatxBranch(cfg_, time_len, rng);
    fuse_norm_ = LayerNormLayer(cfg_.latent_dim);
}

Var FeatxNet::extract_features(Tape& tape, const StateVars& s, bool train) {
    const Tensor& vv = s.v.value();
    check_same_shape(vv, s.w.value(), "extract_features");
    if (vv.ndim() != 4)
        throw ShapeError("extract_features: expected [B,W,N,data_points], got " +
                         shape_str(vv.shape()));
    const std::size_t B = vv.dim(0), W = vv.dim(1), N = vv.dim(2), dp = vv.dim(3);
    if (N != num_nodes_ || W * dp != time_len_)
        throw ConfigError("extract_features: state " + shape_str(vv.shape()) +
                          " does not match featx geometry (N=" + std::to_string(num_nodes_) +
                          ", T=" + std::to_string(time_len_) + ")");
    // Windows fold into the time axis; nodes fold into the batch axis.
    auto branch_input = [&](Var field) {
        return reshape(permute(field, {0, 2, 1, 3}), {B * N, 1, W * dp});
    };
    Var v_fc = v_branch_.forward(tape, branch_input(s.v), train);
    Var w_fc = w_branch_.forward(tape, branch_input(s.w), train);
    Var fused = fuse_norm_.forward(tape, add(v_fc, w_fc));  // [B*N, latent]
    return mean_axis(reshape(fused, {B, N, cfg_.latent_dim}), 1);
}

void FeatxNet::visit(const std::string& prefix, const ParamVisitor& fn) {
    v_branch_.visit(prefix + ".v", fn);
    w_branch_.visit(prefix + ".w", fn);
    fuse_norm_.visit(prefix + ".fuse", fn);
}

void FeatxNet::visit_buffers(const std::string& prefix, const BufferVisitor& fn) {
    v_branch_.visit_buffers(prefix + ".v", fn);
    w_branch_.visit_buffers(prefix + ".w", fn);
}

Classifier::Classifier(std::size_t latent_dim, std::size_t classes, RandomSource& rng)
    : head_(latent_dim, classes, rng) {}

Var Classifier::classify(Tape& tape, Var features) { return head_.forward(tape, features); }

void Classifier::visit(const std::string& prefix, const ParamVisitor& fn) {
    head_.visit(prefix + ".head", fn);
}

}  // namespace neurophys
