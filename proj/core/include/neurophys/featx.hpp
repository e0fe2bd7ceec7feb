#pragma once

#include "neurophys/fhn.hpp"
#include "neurophys/nn.hpp"

namespace neurophys {

struct FeatxConfig {
    std::size_t f1 = 16, f2 = 32;  // conv1d filter counts
    std::size_t kernel = 5;
    std::size_t pad = 2;
    std::size_t pool_kernel = 2, pool_stride = 2;
    std::size_t latent_dim = 64;  // N_f
    std::size_t classes = 4;      // K

    void validate() const;
};

// One conv1d->bn->relu->pool->conv1d->bn->relu->pool->linear->relu branch.
// Nodes are folded into the batch axis, so branch weights are shared per node.
struct FeatxBranch {
    FeatxBranch() = default;
    FeatxBranch(const FeatxConfig& cfg, std::size_t time_len, RandomSource& rng);
    // x: [rows, 1, T] -> [rows, latent_dim]
    Var forward(Tape& tape, Var x, bool train);
    void visit(const std::string& prefix, const ParamVisitor& fn);
    void visit_buffers(const std::string& prefix, const BufferVisitor& fn);

    Conv1dLayer conv1, conv2;
    BatchNormLayer bn1, bn2;
    LinearLayer fc;
    std::size_t flat_dim = 0;
    std::size_t pool_kernel = 2, pool_stride = 2;
};

// Parallel v/w branches with separate weights, fused by elementwise addition
// and layer normalization, then mean-pooled over nodes.
class FeatxNet {
   public:
    FeatxNet() = default;
    FeatxNet(FeatxConfig cfg, std::size_t num_nodes, std::size_t time_len, RandomSource& rng);

    // s fields: [B, W, N, data_points]; returns [B, latent_dim].
    Var extract_features(Tape& tape, const StateVars& s, bool train);

    void visit(const std::string& prefix, const ParamVisitor& fn);
    void visit_buffers(const std::string& prefix, const BufferVisitor& fn);

    const FeatxConfig& config() const { return cfg_; }
    FeatxBranch& v_branch() { return v_branch_; }
    FeatxBranch& w_branch() { return w_branch_; }
    LayerNormLayer& fuse_norm() { return fuse_norm_; }

   private:
    FeatxConfig cfg_;
    std::size_t num_nodes_ = 0;
    std::size_t time_len_ = 0;
    FeatxBranch v_branch_, w_branch_;
    LayerNormLayer fuse_norm_;
};

// Single linear map from fused features to class logits.
class Classifier {
   public:
    Classifier() = default;
    Classifier(std::size_t latent_dim, std::size_t classes, RandomSource& rng);
    Var classify(Tape& tape, Var features);
    void visit(const std::string& prefix, const ParamVisitor& fn);
    std::size_t classes() const { return head_.w.value.dim(0); }

   private:
    LinearLayer head_;
};

}  // namespace neurophys
