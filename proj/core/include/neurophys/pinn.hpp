#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "neurophys/fhn.hpp"
#include "neurophys/nn.hpp"

namespace neurophys {

// Input geometry the model is built for.
struct InputGeometry {
    std::size_t windows = 0;   // W
    std::size_t bands = 0;     // F
    std::size_t channels = 0;  // C
    std::size_t window_len = 0;  // omega
};

struct PinnConfig {
    std::size_t f1 = 32, f2 = 64;                  // conv filter counts
    std::array<std::size_t, 2> k1{3, 3}, k2{3, 3};  // kernels
    std::array<std::size_t, 2> p1{1, 1}, p2{1, 1};  // paddings
    std::size_t pool_kernel = 2, pool_stride = 2;
    std::size_t hidden_dim = 128;
    std::size_t layers = 2;
    std::size_t heads = 4;
    double dropout = 0.5;
    std::size_t num_nodes = 0;    // defaults to channel count when 0
    std::size_t data_points = 0;  // defaults to window_len / 5 when 0

    void validate() const;
};

// Conv stack -> fully connected -> transformer encoder over the window axis
// -> linear head emitting the activation and recovery fields.
class PinnModel {
   public:
    PinnModel() = default;
    PinnModel(PinnConfig cfg, InputGeometry geom, RandomSource& rng);

    // x: [B,W,F,C,omega] -> fields of shape [B,W,num_nodes,data_points].
    StateVars forward(Tape& tape, const Tensor& x, bool train, RandomSource* rng,
                      double dt) ;

    void visit(const std::string& prefix, const ParamVisitor& fn);
    void visit_buffers(const std::string& prefix, const BufferVisitor& fn);
    // Freeze/unfreeze the conv + transformer trunk; the output head stays
    // trainable.
    void set_trunk_trainable(bool trainable);

    const PinnConfig& config() const { return cfg_; }
    const InputGeometry& geometry() const { return geom_; }

   private:
    PinnConfig cfg_;
    InputGeometry geom_;
    std::size_t conv_h_ = 0, conv_w_ = 0, flat_dim_ = 0;

    Conv2dLayer conv1_, conv2_;
    BatchNormLayer bn1_, bn2_;
    LinearLayer fc_;
    Parameter pos_;  // [W, hidden]
    std::vector<EncoderLayer> encoder_;
    LinearLayer head_;
};

std::size_t count_parameters(PinnModel& model);

}  // namespace neurophys
