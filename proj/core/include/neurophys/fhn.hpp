#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "neurophys/autograd.hpp"
#include "neurophys/sigproc.hpp"
#include "neurophys/tensor.hpp"

namespace neurophys {

// FitzHugh-Nagumo constants (dimensionless).
struct FhnParams {
    double epsilon = 0.08;
    double a = 0.7;
    double b = 0.8;
    double stimulus = 0.5;  // external current I
    double dt = 0.01;       // residual time step
};

// Pairwise diffusive coupling: off-diagonal entries equal coupling_strength,
// diagonal zero.
struct CouplingMatrix {
    Tensor k;  // [N, N]
    double coupling_strength = 0.0;

    std::size_t nodes() const { return k.ndim() == 2 ? k.dim(0) : 0; }
};

// Activation field v and recovery field w with identical shapes [..., N, T].
struct StatePair {
    Tensor v, w;
    double dt = 0.0;
};

// Differentiable counterpart living on a tape.
struct StateVars {
    Var v, w;
    double dt = 0.0;
};

// dv_i = v_i - v_i^3/3 - w_i + I + sum_j K_ij (v_j - v_i)
// dw_i = eps (v_i + a - b w_i)
void fhn_rhs(const std::vector<double>& v, const std::vector<double>& w, const FhnParams& params,
             const CouplingMatrix* coupling, std::vector<double>& dv, std::vector<double>& dw);

CouplingMatrix build_coupling_matrix(std::size_t n_nodes, double strength = 0.1);

// Classical fixed-step RK4 over [0, t_end]; returns T = floor(t_end/dt_int)+1
// points per node including the initial state. Throws DivergenceError with
// the step index if the state leaves the finite range.
StatePair integrate_rk4(const std::vector<double>& v0, const std::vector<double>& w0,
                        const FhnParams& params, const CouplingMatrix* coupling, double t_end,
                        double dt_int);

// Forward difference along the last axis (tensor form, no tape).
Tensor finite_diff_dt(const Tensor& x, double dt);

// Residuals of the (optionally coupled) dynamics against forward differences;
// aligned to the first T-1 time points. Differentiable end-to-end.
std::pair<Var, Var> fhn_residuals(Tape& tape, const StateVars& s, const FhnParams& params,
                                  const CouplingMatrix* coupling);
std::pair<Tensor, Tensor> fhn_residuals(const StatePair& s, const FhnParams& params,
                                        const CouplingMatrix* coupling);

// Mean over residual points of f_v^2 + f_w^2.
Var physics_loss(Tape& tape, const StateVars& s, const FhnParams& params,
                 const CouplingMatrix* coupling);
double physics_loss(const StatePair& s, const FhnParams& params, const CouplingMatrix* coupling);

// Coupled-network synthetic trials: class k integrates with
// I = 0.3 + 0.1k and coupling strength 0.05 + 0.05k, mixes node potentials to
// channels through a seeded matrix and adds white noise. Deterministic per
// seed; sample values are f32-quantized so EEGB round trips are bit-exact.
struct SynthSpec {
    std::size_t n_trials = 0;
    std::size_t n_channels = 0;
    std::size_t classes = 2;
    double noise_sigma = 0.05;
    std::uint64_t seed = 0;
    std::size_t n_samples = 256;
    double sample_rate_hz = 128.0;
    double model_time_per_sample = 2.8;  // maps the limit cycle near 10 Hz
};

TrialSet synthesize_trialset(const SynthSpec& spec);

// CSV trajectory export: header "t,node,v,w", one row per (time, node),
// 9 significant digits, covering time indices [0, limit).
void write_trajectory_csv(std::ostream& out, const StatePair& s,
                          std::optional<std::size_t> limit = std::nullopt);

}  // namespace neurophys
