#include "neurophys/fhn.hpp"

#include <cmath>

#include "neurophys/errors.hpp"
#include "neurophys/ops.hpp"
#include "neurophys/random.hpp"

namespace neurophys {

void fhn_rhs(const std::vector<double>& v, const std::vector<double>& w, const FhnParams& params,
             const CouplingMatrix* coupling, std::vector<double>& dv, std::vector<double>& dw) {
    const std::size_t n = v.size();
    if (w.size() != n) throw ShapeError("fhn_rhs: v and w lengths differ");
    dv.resize(n);
    dw.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        dv[i] = v[i] - v[i] * v[i] * v[i] / 3.0 - w[i] + params.stimulus;
        dw[i] = params.epsilon * (v[i] + params.a - params.b * w[i]);
    }
    if (coupling) {
        const Tensor& k = coupling->k;
        if (coupling->nodes() != n)
            throw ShapeError("fhn_rhs: coupling matrix size " + std::to_string(coupling->nodes()) +
                             " != node count " + std::to_string(n));
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += k[i * n + j] * (v[j] - v[i]);
            dv[i] += acc;
        }
    }
}

CouplingMatrix build_coupling_matrix(std::size_t n_nodes, double strength) {
    if (n_nodes == 0) throw ParamError("coupling matrix: node count must be >= 1");
    CouplingMatrix c;
    c.coupling_strength = strength;
    c.k = Tensor({n_nodes, n_nodes});
    for (std::size_t i = 0; i < n_nodes; ++i)
        for (std::size_t j = 0; j < n_nodes; ++j)
            c.k[i * n_nodes + j] = (i == j) ? 0.0 : strength;
    return c;
}

StatePair integrate_rk4(const std::vector<double>& v0, const std::vector<double>& w0,
                        const FhnParams& params, const CouplingMatrix* coupling, double t_end,
                        double dt_int) {
    if (dt_int <= 0.0) throw ParamError("integrate_rk4: dt_int must be positive");
    if (t_end < dt_int) throw ParamError("integrate_rk4: t_end must be >= dt_int");
    const std::size_t n = v0.size();
    if (w0.size() != n) throw ShapeError("integrate_rk4: v0 and w0 lengths differ");
    const std::size_t steps = static_cast<std::size_t>(std::floor(t_end / dt_int + 1e-9));
    const std::size_t T = steps + 1;

    StatePair out;
    out.dt = dt_int;
    out.v = Tensor({n, T});
    out.w = Tensor({n, T});

    std::vector<double> v = v0, w = w0;
    std::vector<double> k1v, k1w, k2v, k2w, k3v, k3w, k4v, k4w, tv(n), tw(n);
    auto record = [&](std::size_t t) {
        for (std::size_t i = 0; i < n; ++i) {
            out.v[i * T + t] = v[i];
            out.w[i * T + t] = w[i];
        }
    };
    record(0);
    for (std::size_t s = 1; s <= steps; ++s) {
        fhn_rhs(v, w, params, coupling, k1v, k1w);
        for (std::size_t i = 0; i < n; ++i) {
            tv[i] = v[i] + 0.5 * dt_int * k1v[i];
            tw[i] = w[i] + 0.5 * dt_int * k1w[i];
        }
        fhn_rhs(tv, tw, params, coupling, k2v, k2w);
        for (std::size_t i = 0; i < n; ++i) {
            tv[i] = v[i] + 0.5 * dt_int * k2v[i];
            tw[i] = w[i] + 0.5 * dt_int * k2w[i];
        }
        fhn_rhs(tv, tw, params, coupling, k3v, k3w);
        for (std::size_t i = 0; i < n; ++i) {
            tv[i] = v[i] + dt_int * k3v[i];
            tw[i] = w[i] + dt_int * k3w[i];
        }
        fhn_rhs(tv, tw, params, coupling, k4v, k4w);
        for (std::size_t i = 0; i < n; ++i) {
            v[i] += dt_int / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
            w[i] += dt_int / 6.0 * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i]);
            if (!std::isfinite(v[i]) || !std::isfinite(w[i]))
                throw DivergenceError("integrate_rk4: non-finite state", s);
        }
        record(s);
    }
    return out;
}

Tensor finite_diff_dt(const Tensor& x, double dt) {
    Tape tape;
    Var xv = tape.input(x);
    return finite_diff(xv, dt).value();
}

namespace {

// K applied over the node axis minus the row-sum diagonal:
// out_i = sum_j K_ij (v_j - v_i) = (K v)_i - rowsum_i v_i.
Tensor coupling_operator(const CouplingMatrix& coupling) {
    const std::size_t n = coupling.nodes();
    Tensor a = coupling.k;
    for (std::size_t i = 0; i < n; ++i) {
        double rowsum = 0.0;
        for (std::size_t j = 0; j < n; ++j) rowsum += coupling.k[i * n + j];
        a[i * n + i] -= rowsum;
    }
    return a;
}

}  // namespace

std::pair<Var, Var> fhn_residuals(Tape& tape, const StateVars& s, const FhnParams& params,
                                  const CouplingMatrix* coupling) {
    const Shape vshape = s.v.value().shape();
    check_same_shape(s.v.value(), s.w.value(), "fhn_residuals");
    if (vshape.size() < 2 || vshape.back() < 2)
        throw ShapeError("fhn_residuals: need [..., N, T] with T >= 2, got " +
                         shape_str(vshape));
    if (s.dt <= 0.0) throw ParamError("fhn_residuals: dt must be positive");
    const std::size_t T = vshape.back();

    Var dv = finite_diff(s.v, s.dt);
    Var dw = finite_diff(s.w, s.dt);
    Var vh = slice(s.v, vshape.size() - 1, 0, T - 1);
    Var wh = slice(s.w, vshape.size() - 1, 0, T - 1);

    // rhs_v = v - v^3/3 - w + I (+ coupling)
    Var v3 = mul(mul(vh, vh), vh);
    Var rhs_v = add(sub(vh, affine(v3, 1.0 / 3.0, 0.0)), affine(wh, -1.0, params.stimulus));
    if (coupling) {
        if (coupling->nodes() != vshape[vshape.size() - 2])
            throw ShapeError("fhn_residuals: coupling size does not match node axis");
        rhs_v = add(rhs_v, matrix_apply_nodes(vh, coupling_operator(*coupling)));
    }
    // rhs_w = eps (v + a - b w)
    Var rhs_w = affine(add(vh, affine(wh, -params.b, 0.0)), params.epsilon,
                       params.epsilon * params.a);
    return {sub(dv, rhs_v), sub(dw, rhs_w)};
}

std::pair<Tensor, Tensor> fhn_residuals(const StatePair& s, const FhnParams& params,
                                        const CouplingMatrix* coupling) {
    Tape tape;
    StateVars sv{tape.input(s.v), tape.input(s.w), s.dt};
    auto [fv, fw] = fhn_residuals(tape, sv, params, coupling);
    return {fv.value(), fw.value()};
}

Var physics_loss(Tape& tape, const StateVars& s, const FhnParams& params,
                 const CouplingMatrix* coupling) {
    auto [fv, fw] = fhn_residuals(tape, s, params, coupling);
    return add(mean_all(square(fv)), mean_all(square(fw)));
}

double physics_loss(const StatePair& s, const FhnParams& params, const CouplingMatrix* coupling) {
    Tape tape;
    StateVars sv{tape.input(s.v), tape.input(s.w), s.dt};
    return physics_loss(tape, sv, params, coupling).value().item();
}

TrialSet synthesize_trialset(const SynthSpec& spec) {
    if (spec.classes < 2) throw ParamError("synthesize: need at least 2 classes");
    if (spec.n_channels == 0 || spec.n_samples < 2)
        throw ParamError("synthesize: need channels >= 1 and samples >= 2");
    const std::size_t N = spec.n_channels;  // one oscillator per channel
    RandomSource master(spec.seed);

    // One mixing matrix per set, drawn before any trial stream.
    RandomSource mix_rng = master.derive(0x6d6978);  // "mix"
    Tensor mixing({spec.n_channels, N});
    const double mix_scale = 1.0 / std::sqrt(static_cast<double>(N));
    for (std::size_t i = 0; i < mixing.size(); ++i)
        mixing[i] = mix_rng.uniform(-1.0, 1.0) * mix_scale;

    const std::size_t steps_per_sample = 64;
    const double dt_int = spec.model_time_per_sample / steps_per_sample;
    const double t_end = spec.model_time_per_sample * static_cast<double>(spec.n_samples - 1);

    TrialSet ts;
    ts.sample_rate_hz = spec.sample_rate_hz;
    ts.n_classes = spec.classes;
    ts.trials.reserve(spec.n_trials);
    ts.labels.reserve(spec.n_trials);

    for (std::size_t trial = 0; trial < spec.n_trials; ++trial) {
        const std::size_t label = trial % spec.classes;
        FhnParams params;
        params.stimulus = 0.3 + 0.1 * static_cast<double>(label);
        CouplingMatrix coupling =
            build_coupling_matrix(N, 0.05 + 0.05 * static_cast<double>(label));

        RandomSource rng = master.derive(1000 + trial);
        std::vector<double> v0(N), w0(N);
        for (std::size_t i = 0; i < N; ++i) {
            v0[i] = rng.uniform(-1.0, 1.0);
            w0[i] = rng.uniform(-1.0, 1.0);
        }
        StatePair traj = integrate_rk4(v0, w0, params, &coupling, t_end, dt_int);
        const std::size_t T_traj = traj.v.dim(1);

        Tensor trial_data({spec.n_channels, spec.n_samples});
        for (std::size_t c = 0; c < spec.n_channels; ++c)
            for (std::size_t t = 0; t < spec.n_samples; ++t) {
                const std::size_t src = std::min(t * steps_per_sample, T_traj - 1);
                double s = 0.0;
                for (std::size_t nidx = 0; nidx < N; ++nidx)
                    s += mixing[c * N + nidx] * traj.v[nidx * T_traj + src];
                if (spec.noise_sigma > 0.0) s += rng.gaussian(0.0, spec.noise_sigma);
                // f32 quantization keeps EEGB round trips bit-exact.
                trial_data[c * spec.n_samples + t] = static_cast<double>(static_cast<float>(s));
            }
        ts.trials.push_back(std::move(trial_data));
        ts.labels.push_back(label);
    }
    return ts;
}

void write_trajectory_csv(std::ostream& out, const StatePair& s,
                          std::optional<std::size_t> limit) {
    if (s.v.ndim() != 2) throw ShapeError("trajectory export expects [N,T] state");
    const std::size_t N = s.v.dim(0), T = s.v.dim(1);
    const std::size_t rows = limit ? std::min(*limit, T) : T;
    out << "t,node,v,w\n";
    char buf[128];
    for (std::size_t t = 0; t < rows; ++t)
        for (std::size_t n = 0; n < N; ++n) {
            std::snprintf(buf, sizeof(buf), "%.9g,%zu,%.9g,%.9g\n",
                          static_cast<double>(t) * s.dt, n, s.v[n * T + t], s.w[n * T + t]);
            out << buf;
        }
}

}  // namespace neurophys
