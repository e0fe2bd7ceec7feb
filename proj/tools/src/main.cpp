#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "manifest.hpp"
#include "neurophys/checkpoint.hpp"
#include "neurophys/eegb.hpp"
#include "neurophys/errors.hpp"
#include "neurophys/fhn.hpp"
#include "neurophys/npt.hpp"
#include "neurophys/trainer.hpp"
#include "neurophys/verify.hpp"

namespace {

using namespace neurophys;
using neurophys::cli::Manifest;

double elapsed_since(const std::chrono::steady_clock::time_point& start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Band list syntax: "4:40:4" (lo:hi:width sweep) or "8-12,16-20".
std::vector<std::pair<double, double>> parse_bands(const std::string& text) {
    std::vector<std::pair<double, double>> bands;
    if (text.find(':') != std::string::npos) {
        double lo = 0, hi = 0, width = 0;
        char c1 = 0, c2 = 0;
        std::istringstream in(text);
        if (!(in >> lo >> c1 >> hi >> c2 >> width) || c1 != ':' || c2 != ':' || width <= 0)
            throw UsageError("cannot parse band sweep '" + text + "', expected lo:hi:width");
        for (double f = lo; f + width <= hi + 1e-9; f += width) bands.emplace_back(f, f + width);
    } else {
        std::istringstream in(text);
        std::string item;
        while (std::getline(in, item, ',')) {
            double lo = 0, hi = 0;
            char dash = 0;
            std::istringstream band(item);
            if (!(band >> lo >> dash >> hi) || dash != '-' || hi <= lo)
                throw UsageError("cannot parse band '" + item + "', expected lo-hi");
            bands.emplace_back(lo, hi);
        }
    }
    if (bands.empty()) throw UsageError("band list '" + text + "' is empty");
    return bands;
}

std::string sniff_magic(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open input file " + path);
    char magic[4] = {0, 0, 0, 0};
    in.read(magic, 4);
    return std::string(magic, magic + in.gcount());
}

// Pipeline hyperparameters shared by train / run-protocol / eval.
struct PipelineFlags {
    double window_sec = 1.0;
    double stride_sec = 0.5;
    std::string bands = "4:40:4";
    int filter_order = 4;
    double atten_db = 30.0;
    double transition_hz = 2.0;
    std::size_t pinn_f1 = 32, pinn_f2 = 64;
    std::vector<std::size_t> k1{3, 3}, k2{3, 3}, p1{1, 1}, p2{1, 1};
    std::size_t pool = 2, pool_stride = 2;
    std::size_t hidden = 128;
    std::size_t enc_layers = 2;
    std::size_t heads = 4;
    double dropout = 0.5;
    std::size_t data_points = 0;  // 0 -> window_len / 5
    std::size_t featx_f1 = 16, featx_f2 = 32;
    std::size_t latent = 64;
    double epsilon = 0.08, a = 0.7, b = 0.8, current = 0.5;
    double coupling = 0.1;
    double residual_dt = 0.0;  // 0 -> 1 / sample_rate

    PipelineConfig to_config() const {
        PipelineConfig cfg;
        cfg.window_sec = window_sec;
        cfg.stride_sec = stride_sec;
        cfg.filter_bank.bands = parse_bands(bands);
        cfg.filter_bank.order = filter_order;
        cfg.filter_bank.stopband_atten_db = atten_db;
        cfg.filter_bank.transition_hz = transition_hz;
        cfg.pinn.f1 = pinn_f1;
        cfg.pinn.f2 = pinn_f2;
        cfg.pinn.k1 = {k1[0], k1[1]};
        cfg.pinn.k2 = {k2[0], k2[1]};
        cfg.pinn.p1 = {p1[0], p1[1]};
        cfg.pinn.p2 = {p2[0], p2[1]};
        cfg.pinn.pool_kernel = pool;
        cfg.pinn.pool_stride = pool_stride;
        cfg.pinn.hidden_dim = hidden;
        cfg.pinn.layers = enc_layers;
        cfg.pinn.heads = heads;
        cfg.pinn.dropout = dropout;
        cfg.pinn.data_points = data_points;
        cfg.featx.f1 = featx_f1;
        cfg.featx.f2 = featx_f2;
        cfg.featx.latent_dim = latent;
        cfg.fhn.epsilon = epsilon;
        cfg.fhn.a = a;
        cfg.fhn.b = b;
        cfg.fhn.stimulus = current;
        cfg.coupling_strength = coupling;
        cfg.residual_dt = residual_dt;
        return cfg;
    }
};

void add_pipeline_flags(CLI::App* cmd, PipelineFlags& f) {
    cmd->add_option("--window-sec", f.window_sec, "Window length in seconds");
    cmd->add_option("--stride-sec", f.stride_sec, "Window stride in seconds");
    cmd->add_option("--bands", f.bands, "Filter bank bands, lo:hi:width or lo-hi,...");
    cmd->add_option("--filter-order", f.filter_order, "Chebyshev II prototype order");
    cmd->add_option("--atten-db", f.atten_db, "Stopband attenuation in dB");
    cmd->add_option("--transition-hz", f.transition_hz, "Transition width in Hz");
    cmd->add_option("--pinn-f1", f.pinn_f1, "First conv filter count");
    cmd->add_option("--pinn-f2", f.pinn_f2, "Second conv filter count");
    cmd->add_option("--pinn-k1", f.k1, "First conv kernel (two values)")->expected(2);
    cmd->add_option("--pinn-k2", f.k2, "Second conv kernel (two values)")->expected(2);
    cmd->add_option("--pinn-p1", f.p1, "First conv padding (two values)")->expected(2);
    cmd->add_option("--pinn-p2", f.p2, "Second conv padding (two values)")->expected(2);
    cmd->add_option("--pool", f.pool, "Pool kernel");
    cmd->add_option("--pool-stride", f.pool_stride, "Pool stride");
    cmd->add_option("--hidden", f.hidden, "Hidden dimension");
    cmd->add_option("--enc-layers", f.enc_layers, "Encoder layer count");
    cmd->add_option("--heads", f.heads, "Attention head count");
    cmd->add_option("--dropout", f.dropout, "Dropout rate");
    cmd->add_option("--data-points", f.data_points, "Output time points per window");
    cmd->add_option("--featx-f1", f.featx_f1, "Feature branch conv1 filters");
    cmd->add_option("--featx-f2", f.featx_f2, "Feature branch conv2 filters");
    cmd->add_option("--latent", f.latent, "Fused feature dimension");
    cmd->add_option("--epsilon", f.epsilon, "Timescale separation");
    cmd->add_option("--a", f.a, "System constant a");
    cmd->add_option("--b", f.b, "System constant b");
    cmd->add_option("--current", f.current, "External stimulus I");
    cmd->add_option("--coupling", f.coupling, "Coupling strength");
    cmd->add_option("--residual-dt", f.residual_dt, "Residual time step (0: 1/sample_rate)");
}

struct TrainFlags {
    double lambda = 0.1;
    std::size_t epochs = 100;
    std::size_t batch = 64;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    double fraction = 1.0;
    bool vw_only = false;
    bool coupling_in_loss = true;
    std::string optimizer = "adam";
    double eval_fraction = 0.2;

    TrainConfig to_config() const {
        TrainConfig cfg;
        cfg.lambda = lambda;
        cfg.epochs = epochs;
        cfg.batch_size = batch;
        cfg.lr = lr;
        cfg.seed = seed;
        cfg.data_fraction = fraction;
        cfg.ablation_vw_only = vw_only;
        cfg.coupling_in_loss = coupling_in_loss;
        cfg.optimizer = optimizer;
        cfg.eval_fraction = eval_fraction;
        return cfg;
    }

    void check() const {
        if (lambda < 0.0) throw UsageError("--lambda must be >= 0");
        if (lr < 0.0) throw UsageError("--lr must be >= 0");
        if (batch == 0) throw UsageError("--batch must be >= 1");
        if (epochs == 0) throw UsageError("--epochs must be >= 1");
        if (fraction <= 0.0 || fraction > 1.0) throw UsageError("--fraction must be in (0,1]");
        if (eval_fraction < 0.0 || eval_fraction >= 1.0)
            throw UsageError("--eval-fraction must be in [0,1)");
    }
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--lambda", f.lambda, "Physics loss weight");
    cmd->add_option("--epochs", f.epochs, "Training epochs");
    cmd->add_option("--batch", f.batch, "Mini-batch size");
    cmd->add_option("--lr", f.lr, "Learning rate");
    cmd->add_option("--seed", f.seed, "Random seed")->envname("NEUROPHYS_SEED");
    cmd->add_option("--fraction", f.fraction, "Training data fraction in (0,1]");
    cmd->add_flag("--vw-only", f.vw_only, "Train with the PINN trunk frozen");
    cmd->add_option("--coupling-in-loss", f.coupling_in_loss,
                    "Include the coupling term in the residual (true/false)");
    cmd->add_option("--optimizer", f.optimizer, "adam or sgd");
    cmd->add_option("--eval-fraction", f.eval_fraction,
                    "Held-out fraction when no --eval set is given");
}

// Reads EEGB (preprocessing applied per cfg) or NPT (already preprocessed).
PreprocessedSet load_dataset(const std::string& path, const PipelineConfig& cfg) {
    const std::string magic = sniff_magic(path);
    if (magic == "EEGB") return preprocess_set(load_eegb(path), cfg);
    if (magic == "NPT1") return load_npt(path);
    throw FormatError(path + ": unrecognized container (expected EEGB or NPT1)", 0);
}

// ---- subcommand handlers ----------------------------------------------------

int cmd_simulate(std::size_t nodes, double t_end, double dt, double coupling, double jitter,
                 const PipelineFlags& pf, const std::string& out_path,
                 const std::string& config_text) {
    const auto start = std::chrono::steady_clock::now();
    if (dt <= 0.0) throw UsageError("--dt must be positive");
    if (t_end < dt) throw UsageError("--t-end must be >= --dt");
    if (nodes == 0) throw UsageError("--nodes must be >= 1");

    FhnParams params;
    params.epsilon = pf.epsilon;
    params.a = pf.a;
    params.b = pf.b;
    params.stimulus = pf.current;

    CouplingMatrix matrix;
    const CouplingMatrix* coupling_ptr = nullptr;
    if (coupling > 0.0 && nodes > 1) {
        matrix = build_coupling_matrix(nodes, coupling);
        coupling_ptr = &matrix;
    }
    // Deterministic spread separates coupled nodes without an RNG.
    std::vector<double> v0(nodes, 0.0), w0(nodes, 0.0);
    for (std::size_t i = 0; i < nodes; ++i)
        v0[i] += jitter * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(1, nodes - 1));

    StatePair traj = integrate_rk4(v0, w0, params, coupling_ptr, t_end, dt);
    // Rows cover [0, t_end) on the dt grid: t_end/dt rows per node.
    const std::size_t rows = static_cast<std::size_t>(std::floor(t_end / dt + 1e-9));
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + out_path + " for writing");
    write_trajectory_csv(out, traj, rows);
    out.close();

    Manifest manifest("simulate", 0);
    manifest.set_config_text(config_text);
    manifest.add_output(out_path);
    manifest.write(out_path, elapsed_since(start));
    std::cout << "wrote " << out_path << " (" << rows * nodes << " rows)\n";
    return 0;
}

int cmd_synth(std::size_t trials, std::size_t channels, std::size_t classes, std::size_t samples,
              double rate, double noise, std::uint64_t seed, const std::string& out_path,
              const std::string& config_text) {
    const auto start = std::chrono::steady_clock::now();
    if (trials == 0) throw UsageError("--trials must be >= 1");
    if (channels == 0) throw UsageError("--channels must be >= 1");
    if (classes < 2) throw UsageError("--classes must be >= 2");
    if (rate <= 0.0) throw UsageError("--rate must be positive");
    if (noise < 0.0) throw UsageError("--noise must be >= 0");

    SynthSpec spec;
    spec.n_trials = trials;
    spec.n_channels = channels;
    spec.classes = classes;
    spec.n_samples = samples;
    spec.sample_rate_hz = rate;
    spec.noise_sigma = noise;
    spec.seed = seed;
    TrialSet ts = synthesize_trialset(spec);
    save_eegb(ts, out_path);

    Manifest manifest("synth", seed);
    manifest.set_config_text(config_text);
    manifest.add_output(out_path);
    manifest.write(out_path, elapsed_since(start));
    std::cout << "wrote " << out_path << " (" << ts.size() << " trials, " << channels
              << " channels, " << classes << " classes)\n";
    return 0;
}

int cmd_preprocess(const std::string& in_path, const std::string& out_path,
                   const PipelineFlags& pf, const std::string& config_text) {
    const auto start = std::chrono::steady_clock::now();
    TrialSet ts = load_eegb(in_path);
    PreprocessedSet set = preprocess_set(ts, pf.to_config());
    save_npt(set, out_path);

    Manifest manifest("preprocess", 0);
    manifest.set_config_text(config_text);
    manifest.add_input(in_path);
    manifest.add_output(out_path);
    manifest.write(out_path, elapsed_since(start));
    std::cout << "wrote " << out_path << " " << shape_str(set.x.shape()) << "\n";
    return 0;
}

int cmd_train(const std::string& in_path, const std::string& eval_path,
              const std::string& out_path, std::string metrics_path, const PipelineFlags& pf,
              const TrainFlags& tf, const std::string& config_text) {
    const auto start = std::chrono::steady_clock::now();
    tf.check();
    if (metrics_path.empty()) metrics_path = out_path + ".metrics.csv";

    PipelineConfig pcfg = pf.to_config();
    TrainConfig tcfg = tf.to_config();
    PreprocessedSet full = load_dataset(in_path, pcfg);

    PreprocessedSet train_set, eval_set;
    if (!eval_path.empty()) {
        train_set = std::move(full);
        eval_set = load_dataset(eval_path, pcfg);
    } else if (tcfg.eval_fraction > 0.0) {
        RandomSource split_rng(tcfg.seed ^ 0x5eedULL);
        auto [train_idx, eval_idx] =
            stratified_split(full.labels, tcfg.eval_fraction, split_rng);
        train_set = full.subset(train_idx);
        eval_set = full.subset(eval_idx);
    } else {
        train_set = std::move(full);
    }
    if (tcfg.data_fraction < 1.0) {
        RandomSource frac_rng(tcfg.seed ^ 0xf7acULL);
        std::vector<std::size_t> pool(train_set.size());
        for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
        train_set = train_set.subset(
            stratified_subsample(train_set.labels, pool, tcfg.data_fraction, frac_rng));
    }

    Pipeline pipe = build_pipeline(pcfg, geometry_of(train_set), train_set.sample_rate_hz,
                                   train_set.n_classes, tcfg.seed);
    MetricsLog log = train(pipe, train_set, eval_set, tcfg);

    save_checkpoint(pipe, out_path);
    {
        std::ofstream out(metrics_path, std::ios::trunc);
        if (!out) throw DataError("cannot open " + metrics_path + " for writing");
        write_metrics_csv(out, log);
    }

    Manifest manifest("train", tcfg.seed);
    manifest.set_config_text(config_text);
    manifest.add_input(in_path);
    if (!eval_path.empty()) manifest.add_input(eval_path);
    manifest.add_output(out_path);
    manifest.add_output(metrics_path);
    manifest.write(out_path, elapsed_since(start));

    const EpochRecord& last = log.epochs.back();
    std::cout << "trained " << tcfg.epochs << " epochs in " << log.wall_time_sec
              << " s; final loss " << last.loss_total << ", train acc " << last.acc_train
              << ", eval acc " << last.acc_eval << "\n";
    return 0;
}

int cmd_eval(const std::string& in_path, const std::string& model_path,
             const std::string& out_path, const std::string& config_text) {
    const auto start = std::chrono::steady_clock::now();
    Pipeline pipe = load_checkpoint(model_path);
    PreprocessedSet data = load_dataset(in_path, pipe.cfg);
    const InputGeometry g = geometry_of(data);
    if (g.windows != pipe.geom.windows || g.bands != pipe.geom.bands ||
        g.channels != pipe.geom.channels || g.window_len != pipe.geom.window_len)
        throw DataError("eval: data geometry " + shape_str(data.x.shape()) +
                        " does not match the checkpoint");

    EvalResult res = evaluate(pipe, data);
    const std::size_t K = pipe.n_classes;
    std::cout << "accuracy " << res.accuracy << " (" << res.correct << "/" << res.total << ")\n";
    std::cout << "confusion (rows = true class):\n";
    for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t j = 0; j < K; ++j)
            std::cout << static_cast<std::size_t>(res.confusion[i * K + j])
                      << (j + 1 < K ? ' ' : '\n');
    }
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::trunc);
        if (!out) throw DataError("cannot open " + out_path + " for writing");
        out << "accuracy," << res.accuracy << "\n";
        for (std::size_t i = 0; i < K; ++i)
            for (std::size_t j = 0; j < K; ++j)
                out << "confusion," << i << "," << j << ","
                    << static_cast<std::size_t>(res.confusion[i * K + j]) << "\n";
        Manifest manifest("eval", 0);
        manifest.set_config_text(config_text);
        manifest.add_input(in_path);
        manifest.add_input(model_path);
        manifest.add_output(out_path);
        manifest.write(out_path, elapsed_since(start));
    }
    return 0;
}

int cmd_run_protocol(const std::string& in_path, const std::string& protocol, std::size_t folds,
                     double fraction_flag, bool fraction_given, double holdout_fraction,
                     std::size_t jobs, const std::string& out_path, const PipelineFlags& pf,
                     const TrainFlags& tf, const std::string& config_text) {
    const auto start = std::chrono::steady_clock::now();
    tf.check();
    if (protocol != "cv" && protocol != "holdout" && protocol != "fraction")
        throw UsageError("--protocol must be cv, holdout or fraction");
    if (folds < 2) throw UsageError("--folds must be >= 2");
    if (holdout_fraction <= 0.0 || holdout_fraction >= 1.0)
        throw UsageError("--holdout-fraction must be in (0,1)");

    ProtocolConfig cfg;
    cfg.protocol = protocol;
    cfg.folds = folds;
    cfg.holdout_fraction = holdout_fraction;
    cfg.jobs = jobs;
    cfg.pipeline = pf.to_config();
    cfg.train = tf.to_config();
    if (fraction_given) {
        if (protocol == "fraction")
            cfg.fractions = {fraction_flag};
        else
            cfg.train.data_fraction = fraction_flag;
    }

    PreprocessedSet data = load_dataset(in_path, cfg.pipeline);
    auto rows = run_protocol(data, cfg);
    {
        std::ofstream out(out_path, std::ios::trunc);
        if (!out) throw DataError("cannot open " + out_path + " for writing");
        write_report_csv(out, rows);
    }
    Manifest manifest("run-protocol", cfg.train.seed);
    manifest.set_config_text(config_text);
    manifest.add_input(in_path);
    manifest.add_output(out_path);
    manifest.write(out_path, elapsed_since(start));

    for (const auto& r : rows)
        std::cout << r.protocol << " fraction=" << r.fraction << " fold=" << r.fold << " acc="
                  << r.accuracy << "\n";
    return 0;
}

int cmd_verify(const std::string& only, const std::string& out_path) {
    auto checks = run_verification(only);
    print_verification(std::cout, checks);
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::trunc);
        if (!out) throw DataError("cannot open " + out_path + " for writing");
        print_verification(out, checks);
    }
    return all_pass(checks) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neurophys: dynamics-constrained classification of multichannel signals"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "0.1.0");
    // One config option for all subcommands; files use [subcommand] sections
    // of key = value lines with # comments. Flags override file values, file
    // values override defaults.
    app.set_config("--config", "", "Config file ([subcommand] sections, key = value lines)");

    int rc = 0;

    // simulate
    auto* sim = app.add_subcommand("simulate", "Integrate the coupled oscillator network to CSV");
    sim->fallthrough();
    std::size_t sim_nodes = 1;
    double sim_t_end = 100.0, sim_dt = 0.001, sim_coupling = 0.0, sim_jitter = 0.01;
    PipelineFlags sim_pf;
    std::string sim_out = "trajectory.csv";
    sim->add_option("--nodes", sim_nodes, "Oscillator count");
    sim->add_option("--t-end", sim_t_end, "Integration horizon");
    sim->add_option("--dt", sim_dt, "Integration step");
    sim->add_option("--coupling", sim_coupling, "Coupling strength (0 = uncoupled)");
    sim->add_option("--jitter", sim_jitter, "Deterministic initial-state spread across nodes");
    sim->add_option("--epsilon", sim_pf.epsilon, "Timescale separation");
    sim->add_option("--a", sim_pf.a, "System constant a");
    sim->add_option("--b", sim_pf.b, "System constant b");
    sim->add_option("--current", sim_pf.current, "External stimulus I");
    sim->add_option("--out", sim_out, "Output CSV path");
    sim->callback([&]() {
        rc = cmd_simulate(sim_nodes, sim_t_end, sim_dt, sim_coupling, sim_jitter, sim_pf, sim_out,
                          sim->config_to_str(true, true));
    });

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic trial set (EEGB)");
    synth->fallthrough();
    std::size_t sy_trials = 200, sy_channels = 4, sy_classes = 2, sy_samples = 256;
    double sy_rate = 128.0, sy_noise = 0.05;
    std::uint64_t sy_seed = 0;
    std::string sy_out = "synth.eegb";
    synth->add_option("--trials", sy_trials, "Trial count");
    synth->add_option("--channels", sy_channels, "Channel count");
    synth->add_option("--classes", sy_classes, "Class count");
    synth->add_option("--samples", sy_samples, "Samples per trial");
    synth->add_option("--rate", sy_rate, "Sample rate in Hz");
    synth->add_option("--noise", sy_noise, "White noise sigma");
    synth->add_option("--seed", sy_seed, "Random seed")->envname("NEUROPHYS_SEED");
    synth->add_option("--out", sy_out, "Output EEGB path");
    synth->callback([&]() {
        rc = cmd_synth(sy_trials, sy_channels, sy_classes, sy_samples, sy_rate, sy_noise, sy_seed,
                       sy_out, synth->config_to_str(true, true));
    });

    // preprocess
    auto* prep = app.add_subcommand("preprocess",
                                    "Window + band-decompose an EEGB set into an NPT tensor");
    prep->fallthrough();
    std::string pp_in, pp_out = "preprocessed.npt";
    PipelineFlags pp_pf;
    prep->add_option("--in", pp_in, "Input EEGB path")->required();
    prep->add_option("--out", pp_out, "Output NPT path");
    add_pipeline_flags(prep, pp_pf);
    prep->callback([&]() {
        rc = cmd_preprocess(pp_in, pp_out, pp_pf, prep->config_to_str(true, true));
    });

    // train
    auto* tr = app.add_subcommand("train", "Optimize the model on EEGB or NPT data");
    tr->fallthrough();
    std::string tr_in, tr_eval, tr_out = "model.npnw", tr_metrics;
    PipelineFlags tr_pf;
    TrainFlags tr_tf;
    tr->add_option("--in", tr_in, "Training data (EEGB or NPT)")->required();
    tr->add_option("--eval", tr_eval, "Separate evaluation data (EEGB or NPT)");
    tr->add_option("--out", tr_out, "Output checkpoint path");
    tr->add_option("--metrics", tr_metrics, "Metrics CSV path (default <out>.metrics.csv)");
    add_pipeline_flags(tr, tr_pf);
    add_train_flags(tr, tr_tf);
    tr->callback([&]() {
        rc = cmd_train(tr_in, tr_eval, tr_out, tr_metrics, tr_pf, tr_tf,
                       tr->config_to_str(true, true));
    });

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a data set");
    ev->fallthrough();
    std::string ev_in, ev_model, ev_out;
    ev->add_option("--in", ev_in, "Data (EEGB or NPT)")->required();
    ev->add_option("--model", ev_model, "Checkpoint path")->required();
    ev->add_option("--out", ev_out, "Optional report CSV path");
    ev->callback([&]() { rc = cmd_eval(ev_in, ev_model, ev_out, ev->config_to_str(true, true)); });

    // run-protocol
    auto* rp = app.add_subcommand("run-protocol",
                                  "Cross-validation / holdout / data-fraction experiment runner");
    rp->fallthrough();
    std::string rp_in, rp_protocol = "holdout", rp_out = "report.csv";
    std::size_t rp_folds = 5, rp_jobs = 1;
    double rp_holdout = 0.2;
    PipelineFlags rp_pf;
    TrainFlags rp_tf;
    rp->add_option("--in", rp_in, "Data (EEGB or NPT)")->required();
    rp->add_option("--protocol", rp_protocol, "cv, holdout or fraction");
    rp->add_option("--folds", rp_folds, "Fold count for cv");
    rp->add_option("--holdout-fraction", rp_holdout, "Evaluation share for holdout/fraction");
    rp->add_option("--jobs", rp_jobs, "Parallel fold workers");
    rp->add_option("--out", rp_out, "Report CSV path");
    add_pipeline_flags(rp, rp_pf);
    add_train_flags(rp, rp_tf);
    rp->callback([&]() {
        rc = cmd_run_protocol(rp_in, rp_protocol, rp_folds, rp_tf.fraction,
                              rp->count("--fraction") > 0, rp_holdout, rp_jobs, rp_out, rp_pf,
                              rp_tf, rp->config_to_str(true, true));
    });

    // verify
    auto* vf = app.add_subcommand("verify", "Run the numeric verification suite");
    std::string vf_only, vf_out;
    vf->add_option("--only", vf_only, "Restrict to checks matching this substring");
    vf->add_option("--out", vf_out, "Also write the report to this path");
    vf->callback([&]() { rc = cmd_verify(vf_only, vf_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
