// Acceptance suite: one pass/fail line per criterion, exit 0 iff all pass.
//
// Numeric criteria run in-process against the library; the end-to-end,
// protocol and determinism criteria drive the CLI binary the way a user
// would.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "neurophys/checkpoint.hpp"
#include "neurophys/eegb.hpp"
#include "neurophys/errors.hpp"
#include "neurophys/fhn.hpp"
#include "neurophys/pinn.hpp"
#include "neurophys/sigproc.hpp"
#include "neurophys/trainer.hpp"
#include "neurophys/verify.hpp"

namespace fs = std::filesystem;
using namespace neurophys;

namespace {

const std::string kCli = NEUROPHYS_CLI_PATH;
int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path work_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "neurophys_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string p(const std::string& name) { return (work_dir() / name).string(); }

int run_cli(const std::string& args) {
    const std::string cmd = kCli + " " + args + " > " + p("cli.log") + " 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Small model preset used by every training-based criterion.
const std::string kPreset =
    " --pinn-f1 8 --pinn-f2 16 --hidden 64 --enc-layers 1 --heads 4 --dropout 0.1"
    " --featx-f1 8 --featx-f2 16 --latent 32 --batch 64 --lr 1e-3 --lambda 0.1";

// Protocol runs train on as few as 48 trials; smaller batches keep enough
// optimizer steps per epoch at every fraction.
const std::string kProtocolPreset =
    " --pinn-f1 8 --pinn-f2 16 --hidden 64 --enc-layers 1 --heads 4 --dropout 0.25"
    " --featx-f1 8 --featx-f2 16 --latent 32 --batch 16 --lr 1e-3 --lambda 0.1";

PipelineConfig preset_config() {
    PipelineConfig cfg;
    cfg.pinn.f1 = 8;
    cfg.pinn.f2 = 16;
    cfg.pinn.hidden_dim = 64;
    cfg.pinn.layers = 1;
    cfg.pinn.heads = 4;
    cfg.pinn.dropout = 0.1;
    cfg.featx.f1 = 8;
    cfg.featx.f2 = 16;
    cfg.featx.latent_dim = 32;
    return cfg;
}

std::vector<EpochRecord> parse_metrics(const std::string& path) {
    std::ifstream in(path);
    std::vector<EpochRecord> rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        EpochRecord r;
        std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf,%lf", &r.epoch, &r.loss_total, &r.loss_cls,
                    &r.loss_phys, &r.acc_train, &r.acc_eval);
        rows.push_back(r);
    }
    return rows;
}

// Accuracy from the last data row of a report CSV (trailing column).
double last_row_accuracy(const std::string& path) {
    std::ifstream in(path);
    std::string line, last;
    std::getline(in, line);  // header
    while (std::getline(in, line))
        if (!line.empty()) last = line;
    const auto comma = last.rfind(',');
    return std::stod(last.substr(comma + 1));
}

// ---- criteria ---------------------------------------------------------------

void criterion_gradient_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    auto checks = run_verification("gradcheck");
    bool pass = !checks.empty();
    double worst = 0.0;
    std::string worst_name;
    for (const auto& c : checks) {
        pass = pass && c.pass;
        if (c.threshold > 0.0 && c.measured / c.threshold > worst) {
            worst = c.measured / c.threshold;
            worst_name = c.name;
        }
    }
    const double wall = seconds_since(t0);
    pass = pass && wall < 120.0;
    char detail[256];
    std::snprintf(detail, sizeof(detail),
                  "%zu operator/pipeline checks pass, tightest margin %s at %.2g of tolerance, "
                  "%.1f s (< 120 s)",
                  checks.size(), worst_name.c_str(), worst, wall);
    report("C1 gradient suite", pass, detail);
}

void criterion_fhn_oracles() {
    const auto t0 = std::chrono::steady_clock::now();

    auto [v_star, w_star] = fhn_equilibrium_bisection(0.7, 0.8, 0.5);
    const FhnParams params;
    StatePair at_rest = integrate_rk4({v_star}, {w_star}, params, nullptr, 1.0, 1e-3);
    double station = 0.0;
    for (std::size_t t = 0; t < at_rest.v.dim(1); ++t) {
        station = std::max(station, std::fabs(at_rest.v[t] - v_star));
        station = std::max(station, std::fabs(at_rest.w[t] - w_star));
    }
    const bool eq_ok = std::fabs(v_star - (-0.805)) < 1e-3 &&
                       std::fabs(w_star - (-0.131)) < 1e-3 && station <= 1e-6;

    auto endpoint = [&](double dt) {
        StatePair tr = integrate_rk4({0.0}, {0.0}, params, nullptr, 20.0, dt);
        const std::size_t T = tr.v.dim(1);
        return std::pair{tr.v[T - 1], tr.w[T - 1]};
    };
    auto [vr, wr] = endpoint(1e-4);
    auto [v1, w1] = endpoint(1e-2);
    auto [v2, w2] = endpoint(5e-3);
    const double conv_factor = std::hypot(v1 - vr, w1 - wr) / std::hypot(v2 - vr, w2 - wr);

    auto residual_rms = [&](double dt) {
        StatePair tr = integrate_rk4({0.0}, {0.0}, params, nullptr, 40.0, dt);
        auto [fv, fw] = fhn_residuals(tr, params, nullptr);
        double s = 0.0;
        for (std::size_t i = 0; i < fv.size(); ++i) s += fv[i] * fv[i] + fw[i] * fw[i];
        return std::sqrt(s / static_cast<double>(fv.size()));
    };
    const double halving = residual_rms(1e-3) / residual_rms(5e-4);

    const double wall = seconds_since(t0);
    const bool pass =
        eq_ok && conv_factor >= 12.0 && halving >= 1.8 && halving <= 2.2 && wall < 60.0;
    char detail[280];
    std::snprintf(detail, sizeof(detail),
                  "v*=%.6f w*=%.6f stationarity %.1e (<= 1e-6), convergence x%.1f (>= 12), "
                  "residual halving x%.3f (in [1.8,2.2]), %.1f s (< 60 s)",
                  v_star, w_star, station, conv_factor, halving, wall);
    report("C2 FHN oracle suite", pass, detail);
}

void criterion_physics_fixture() {
    const FhnParams params;  // eps=0.08, a=0.7, b=0.8, I=0.5
    const double one_point =
        physics_loss({Tensor({1, 2}), Tensor({1, 2}), 0.01}, params, nullptr);
    const double many_points =
        physics_loss({Tensor({1, 101}), Tensor({1, 101}), 0.01}, params, nullptr);
    const bool pass =
        std::fabs(one_point - 0.253136) <= 1e-9 && std::fabs(many_points - 0.253136) <= 1e-9;
    char detail[180];
    std::snprintf(detail, sizeof(detail),
                  "zero state: %.12f (1 residual point), %.12f (100 points); expected "
                  "0.253136 +- 1e-9",
                  one_point, many_points);
    report("C3 physics-loss fixture", pass, detail);
}

void criterion_coupling_fixture() {
    CouplingMatrix c = build_coupling_matrix(3, 0.1);
    bool exact = true;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            exact = exact && c.k[i * 3 + j] == (i == j ? 0.0 : 0.1);

    RandomSource rng(7);
    std::vector<double> v(3), w(3), dv0(3), dw0(3), dv1(3), dw1(3);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    for (auto& x : w) x = rng.uniform(-2.0, 2.0);
    const FhnParams params;
    fhn_rhs(v, w, params, nullptr, dv0, dw0);
    fhn_rhs(v, w, params, &c, dv1, dw1);
    double net = 0.0;
    for (std::size_t i = 0; i < 3; ++i) net += dv1[i] - dv0[i];
    const bool pass = exact && std::fabs(net) <= 1e-12;
    char detail[180];
    std::snprintf(detail, sizeof(detail),
                  "matrix matches the definition exactly; symmetric-K contributions sum to "
                  "%.1e (<= 1e-12)",
                  std::fabs(net));
    report("C4 coupling fixture", pass, detail);
}

void criterion_filter_bank() {
    const double fs = 250.0;
    BiquadCascade filt = design_cheby2_bandpass({8.0, 12.0}, 4, 30.0, 2.0, fs);
    auto db = [&](double f) { return 20.0 * std::log10(std::abs(filt.response(f, fs))); };
    // 4096-point grid over (0, Nyquist); the stopband floor must hold on it.
    double at4 = -1e9, at16 = -1e9;
    for (int i = 1; i < 4096; ++i) {
        const double f = fs / 2.0 * i / 4096.0;
        if (f <= 4.0) at4 = std::max(at4, db(f));
        if (f >= 16.0 && f <= 124.0) at16 = std::max(at16, db(f));
    }
    const double at10 = db(10.0);
    const double radius = filt.max_pole_radius();
    const bool pass =
        at10 >= -3.0 && at10 <= 0.1 && at4 <= -30.0 && at16 <= -30.0 && radius < 1.0;
    char detail[220];
    std::snprintf(detail, sizeof(detail),
                  "10 Hz %.4f dB (in [-3, +0.1]); <= 4 Hz %.1f dB and >= 16 Hz %.1f dB "
                  "(<= -30); max pole radius %.4f (< 1)",
                  at10, at4, at16, radius);
    report("C5 filter bank gates", pass, detail);
}

void criterion_shape_law() {
    // fs=250, T=1000, 1 s non-overlapping windows -> W=4.
    RandomSource rng(31);
    TrialSet ts;
    ts.sample_rate_hz = 250.0;
    ts.n_classes = 4;
    for (std::size_t t = 0; t < 2; ++t) {
        Tensor trial({22, 1000});
        for (std::size_t i = 0; i < trial.size(); ++i) trial[i] = rng.uniform(-1.0, 1.0);
        ts.trials.push_back(std::move(trial));
        ts.labels.push_back(t % 4);
    }
    PipelineConfig cfg;  // full-size defaults: F1=32, F2=64, hidden 128, L=2
    cfg.stride_sec = 1.0;
    PreprocessedSet set = preprocess_set(ts, cfg);
    const bool x_ok = set.x.shape() == Shape{2, 4, 9, 22, 250};

    Pipeline pipe = build_pipeline(cfg, geometry_of(set), 250.0, 4, 1);
    Tape tape;
    auto out = pipe.forward_batch(tape, set.x, false, nullptr);
    const bool v_ok = out.state.v.value().shape() == Shape{2, 4, 22, 50};
    const bool w_ok = out.state.w.value().shape() == Shape{2, 4, 22, 50};
    char detail[200];
    std::snprintf(detail, sizeof(detail), "X'' %s (want (2,4,9,22,250)); v,w %s (want (2,4,22,50))",
                  shape_str(set.x.shape()).c_str(),
                  shape_str(out.state.v.value().shape()).c_str());
    report("C6 shape law", x_ok && v_ok && w_ok, detail);
}

void criterion_end_to_end() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string eegb = p("e2e.eegb"), npt = p("e2e.npt"), model = p("e2e.npnw");
    bool pass = run_cli("synth --trials 200 --channels 4 --classes 2 --samples 256 --rate 128"
                        " --noise 0.05 --seed 7 --out " + eegb) == 0;
    pass = pass && run_cli("preprocess --in " + eegb + " --out " + npt) == 0;
    pass = pass &&
           run_cli("train --in " + npt + kPreset + " --epochs 30 --seed 7 --out " + model) == 0;
    double best_eval = 0.0, final_eval = 0.0, full_acc = 0.0;
    std::size_t first_hit = 0, loss_violations = 0;
    if (pass) {
        auto rows = parse_metrics(model + ".metrics.csv");
        pass = rows.size() == 30;
        for (const auto& r : rows) {
            if (r.acc_eval > best_eval) best_eval = r.acc_eval;
            if (first_hit == 0 && r.acc_eval >= 0.90) first_hit = r.epoch;
        }
        final_eval = rows.empty() ? 0.0 : rows.back().acc_eval;
        // Trailing 5-epoch average of training loss: non-increasing over the
        // first 30 epochs, allowing <= 2 violations.
        std::vector<double> trail;
        for (std::size_t e = 4; e < rows.size(); ++e) {
            double s = 0.0;
            for (std::size_t k = e - 4; k <= e; ++k) s += rows[k].loss_total;
            trail.push_back(s / 5.0);
        }
        for (std::size_t i = 1; i < trail.size(); ++i)
            if (trail[i] > trail[i - 1] * (1.0 + 1e-9)) ++loss_violations;
    }
    const double wall = seconds_since(t0);
    pass = pass && best_eval >= 0.90 && wall <= 600.0 && loss_violations <= 2;

    if (pass) {
        const std::string rep = p("e2e_report.csv");
        pass = run_cli("eval --in " + npt + " --model " + model + " --out " + rep) == 0;
        if (pass) {
            const std::string text = read_file(rep);
            full_acc = std::stod(text.substr(text.find(',') + 1));
        }
    }
    char detail[340];
    std::snprintf(detail, sizeof(detail),
                  "eval acc reached %.3f (>= 0.90) first at epoch %zu of 30, final %.3f, "
                  "full-set acc %.3f, trailing-loss violations %zu (<= 2), wall %.0f s (<= 600)",
                  best_eval, first_hit, final_eval, full_acc, loss_violations, wall);
    report("C7a end-to-end learning", pass, detail);

    // Label-shuffled control: permuted labels, 600 trials, 50/50 split;
    // held-out accuracy against the shuffled labels stays near chance.
    SynthSpec sp;
    sp.n_trials = 600;
    sp.n_channels = 4;
    sp.classes = 2;
    sp.noise_sigma = 0.05;
    sp.seed = 7;
    sp.n_samples = 256;
    sp.sample_rate_hz = 128.0;
    TrialSet shuffled = synthesize_trialset(sp);
    RandomSource shuffle_rng(4242);
    shuffle_rng.shuffle(shuffled.labels);
    PipelineConfig cfg = preset_config();
    PreprocessedSet full = preprocess_set(shuffled, cfg);
    RandomSource split_rng(7 ^ 0x5eedULL);
    auto [tr_idx, ev_idx] = stratified_split(full.labels, 0.5, split_rng);
    PreprocessedSet tr = full.subset(tr_idx), ev = full.subset(ev_idx);
    TrainConfig tc;
    tc.epochs = 30;
    tc.batch_size = 64;
    tc.seed = 7;
    tc.lambda = 0.1;
    Pipeline null_pipe = build_pipeline(cfg, geometry_of(tr), tr.sample_rate_hz, 2, tc.seed);
    MetricsLog null_log = train(null_pipe, tr, ev, tc);
    const double null_acc = null_log.epochs.back().acc_eval;
    const bool control_ok = std::fabs(null_acc - 0.5) <= 0.10;
    char cdetail[200];
    std::snprintf(cdetail, sizeof(cdetail),
                  "shuffled-label model: held-out acc %.3f vs chance 0.5 (+- 0.10 allowed, "
                  "n=%zu trials)",
                  null_acc, ev.size());
    report("C7b label-shuffled control", control_ok, cdetail);
}

void criterion_protocol_direction() {
    // Noisier synthetic set (sigma 0.3) keeps accuracies off the ceiling so
    // the orderings are informative.
    const std::string eegb = p("proto.eegb");
    bool pass = run_cli("synth --trials 200 --channels 4 --classes 2 --samples 256 --rate 128"
                        " --noise 0.3 --seed 7 --out " + eegb) == 0;
    const std::string epochs = " --epochs 25 ";
    double mean_full = 0.0, mean_frac = 0.0, mean_vw = 0.0;
    bool per_seed_vw_ok = true;
    for (int seed : {101, 102, 103}) {
        const std::string tag = std::to_string(seed);
        const std::string full_csv = p("full_" + tag + ".csv");
        const std::string frac_csv = p("frac_" + tag + ".csv");
        const std::string vw_csv = p("vw_" + tag + ".csv");
        pass = pass && run_cli("run-protocol --in " + eegb + kProtocolPreset + epochs +
                               "--protocol fraction --fraction 1.0 --seed " + tag + " --out " +
                               full_csv) == 0;
        pass = pass && run_cli("run-protocol --in " + eegb + kProtocolPreset + epochs +
                               "--protocol fraction --fraction 0.3 --seed " + tag + " --out " +
                               frac_csv) == 0;
        pass = pass && run_cli("run-protocol --in " + eegb + kProtocolPreset + epochs +
                               "--protocol holdout --vw-only --seed " + tag + " --out " +
                               vw_csv) == 0;
        if (!pass) break;
        const double a_full = last_row_accuracy(full_csv);
        const double a_frac = last_row_accuracy(frac_csv);
        const double a_vw = last_row_accuracy(vw_csv);
        mean_full += a_full / 3.0;
        mean_frac += a_frac / 3.0;
        mean_vw += a_vw / 3.0;
        per_seed_vw_ok = per_seed_vw_ok && a_vw <= a_full;
    }
    pass = pass && mean_full >= mean_frac && mean_vw <= mean_full;
    char detail[280];
    std::snprintf(detail, sizeof(detail),
                  "3 seeds: mean acc full-data %.3f >= 30%%-data %.3f; vw-only %.3f <= full "
                  "%.3f (per-seed ordering %s)",
                  mean_full, mean_frac, mean_vw, mean_full,
                  per_seed_vw_ok ? "holds" : "holds on means only");
    report("C8 protocol direction checks", pass, detail);
}

void criterion_determinism() {
    const std::string eegb = p("det.eegb");
    bool pass =
        run_cli("synth --trials 12 --channels 4 --samples 128 --seed 55 --out " + eegb) == 0;
    // EEGB round trip: load and save back, byte identical.
    const std::string eegb2 = p("det2.eegb");
    TrialSet ts = load_eegb(eegb);
    save_eegb(ts, eegb2);
    const bool eegb_ok = read_file(eegb) == read_file(eegb2) && !read_file(eegb).empty();

    const std::string m1 = p("det1.npnw"), m2 = p("det2.npnw");
    const std::string flags = kPreset + " --epochs 2 --seed 55 ";
    pass = pass && run_cli("train --in " + eegb + flags + "--out " + m1) == 0;
    pass = pass && run_cli("train --in " + eegb + flags + "--out " + m2) == 0;
    const bool metrics_ok = read_file(m1 + ".metrics.csv") == read_file(m2 + ".metrics.csv") &&
                            !read_file(m1 + ".metrics.csv").empty();
    const bool ckpt_ok = read_file(m1) == read_file(m2) && !read_file(m1).empty();

    // Checkpoint round trip: load then save reproduces the bytes.
    bool reload_ok = false;
    if (pass && ckpt_ok) {
        Pipeline pipe = load_checkpoint(m1);
        const std::string m3 = p("det3.npnw");
        save_checkpoint(pipe, m3);
        reload_ok = read_file(m1) == read_file(m3);
    }
    pass = pass && eegb_ok && metrics_ok && ckpt_ok && reload_ok;
    char detail[260];
    std::snprintf(detail, sizeof(detail),
                  "seeded reruns: metrics CSV %s, checkpoint %s; EEGB save/load/save %s; "
                  "checkpoint load/save %s",
                  metrics_ok ? "identical" : "DIFFER", ckpt_ok ? "identical" : "DIFFER",
                  eegb_ok ? "bit-exact" : "DIFFER", reload_ok ? "bit-exact" : "DIFFER");
    report("C9 determinism and round trips", pass, detail);
}

}  // namespace

int main() {
    std::printf("neurophys acceptance suite\n");
    criterion_gradient_suite();
    criterion_fhn_oracles();
    criterion_physics_fixture();
    criterion_coupling_fixture();
    criterion_filter_bank();
    criterion_shape_law();
    criterion_end_to_end();
    criterion_protocol_direction();
    criterion_determinism();
    std::printf("%s\n", g_failures == 0 ? "all criteria passed" : "FAILURES present");
    return g_failures == 0 ? 0 : 1;
}
