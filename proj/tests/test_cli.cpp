#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const std::string kCli = NEUROPHYS_CLI_PATH;

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

RunResult run(const std::string& args) {
    static int counter = 0;
    const std::string log =
        (fs::temp_directory_path() / ("neurophys_cli_" + std::to_string(counter++) + ".log"))
            .string();
    const std::string cmd = kCli + " " + args + " > " + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult res;
    res.exit_code = WEXITSTATUS(status);
    std::ifstream in(log);
    std::stringstream buf;
    buf << in.rdbuf();
    res.output = buf.str();
    fs::remove(log);
    return res;
}

fs::path work_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "neurophys_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string p(const char* name) { return (work_dir() / name).string(); }

std::size_t line_count(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Flags shared by the data-driven commands to keep the model desk-sized.
const std::string kTinyModel =
    " --pinn-f1 2 --pinn-f2 3 --hidden 16 --enc-layers 1 --heads 2 --dropout 0.25"
    " --featx-f1 2 --featx-f2 3 --latent 8";

}  // namespace

TEST_CASE("simulate row count matches the [0, t_end) grid") {
    const std::string out = p("traj.csv");
    auto res = run("simulate --nodes 1 --t-end 100 --dt 0.001 --out " + out);
    CHECK(res.exit_code == 0);
    CHECK(line_count(out) == 100000 + 1);  // rows + header
    std::ifstream in(out);
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,node,v,w");
    // Default parameters keep v inside the limit-cycle range.
    std::string line;
    double min_v = 1e9, max_v = -1e9;
    while (std::getline(in, line)) {
        const auto c1 = line.find(','), c2 = line.find(',', line.find(',') + 1);
        const double v = std::stod(line.substr(c2 + 1));
        min_v = std::min(min_v, v);
        max_v = std::max(max_v, v);
    }
    CHECK(min_v >= -3.0);
    CHECK(max_v <= 3.0);
    CHECK(fs::exists(out + ".manifest.json"));
}

TEST_CASE("usage errors exit with code 2") {
    CHECK(run("simulate --dt 0").exit_code == 2);
    CHECK(run("simulate --dt -1").exit_code == 2);
    CHECK(run("train").exit_code == 2);                  // missing required --in
    CHECK(run("train --in x.eegb --no-such-flag").exit_code == 2);
    CHECK(run("").exit_code == 2);                       // subcommand required
    CHECK(run("--help").exit_code == 0);
}

TEST_CASE("missing input file exits 1 and names the path") {
    auto res = run("train --in " + p("absent.eegb"));
    CHECK(res.exit_code == 1);
    CHECK(res.output.find("absent.eegb") != std::string::npos);
}

TEST_CASE("synth is reproducible per seed and env fallback works") {
    const std::string a = p("a.eegb"), b = p("b.eegb"), c = p("c.eegb");
    CHECK(run("synth --trials 6 --channels 2 --samples 128 --seed 99 --out " + a).exit_code == 0);
    CHECK(run("synth --trials 6 --channels 2 --samples 128 --seed 99 --out " + b).exit_code == 0);
    CHECK(read_file(a) == read_file(b));
    // NEUROPHYS_SEED is the default-seed fallback.
    const std::string cmd = "NEUROPHYS_SEED=99 " + kCli +
                            " synth --trials 6 --channels 2 --samples 128 --out " + c +
                            " > /dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    CHECK(read_file(a) == read_file(c));
}

TEST_CASE("config file values apply and flags override them") {
    const std::string cfg = p("synth.cfg");
    {
        std::ofstream out(cfg);
        out << "# synth settings\n"
            << "[synth]\n"
            << "trials = 5\n"
            << "channels = 2\n"
            << "samples = 128\n"
            << "seed = 7\n";
    }
    const std::string d = p("cfg.eegb");
    auto res = run("synth --config " + cfg + " --out " + d);
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("5 trials") != std::string::npos);
    auto res2 = run("synth --config " + cfg + " --trials 3 --out " + d);
    CHECK(res2.exit_code == 0);
    CHECK(res2.output.find("3 trials") != std::string::npos);
}

TEST_CASE("end-to-end chain: synth, preprocess, train, eval") {
    const std::string eegb = p("chain.eegb"), npt = p("chain.npt"), model = p("chain.npnw");
    REQUIRE(run("synth --trials 16 --channels 4 --classes 2 --samples 128 --rate 128 --seed 5"
                " --out " + eegb).exit_code == 0);
    REQUIRE(run("preprocess --in " + eegb + " --out " + npt).exit_code == 0);

    auto res = run("train --in " + npt + kTinyModel +
                   " --epochs 2 --batch 8 --seed 5 --out " + model);
    CHECK(res.exit_code == 0);
    CHECK(fs::exists(model));
    CHECK(fs::exists(model + ".metrics.csv"));
    CHECK(fs::exists(model + ".manifest.json"));
    {
        std::ifstream metrics(model + ".metrics.csv");
        std::string header;
        std::getline(metrics, header);
        CHECK(header == "epoch,loss_total,loss_cls,loss_phys,acc_train,acc_eval");
        CHECK(line_count(model + ".metrics.csv") == 3);  // header + 2 epochs
    }
    // Manifest is JSON with hashed outputs.
    const std::string manifest = read_file(model + ".manifest.json");
    CHECK(manifest.find("\"command\": \"train\"") != std::string::npos);
    CHECK(manifest.find("fnv1a64") != std::string::npos);

    auto eval_res = run("eval --in " + npt + " --model " + model + " --out " + p("report.csv"));
    CHECK(eval_res.exit_code == 0);
    CHECK(eval_res.output.find("accuracy") != std::string::npos);
    CHECK(read_file(p("report.csv")).find("accuracy,") == 0);

    // Training also accepts the raw EEGB path directly.
    auto res_raw = run("train --in " + eegb + kTinyModel +
                       " --epochs 1 --batch 8 --seed 5 --out " + p("raw.npnw"));
    CHECK(res_raw.exit_code == 0);
}

TEST_CASE("lambda zero and nonzero produce different first-epoch loss") {
    const std::string eegb = p("lam.eegb");
    REQUIRE(run("synth --trials 8 --channels 4 --samples 128 --seed 6 --out " + eegb).exit_code ==
            0);
    auto first_loss = [&](const char* lam, const char* tag) {
        const std::string model = p((std::string("lam_") + tag + ".npnw").c_str());
        REQUIRE(run("train --in " + eegb + kTinyModel + " --epochs 1 --batch 8 --seed 6"
                    " --lambda " + lam + " --out " + model).exit_code == 0);
        std::ifstream metrics(model + ".metrics.csv");
        std::string header, row;
        std::getline(metrics, header);
        std::getline(metrics, row);
        return row.substr(row.find(',') + 1, row.find(',', row.find(',') + 1) - row.find(',') - 1);
    };
    CHECK(first_loss("0", "a") != first_loss("0.1", "b"));
}

TEST_CASE("train runs are bit-reproducible") {
    const std::string eegb = p("repro.eegb");
    REQUIRE(run("synth --trials 8 --channels 4 --samples 128 --seed 8 --out " + eegb).exit_code ==
            0);
    const std::string m1 = p("repro1.npnw"), m2 = p("repro2.npnw");
    const std::string flags = " --epochs 2 --batch 8 --seed 8 --out ";
    REQUIRE(run("train --in " + eegb + kTinyModel + flags + m1).exit_code == 0);
    REQUIRE(run("train --in " + eegb + kTinyModel + flags + m2).exit_code == 0);
    CHECK(read_file(m1) == read_file(m2));
    CHECK(read_file(m1 + ".metrics.csv") == read_file(m2 + ".metrics.csv"));
}

TEST_CASE("separate eval set and coupling flag variants") {
    const std::string tr_set = p("sep_train.eegb"), ev_set = p("sep_eval.eegb");
    REQUIRE(run("synth --trials 8 --channels 4 --samples 128 --seed 31 --out " + tr_set)
                .exit_code == 0);
    REQUIRE(run("synth --trials 8 --channels 4 --samples 128 --seed 32 --out " + ev_set)
                .exit_code == 0);
    const std::string model = p("sep.npnw");
    auto res = run("train --in " + tr_set + " --eval " + ev_set + kTinyModel +
                   " --epochs 1 --batch 8 --seed 31 --out " + model);
    CHECK(res.exit_code == 0);
    // Residual without the coupling term is a distinct configuration.
    auto res2 = run("train --in " + tr_set + kTinyModel +
                    " --epochs 1 --batch 8 --seed 31 --coupling-in-loss false --out " +
                    p("sep2.npnw"));
    CHECK(res2.exit_code == 0);
    std::ifstream m1(model + ".metrics.csv"), m2(p("sep2.npnw") + ".metrics.csv");
    std::string h1, h2, r1, r2;
    std::getline(m1, h1);
    std::getline(m1, r1);
    std::getline(m2, h2);
    std::getline(m2, r2);
    CHECK(r1 != r2);
}

TEST_CASE("preprocess honors a custom band list") {
    const std::string eegb = p("bands.eegb"), npt = p("bands.npt");
    REQUIRE(run("synth --trials 2 --channels 2 --samples 128 --seed 33 --out " + eegb)
                .exit_code == 0);
    auto res = run("preprocess --in " + eegb + " --bands 8-12,16-20 --out " + npt);
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("(2,1,2,2,128)") != std::string::npos);  // F=2 bands
    CHECK(run("preprocess --in " + eegb + " --bands nonsense --out " + npt).exit_code == 2);
}

TEST_CASE("run-protocol writes the report csv") {
    const std::string eegb = p("proto.eegb");
    REQUIRE(run("synth --trials 12 --channels 4 --samples 128 --seed 9 --out " + eegb).exit_code ==
            0);
    const std::string report = p("proto_report.csv");
    auto res = run("run-protocol --in " + eegb + kTinyModel +
                   " --protocol cv --folds 3 --epochs 1 --batch 8 --seed 9 --jobs 2 --out " +
                   report);
    CHECK(res.exit_code == 0);
    std::ifstream in(report);
    std::string header;
    std::getline(in, header);
    CHECK(header == "protocol,fraction,seed,fold,acc");
    CHECK(line_count(report) == 4);  // header + one row per fold
    CHECK(run("run-protocol --in " + eegb + " --protocol bogus --out " + report).exit_code == 2);
    CHECK(run("run-protocol --in " + eegb + " --fraction 1.5 --out " + report).exit_code == 2);
}

TEST_CASE("verify subcommand filters and passes") {
    auto res = run("verify --only filter");
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("[PASS] filter/passband_10hz_db") != std::string::npos);
    CHECK(res.output.find("gradcheck/") == std::string::npos);
}
