#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "neurophys/featx.hpp"
#include "neurophys/fhn.hpp"
#include "neurophys/npt.hpp"
#include "neurophys/pinn.hpp"
#include "neurophys/sigproc.hpp"

namespace neurophys {

// Everything needed to rebuild the full model stack.
struct PipelineConfig {
    double window_sec = 1.0;
    double stride_sec = 0.5;
    FilterBankSpec filter_bank = FilterBankSpec::default_bank();
    PinnConfig pinn;
    FeatxConfig featx;
    FhnParams fhn;
    double residual_dt = 0.0;  // 0 -> 1 / sample_rate
    double coupling_strength = 0.1;
};

struct TrainConfig {
    double lambda = 0.1;
    double lr = 1e-3;
    std::size_t batch_size = 64;
    std::size_t epochs = 100;
    std::uint64_t seed = 0;
    std::string optimizer = "adam";  // "adam" | "sgd"
    double data_fraction = 1.0;
    bool ablation_vw_only = false;
    bool coupling_in_loss = true;
    double eval_fraction = 0.2;  // internal split when no eval set is given

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double loss_total = 0.0, loss_cls = 0.0, loss_phys = 0.0;
    double acc_train = 0.0, acc_eval = 0.0;
};

struct MetricsLog {
    std::vector<EpochRecord> epochs;
    double wall_time_sec = 0.0;
};

// Header "epoch,loss_total,loss_cls,loss_phys,acc_train,acc_eval",
// 6 significant digits.
void write_metrics_csv(std::ostream& out, const MetricsLog& log);

// The model stack bound to one input geometry.
struct Pipeline {
    PipelineConfig cfg;
    InputGeometry geom;
    double sample_rate_hz = 0.0;
    std::size_t n_classes = 0;
    PinnModel pinn;
    FeatxNet featx;
    Classifier clf;
    CouplingMatrix coupling;
    FhnParams fhn;  // resolved residual dt

    struct BatchOut {
        Var logits;
        StateVars state;
        Var features;
    };
    BatchOut forward_batch(Tape& tape, const Tensor& x, bool train, RandomSource* rng);

    std::vector<std::pair<std::string, Parameter*>> named_parameters();
    std::vector<std::pair<std::string, Tensor*>> named_buffers();
    std::size_t trainable_parameter_count();
};

Pipeline build_pipeline(const PipelineConfig& cfg, const InputGeometry& geom,
                        double sample_rate_hz, std::size_t n_classes, std::uint64_t seed);

// Window/stride seconds resolved against the trial sample rate.
PreprocessedSet preprocess_set(const TrialSet& data, const PipelineConfig& cfg);
InputGeometry geometry_of(const PreprocessedSet& set);

// L = cross_entropy + lambda * physics_loss.
Var total_loss(Tape& tape, Var logits, const std::vector<std::size_t>& labels,
               const StateVars& state, const FhnParams& params, const CouplingMatrix* coupling,
               double lambda);

// Seeded stratified helpers (class-balanced within +-1).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    const std::vector<std::size_t>& labels, double second_fraction, RandomSource& rng);
std::vector<std::size_t> stratified_subsample(const std::vector<std::size_t>& labels,
                                              const std::vector<std::size_t>& pool,
                                              double fraction, RandomSource& rng);
// fold id per trial; every trial lands in exactly one fold.
std::vector<std::size_t> stratified_folds(const std::vector<std::size_t>& labels, std::size_t k,
                                          RandomSource& rng);

// Mini-batch optimization of all trainable parameters. Shuffling, dropout and
// initialization draw from generators derived from cfg.seed, so identical
// configs give bit-identical logs. Throws DivergenceError on non-finite loss.
MetricsLog train(Pipeline& pipe, const PreprocessedSet& train_set,
                 const PreprocessedSet& eval_set, const TrainConfig& cfg);

struct EvalResult {
    double accuracy = 0.0;
    Tensor confusion;  // [K,K], rows = true class
    std::size_t correct = 0, total = 0;
};

// Argmax classification of one logits block [B,K]; ties resolve to the
// lowest class index. Accumulates into res and refreshes res.accuracy.
void tally_predictions(const Tensor& logits, const std::vector<std::size_t>& labels,
                       EvalResult& res);

EvalResult evaluate(Pipeline& pipe, const PreprocessedSet& data);

// Protocol runner: k-fold CV, holdout, data-fraction sweeps and the vw-only
// ablation (trunk frozen at random initialization).
struct ProtocolConfig {
    std::string protocol = "holdout";  // "cv" | "holdout" | "fraction"
    std::size_t folds = 5;
    std::vector<double> fractions = {1.0, 0.8, 0.5, 0.3};
    double holdout_fraction = 0.2;  // evaluation share of the data
    std::size_t jobs = 1;
    TrainConfig train;
    PipelineConfig pipeline;
};

struct ReportRow {
    std::string protocol;
    double fraction = 1.0;
    std::uint64_t seed = 0;
    std::size_t fold = 0;
    double accuracy = 0.0;
};

std::vector<ReportRow> run_protocol(const PreprocessedSet& data, const ProtocolConfig& cfg);

// Header "protocol,fraction,seed,fold,acc".
void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows);

}  // namespace neurophys
