#include "neurophys/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <thread>

#include "neurophys/errors.hpp"
#include "neurophys/ops.hpp"

namespace neurophys {

void TrainConfig::validate() const {
    if (lambda < 0.0) throw ConfigError("train config: lambda must be >= 0");
    if (lr < 0.0) throw ConfigError("train config: lr must be >= 0");
    if (batch_size == 0) throw ConfigError("train config: batch size must be >= 1");
    if (data_fraction <= 0.0 || data_fraction > 1.0)
        throw ConfigError("train config: data fraction must be in (0,1]");
    if (eval_fraction < 0.0 || eval_fraction >= 1.0)
        throw ConfigError("train config: eval fraction must be in [0,1)");
    if (optimizer != "adam" && optimizer != "sgd")
        throw ConfigError("train config: unknown optimizer '" + optimizer + "'");
}

void write_metrics_csv(std::ostream& out, const MetricsLog& log) {
    out << "epoch,loss_total,loss_cls,loss_phys,acc_train,acc_eval\n";
    char buf[256];
    for (const EpochRecord& r : log.epochs) {
        std::snprintf(buf, sizeof(buf), "%zu,%.6g,%.6g,%.6g,%.6g,%.6g\n", r.epoch, r.loss_total,
                      r.loss_cls, r.loss_phys, r.acc_train, r.acc_eval);
        out << buf;
    }
}

Pipeline build_pipeline(const PipelineConfig& cfg, const InputGeometry& geom,
                        double sample_rate_hz, std::size_t n_classes, std::uint64_t seed) {
    if (sample_rate_hz <= 0.0) throw ConfigError("pipeline: sample rate must be positive");
    if (n_classes < 2) throw ConfigError("pipeline: need at least 2 classes");
    Pipeline p;
    p.cfg = cfg;
    p.geom = geom;
    p.sample_rate_hz = sample_rate_hz;
    p.n_classes = n_classes;
    p.fhn = cfg.fhn;
    p.fhn.dt = cfg.residual_dt > 0.0 ? cfg.residual_dt : 1.0 / sample_rate_hz;

    RandomSource rng(seed ^ 0x70695070ULL);  // model-init stream
    p.pinn = PinnModel(cfg.pinn, geom, rng);
    const std::size_t nodes = p.pinn.config().num_nodes;
    const std::size_t feat_time = geom.windows * p.pinn.config().data_points;
    FeatxConfig fx = cfg.featx;
    fx.classes = n_classes;
    p.featx = FeatxNet(fx, nodes, feat_time, rng);
    p.clf = Classifier(fx.latent_dim, n_classes, rng);
    p.coupling = build_coupling_matrix(nodes, cfg.coupling_strength);
    return p;
}

Pipeline::BatchOut Pipeline::forward_batch(Tape& tape, const Tensor& x, bool train,
                                           RandomSource* rng) {
    BatchOut out;
    out.state = pinn.forward(tape, x, train, rng, fhn.dt);
    out.features = featx.extract_features(tape, out.state, train);
    out.logits = clf.classify(tape, out.features);
    return out;
}

std::vector<std::pair<std::string, Parameter*>> Pipeline::named_parameters() {
    std::vector<std::pair<std::string, Parameter*>> out;
    const ParamVisitor collect = [&out](const std::string& name, Parameter& p) {
        out.emplace_back(name, &p);
    };
    pinn.visit("pinn", collect);
    featx.visit("featx", collect);
    clf.visit("clf", collect);
    return out;
}

std::vector<std::pair<std::string, Tensor*>> Pipeline::named_buffers() {
    std::vector<std::pair<std::string, Tensor*>> out;
    const BufferVisitor collect = [&out](const std::string& name, Tensor& t) {
        out.emplace_back(name, &t);
    };
    pinn.visit_buffers("pinn", collect);
    featx.visit_buffers("featx", collect);
    return out;
}

std::size_t Pipeline::trainable_parameter_count() {
    std::size_t n = 0;
    for (auto& [name, p] : named_parameters())
        if (p->trainable) n += p->value.size();
    return n;
}

PreprocessedSet preprocess_set(const TrialSet& data, const PipelineConfig& cfg) {
    data.validate();
    WindowSpec wspec;
    wspec.window_len = static_cast<std::size_t>(std::llround(cfg.window_sec * data.sample_rate_hz));
    wspec.stride = static_cast<std::size_t>(std::llround(cfg.stride_sec * data.sample_rate_hz));
    PreprocessedSet set;
    set.x = preprocess(data, wspec, cfg.filter_bank);
    set.labels = data.labels;
    set.sample_rate_hz = data.sample_rate_hz;
    set.n_classes = data.n_classes;
    return set;
}

InputGeometry geometry_of(const PreprocessedSet& set) {
    if (set.x.ndim() != 5)
        throw ConfigError("preprocessed set must be 5-D, got " + shape_str(set.x.shape()));
    return InputGeometry{set.x.dim(1), set.x.dim(2), set.x.dim(3), set.x.dim(4)};
}

Var total_loss(Tape& tape, Var logits, const std::vector<std::size_t>& labels,
               const StateVars& state, const FhnParams& params, const CouplingMatrix* coupling,
               double lambda) {
    if (lambda < 0.0) throw ConfigError("total_loss: lambda must be >= 0");
    Var ce = cross_entropy(logits, labels);
    Var phys = physics_loss(tape, state, params, coupling);
    return add(ce, affine(phys, lambda, 0.0));
}

namespace {

std::vector<std::vector<std::size_t>> by_class(const std::vector<std::size_t>& labels,
                                               const std::vector<std::size_t>& pool) {
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t idx : pool) groups[labels[idx]].push_back(idx);
    std::vector<std::vector<std::size_t>> out;
    out.reserve(groups.size());
    for (auto& [cls, members] : groups) out.push_back(std::move(members));
    return out;
}

}  // namespace

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    const std::vector<std::size_t>& labels, double second_fraction, RandomSource& rng) {
    if (second_fraction < 0.0 || second_fraction >= 1.0)
        throw ConfigError("stratified_split: fraction must be in [0,1)");
    std::vector<std::size_t> all(labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    std::vector<std::size_t> first, second;
    for (auto& members : by_class(labels, all)) {
        rng.shuffle(members);
        const std::size_t take =
            static_cast<std::size_t>(std::llround(second_fraction * members.size()));
        for (std::size_t i = 0; i < members.size(); ++i)
            (i < take ? second : first).push_back(members[i]);
    }
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());
    return {first, second};
}

std::vector<std::size_t> stratified_subsample(const std::vector<std::size_t>& labels,
                                              const std::vector<std::size_t>& pool,
                                              double fraction, RandomSource& rng) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw ConfigError("stratified_subsample: fraction must be in (0,1]");
    if (fraction == 1.0) return pool;
    auto groups = by_class(labels, pool);
    const std::size_t target =
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pool.size())));
    // Per-class floor, then largest fractional remainders take the leftovers.
    std::vector<std::size_t> take(groups.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const double exact = fraction * static_cast<double>(groups[g].size());
        take[g] = static_cast<std::size_t>(std::floor(exact));
        assigned += take[g];
        remainders.emplace_back(exact - std::floor(exact), g);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; assigned < target && i < remainders.size(); ++i) {
        ++take[remainders[i].second];
        ++assigned;
    }
    std::vector<std::size_t> out;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        rng.shuffle(groups[g]);
        const std::size_t n = std::min(take[g], groups[g].size());
        out.insert(out.end(), groups[g].begin(), groups[g].begin() + n);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::size_t> stratified_folds(const std::vector<std::size_t>& labels, std::size_t k,
                                          RandomSource& rng) {
    if (k < 2) throw ConfigError("stratified_folds: need k >= 2");
    std::vector<std::size_t> all(labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    std::vector<std::size_t> fold_of(labels.size(), 0);
    for (auto& members : by_class(labels, all)) {
        rng.shuffle(members);
        for (std::size_t i = 0; i < members.size(); ++i) fold_of[members[i]] = i % k;
    }
    return fold_of;
}

namespace {

// Adaptive-moment optimizer, beta = (0.9, 0.999), eps = 1e-8.
class Optimizer {
   public:
    Optimizer(std::vector<Parameter*> params, const TrainConfig& cfg)
        : params_(std::move(params)), lr_(cfg.lr), adam_(cfg.optimizer == "adam") {
        if (adam_) {
            m_.reserve(params_.size());
            v_.reserve(params_.size());
            for (Parameter* p : params_) {
                m_.emplace_back(p->value.shape());
                v_.emplace_back(p->value.shape());
            }
        }
    }

    void step() {
        ++t_;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Parameter& p = *params_[i];
            if (!p.trainable) continue;
            if (adam_) {
                Tensor& m = m_[i];
                Tensor& v = v_[i];
                for (std::size_t j = 0; j < p.value.size(); ++j) {
                    const double g = p.grad[j];
                    m[j] = b1 * m[j] + (1.0 - b1) * g;
                    v[j] = b2 * v[j] + (1.0 - b2) * g * g;
                    const double mhat = m[j] / bc1;
                    const double vhat = v[j] / bc2;
                    p.value[j] -= lr_ * mhat / (std::sqrt(vhat) + eps);
                }
            } else {
                for (std::size_t j = 0; j < p.value.size(); ++j)
                    p.value[j] -= lr_ * p.grad[j];
            }
        }
    }

   private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_, v_;
    double lr_;
    bool adam_ = true;
    std::size_t t_ = 0;
};

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& order, std::size_t begin,
                   std::size_t end) {
    const std::size_t row = x.size() / x.dim(0);
    Shape shape = x.shape();
    shape[0] = end - begin;
    Tensor out(shape);
    for (std::size_t i = begin; i < end; ++i)
        std::memcpy(out.data() + (i - begin) * row, x.data() + order[i] * row,
                    row * sizeof(double));
    return out;
}

std::size_t argmax_row(const double* row, std::size_t k) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < k; ++i)
        if (row[i] > row[best]) best = i;  // ties keep the lowest index
    return best;
}

}  // namespace

MetricsLog train(Pipeline& pipe, const PreprocessedSet& train_set,
                 const PreprocessedSet& eval_set, const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.size() == 0) throw UsageError("train: empty training set");
    const auto start = std::chrono::steady_clock::now();

    if (cfg.ablation_vw_only) pipe.pinn.set_trunk_trainable(false);
    std::vector<Parameter*> params;
    for (auto& [name, p] : pipe.named_parameters()) params.push_back(p);
    Optimizer opt(params, cfg);
    const CouplingMatrix* coupling = cfg.coupling_in_loss ? &pipe.coupling : nullptr;

    RandomSource root(cfg.seed);
    MetricsLog log;
    const std::size_t K = pipe.n_classes;
    const std::size_t n = train_set.size();

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        RandomSource shuffle_rng = root.derive(0x5755 + epoch);
        RandomSource dropout_rng = root.derive(0xd0 + epoch);
        shuffle_rng.shuffle(order);

        double sum_total = 0.0, sum_cls = 0.0, sum_phys = 0.0;
        std::size_t train_correct = 0, batches = 0;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size, ++batches) {
            const std::size_t end = std::min(n, begin + cfg.batch_size);
            Tensor xb = gather_rows(train_set.x, order, begin, end);
            std::vector<std::size_t> yb(end - begin);
            for (std::size_t i = begin; i < end; ++i) yb[i - begin] = train_set.labels[order[i]];

            Tape tape;
            auto out = pipe.forward_batch(tape, xb, true, &dropout_rng);
            Var ce = cross_entropy(out.logits, yb);
            Var phys = physics_loss(tape, out.state, pipe.fhn, coupling);
            Var total = add(ce, affine(phys, cfg.lambda, 0.0));

            const double total_v = total.value().item();
            if (!std::isfinite(total_v))
                throw DivergenceError(
                    "train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(batches),
                    epoch);
            sum_total += total_v;
            sum_cls += ce.value().item();
            sum_phys += phys.value().item();
            const Tensor& logits = out.logits.value();
            for (std::size_t i = 0; i < yb.size(); ++i)
                if (argmax_row(logits.data() + i * K, K) == yb[i]) ++train_correct;

            tape.backward(total);
            opt.step();
            for (Parameter* p : params) p->zero_grad();
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss_total = sum_total / static_cast<double>(batches);
        rec.loss_cls = sum_cls / static_cast<double>(batches);
        rec.loss_phys = sum_phys / static_cast<double>(batches);
        rec.acc_train = static_cast<double>(train_correct) / static_cast<double>(n);
        rec.acc_eval = eval_set.size() ? evaluate(pipe, eval_set).accuracy : 0.0;
        log.epochs.push_back(rec);
    }
    log.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return log;
}

void tally_predictions(const Tensor& logits, const std::vector<std::size_t>& labels,
                       EvalResult& res) {
    if (logits.ndim() != 2 || logits.dim(0) != labels.size())
        throw ShapeError("tally_predictions: logits " + shape_str(logits.shape()) +
                         " do not match " + std::to_string(labels.size()) + " labels");
    const std::size_t K = logits.dim(1);
    if (res.confusion.size() != K * K) res.confusion = Tensor({K, K});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::size_t pred = argmax_row(logits.data() + i * K, K);
        res.confusion[labels[i] * K + pred] += 1.0;
        if (pred == labels[i]) ++res.correct;
        ++res.total;
    }
    res.accuracy = static_cast<double>(res.correct) / static_cast<double>(res.total);
}

EvalResult evaluate(Pipeline& pipe, const PreprocessedSet& data) {
    if (data.size() == 0) throw UsageError("evaluate: empty data set");
    const std::size_t K = pipe.n_classes;
    EvalResult res;
    res.confusion = Tensor({K, K});
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t batch = 64;
    for (std::size_t begin = 0; begin < data.size(); begin += batch) {
        const std::size_t end = std::min(data.size(), begin + batch);
        Tensor xb = gather_rows(data.x, order, begin, end);
        Tape tape;
        auto out = pipe.forward_batch(tape, xb, false, nullptr);
        std::vector<std::size_t> yb(data.labels.begin() + begin, data.labels.begin() + end);
        tally_predictions(out.logits.value(), yb, res);
    }
    return res;
}

namespace {

struct FoldTask {
    std::vector<std::size_t> train_idx, eval_idx;
    std::size_t fold = 0;
    double fraction = 1.0;
};

ReportRow run_one(const PreprocessedSet& data, const ProtocolConfig& cfg, const FoldTask& task) {
    PreprocessedSet tr = data.subset(task.train_idx);
    PreprocessedSet ev = data.subset(task.eval_idx);
    Pipeline pipe = build_pipeline(cfg.pipeline, geometry_of(data), data.sample_rate_hz,
                                   data.n_classes, cfg.train.seed + 7919 * task.fold);
    TrainConfig tc = cfg.train;
    tc.data_fraction = task.fraction;
    MetricsLog log = train(pipe, tr, ev, tc);
    ReportRow row;
    row.protocol = cfg.protocol + (cfg.train.ablation_vw_only ? "-vw" : "");
    row.fraction = task.fraction;
    row.seed = cfg.train.seed;
    row.fold = task.fold;
    row.accuracy = log.epochs.empty() ? 0.0 : log.epochs.back().acc_eval;
    return row;
}

}  // namespace

std::vector<ReportRow> run_protocol(const PreprocessedSet& data, const ProtocolConfig& cfg) {
    cfg.train.validate();
    if (data.size() == 0) throw UsageError("run_protocol: empty data set");
    RandomSource rng(cfg.train.seed ^ 0x9e0107c01ULL);

    std::vector<FoldTask> tasks;
    if (cfg.protocol == "cv") {
        auto fold_of = stratified_folds(data.labels, cfg.folds, rng);
        for (std::size_t f = 0; f < cfg.folds; ++f) {
            FoldTask task;
            task.fold = f;
            task.fraction = cfg.train.data_fraction;
            for (std::size_t i = 0; i < fold_of.size(); ++i)
                (fold_of[i] == f ? task.eval_idx : task.train_idx).push_back(i);
            if (task.fraction < 1.0) {
                RandomSource sub = rng.derive(0xf0 + f);
                task.train_idx =
                    stratified_subsample(data.labels, task.train_idx, task.fraction, sub);
            }
            tasks.push_back(std::move(task));
        }
    } else if (cfg.protocol == "holdout" || cfg.protocol == "fraction") {
        auto [train_idx, eval_idx] = stratified_split(data.labels, cfg.holdout_fraction, rng);
        std::vector<double> fractions =
            cfg.protocol == "holdout" ? std::vector<double>{cfg.train.data_fraction}
                                      : cfg.fractions;
        for (std::size_t f = 0; f < fractions.size(); ++f) {
            FoldTask task;
            task.fold = f;
            task.fraction = fractions[f];
            task.eval_idx = eval_idx;
            RandomSource sub = rng.derive(0xf0 + f);
            task.train_idx = stratified_subsample(data.labels, train_idx, task.fraction, sub);
            tasks.push_back(std::move(task));
        }
    } else {
        throw ConfigError("run_protocol: unknown protocol '" + cfg.protocol + "'");
    }

    std::vector<ReportRow> rows(tasks.size());
    const std::size_t jobs = std::max<std::size_t>(1, cfg.jobs);
    if (jobs == 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) rows[i] = run_one(data, cfg, tasks[i]);
    } else {
        // Independent pipelines per task; results land at fixed indices so
        // the report is identical for any job count.
        std::vector<std::thread> workers;
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(tasks.size());
        for (std::size_t wkr = 0; wkr < std::min(jobs, tasks.size()); ++wkr)
            workers.emplace_back([&]() {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= tasks.size()) return;
                    try {
                        rows[i] = run_one(data, cfg, tasks[i]);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        for (auto& w : workers) w.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    return rows;
}

void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
    out << "protocol,fraction,seed,fold,acc\n";
    char buf[256];
    for (const ReportRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.6g,%llu,%zu,%.6g\n", r.protocol.c_str(), r.fraction,
                      static_cast<unsigned long long>(r.seed), r.fold, r.accuracy);
        out << buf;
    }
}

}  // namespace neurophys
