#include "neurophys/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "neurophys/errors.hpp"
#include "neurophys/ops.hpp"
#include "neurophys/random.hpp"

namespace neurophys {

GradCheckReport grad_check(const std::string& name,
                           const std::function<Var(Tape&)>& build_loss,
                           const std::vector<Parameter*>& params, double tolerance, double step) {
    if (step <= 0.0 || tolerance <= 0.0)
        throw ParamError("grad_check: step and tolerance must be positive");
    GradCheckReport report;
    report.name = name;
    report.tolerance = tolerance;

    for (Parameter* p : params) p->zero_grad();
    {
        Tape tape;
        Var loss = build_loss(tape);
        tape.backward(loss);
    }
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    auto eval = [&]() {
        Tape tape;
        return build_loss(tape).value().item();
    };

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double saved = p.value[i];
            p.value[i] = saved + step;
            const double fp = eval();
            p.value[i] = saved - step;
            const double fm = eval();
            p.value[i] = saved;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[pi][i];
            const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
            const double rel = std::fabs(a - numeric) / denom;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst = "param" + std::to_string(pi) + "[" + std::to_string(i) + "]";
            }
        }
    }
    return report;
}

Var weighted_sum(Var out, std::uint64_t seed) {
    const Tensor& ov = out.value();
    RandomSource rng(seed);
    Tensor r(ov.shape());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = rng.uniform(-1.0, 1.0);
    Var rv = out.tape()->input(std::move(r));
    return mean_all(mul(out, rv));
}

}  // namespace neurophys
