#pragma once

#include <functional>
#include <string>
#include <vector>

#include "neurophys/autograd.hpp"

namespace neurophys {

struct GradCheckReport {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    std::string worst;  // "param[i]" of the worst element
    bool pass() const { return max_rel_err < tolerance; }
};

// Compares the tape gradient of a scalar-valued build function against
// central finite differences (step h) for every element of every parameter.
// Relative error uses max(1, |analytic|, |numeric|) as denominator.
//
// The build function must be a pure function of the parameter values: it is
// re-evaluated 2*numel times with perturbed entries.
GradCheckReport grad_check(const std::string& name,
                           const std::function<Var(Tape&)>& build_loss,
                           const std::vector<Parameter*>& params, double tolerance,
                           double step = 1e-5);

// Deterministic weighted-sum reducer: sum(out * r) / numel with r drawn from
// the given seed. Turns any op output into a scalar loss sensitive to every
// output element.
Var weighted_sum(Var out, std::uint64_t seed);

}  // namespace neurophys
