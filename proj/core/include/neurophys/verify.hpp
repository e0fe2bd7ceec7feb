#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace neurophys {

// One row of the verification report: measured value against its threshold.
struct VerifyCheck {
    std::string group;  // "gradcheck" | "fhn" | "filter" | "physics"
    std::string name;
    double measured = 0.0;
    double threshold = 0.0;
    std::string relation;  // "<", "<=", ">=", "in" (detail carries the range)
    bool pass = false;
    std::string detail;
};

// Runs the numeric verification suite: finite-difference gradient checks for
// every differentiable operator and the composed pipelines, the FHN oracle
// checks (equilibrium, RK4 self-convergence, residual truncation order),
// the filter-bank response gates and the closed-form loss fixtures.
// `only` filters by group or name substring; empty runs everything.
std::vector<VerifyCheck> run_verification(const std::string& only = "");

void print_verification(std::ostream& out, const std::vector<VerifyCheck>& checks);
bool all_pass(const std::vector<VerifyCheck>& checks);

// Independent equilibrium oracle: setting dv = dw = 0 gives w = (v + a)/b and
// the cubic v^3 + (3/b - 3) v + 3a/b - 3I = 0, solved here by bisection.
// Returns (v*, w*).
std::pair<double, double> fhn_equilibrium_bisection(double a, double b, double stimulus);

}  // namespace neurophys
