#pragma once

#include "sode/railway.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace sode {

// Serial chain of ns station groups, each offering np parallel branches with a
// station at the midpoint. Branch halves are 900 m, joint links 100 m, all
// limits 40 m/s.
Problem gen_serial_parallel(int nt, int ns, int np);

// np defaults to ns; scenario is one of nop / last / all
Problem gen_scenario(const std::string& scenario, int nt, int ns, double bnd);

struct BenchCase {
    std::string scenario;
    int         nt = 1, ns = 2;
    double      bnd = 0;
};

struct BenchResult {
    BenchCase   c;
    std::string result;      // sat / unsat / timeout
    double      wall_s = 0;
    int64_t     conflicts = 0;
    int64_t     decisions = 0;
};

std::vector<BenchResult> run_suite(const std::vector<BenchCase>& cases,
                                   double timeout_s, std::ostream* log = nullptr);

std::string results_csv(const std::vector<BenchResult>& rs);

} // namespace sode
