#pragma once

#include "sode/formula.hpp"
#include "sode/railway.hpp"

#include <map>
#include <string>
#include <vector>

namespace sode {

struct Encoded {
    Formula                    formula;
    std::vector<SuccessorInfo> succ;       // parallel to problem.trains
    std::vector<std::string>   warnings;
};

// include_finish=false drops the final conditions (used by over-constraint checks)
Encoded encode(const Problem& p, bool include_finish = true);

// variable naming shared with plan extraction and the decision heuristics
std::string enc_var(const std::string& train, const std::string& field, int step);

std::map<std::string, RuleStats> encoder_rule_count(const Problem& p);

} // namespace sode
