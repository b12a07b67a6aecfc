#pragma once

#include "sode/encoder.hpp"
#include "sode/railway.hpp"
#include "sode/sat.hpp"
#include "sode/theory.hpp"

#include <string>
#include <vector>

namespace sode {

struct TrainStep {
    std::string mode;                        // idle / steady / acc / brake
    int         back = -1, front = -1, next = -1;   // segment indices, -1 none
    bool        away = false, enter = false, finished = false;
    double      init_v = 0, final_v = 0, final_d = 0;
};

struct Sample {
    double time = 0, d = 0, v = 0;           // absolute time, cumulative distance
    int    segment = -1;                     // front segment, -1 none
};

struct TrainPlan {
    std::string            id;
    std::vector<TrainStep> steps;
    std::vector<Sample>    samples;          // stitched trajectory
};

struct VisitEvent {
    std::string train, node;
    bool        departure = false;
    int         step = 0;
    double      time = 0;
};

struct Plan {
    std::vector<double>     t, tau;          // per step
    std::vector<TrainPlan>  trains;
    std::vector<VisitEvent> visits;
};

Plan extract_plan(const Problem& p, const Encoded& enc, const Solver& s,
                  const OdeTheory& th);

struct Violation {
    std::string rule;
    int         step = -1;
    std::string detail;
};

struct ValidationReport {
    bool                   ok = true;
    std::vector<Violation> violations;
};

// Independent re-check: re-simulates dynamics with the ODE runtime and
// verifies occupancy, ordering and schedule constraints from scratch.
ValidationReport validate_plan(const Plan& plan, const Problem& p);

std::string plan_to_json(const Plan& plan, const Problem& p);
Plan        plan_from_json(const std::string& text, const Problem& p);
std::string plan_csv(const Plan& plan, const Problem& p, const std::string& train);

} // namespace sode
