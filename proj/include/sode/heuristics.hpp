#pragma once

#include "sode/sat.hpp"
#include "sode/theory.hpp"

#include <memory>

namespace sode {

enum class HeuristicKind : uint8_t { Bmc, Railway, Initial };

// Longest edge count from each vertex to anything it reaches, with strongly
// connected components collapsed so cycles get a single finite value.
std::vector<int> compute_distances(const DependencyGraph& g);

// Precomputed decision order with per-level cursor snapshots; returns
// lit_Undef once exhausted so the solver falls back to activity order.
class StaticOrderHeuristic : public DecisionIface {
public:
    StaticOrderHeuristic(const Formula& f, HeuristicKind kind);

    Lit next_decision(const Solver& s) override;
    const std::vector<Lit>& order() const { return order_; }

private:
    std::vector<Lit>    order_;
    size_t              cursor_ = 0;
    std::vector<size_t> snap_;   // cursor at the decision opening each level
};

// nullptr for "vsids"; throws SodeError on unknown names
std::unique_ptr<StaticOrderHeuristic> make_heuristic(const Formula& f,
                                                     const std::string& name);

} // namespace sode
