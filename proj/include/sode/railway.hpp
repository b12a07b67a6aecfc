#pragma once

#include "sode/formula.hpp"

#include <memory>
#include <set>
#include <string>
#include <vector>

namespace sode {

struct NodeDef {
    std::string id;
    bool        boundary = false;
    bool        stop = false;   // trains may stop here when listed in a connection
};

struct SegEnd {
    int node = -1;
    int side = 0;   // double-vertex side, transfers must switch sides
};

struct SegmentDef {
    std::string id;
    SegEnd      a, b;
    double      length = 0;
    double      limit = 0;
};

struct NetworkDef {
    std::vector<NodeDef>    nodes;
    std::vector<SegmentDef> segments;

    int node_index(const std::string& id) const;
    int seg_index(const std::string& id) const;
};

struct TrainDef {
    std::string id;
    double      accel = 0, decel = 0, vmax = 0, length = 0;
};

struct ConnectionDef {
    std::string              train;
    std::vector<std::string> nodes;   // visited in order, first is a boundary
};

// Schedule constraint tree.
struct VisitRef {
    std::string train, node;
    bool        departure = false;
};

struct SchedExpr;
using SchedPtr = std::shared_ptr<const SchedExpr>;

struct SchedExpr {
    enum Kind : uint8_t { Ordering, RelTiming, AbsTiming, And, Or, Not } kind;
    VisitRef              v1, v2;
    CmpOp                 op = CmpOp::Lt;
    double                xi = 0;
    std::vector<SchedPtr> kids;
};

SchedPtr sched_ordering(VisitRef v1, VisitRef v2, CmpOp op);
SchedPtr sched_rel(VisitRef v1, VisitRef v2, CmpOp op, double xi);
SchedPtr sched_abs(VisitRef v, CmpOp op, double xi);
SchedPtr sched_and(std::vector<SchedPtr> kids);
SchedPtr sched_or(std::vector<SchedPtr> kids);
SchedPtr sched_not(SchedPtr kid);

std::string sched_to_text(const SchedPtr& s);
SchedPtr    sched_from_text(const std::string& text);

struct ProblemConfig {
    int    J = 1;
    double rho = 30;
};

struct Problem {
    NetworkDef                 network;
    std::vector<TrainDef>      trains;
    std::vector<ConnectionDef> connections;
    std::vector<SchedPtr>      schedule;
    ProblemConfig              config;

    const TrainDef& train(const std::string& id) const;
    const ConnectionDef& connection(const std::string& train) const;
    void validate() const;   // throws SodeError on structural problems
};

Problem     problem_from_json(const std::string& text);
std::string problem_to_json(const Problem& p);

// Per-train reachability projection of the double-vertex graph under the
// connection's node order. All indices refer to network.segments / nodes.
struct SuccessorInfo {
    std::set<std::pair<int, int>> seg_pairs;      // S1 can be followed by S2
    std::set<std::pair<int, int>> node_to_seg;    // departing node N into S
    std::set<std::pair<int, int>> seg_to_node;    // S arrives at node N
    std::set<int>                 start_segments;
    std::set<int>                 ending_segments;
    std::set<int>                 end_nodes;
    std::set<int>                 stop_entry_segments; // approach limit forced to 0
    std::set<int>                 used_segments;
    int                           start_node = -1;
    long long                     path_count = 0;  // -1 when cyclic
    bool                          feasible = false;
    std::vector<std::string>      warnings;
};

SuccessorInfo successor_relation(const NetworkDef& net, const ConnectionDef& conn);

} // namespace sode
