#pragma once

#include "sode/formula.hpp"

#include <chrono>
#include <unordered_set>

namespace sode {

enum class LBool : uint8_t { False = 0, True = 1, Undef = 2 };

inline LBool lbool_of(bool b) { return b ? LBool::True : LBool::False; }

// Theory callback bundle. The solver notifies every trail extension and
// expects propagations or a conflict explanation in return.
struct TheoryIface {
    virtual ~TheoryIface() = default;

    struct Result {
        bool             ok = true;
        std::vector<Lit> propagations;   // forced literals, justified lazily via explain
        std::vector<Lit> conflict;       // nonempty iff !ok; clause false under the trail
    };

    virtual Result on_assign(Lit l) = 0;
    // Reason clause for a theory-propagated literal: contains l plus negated
    // ancestors, all ancestors true on the trail before l.
    virtual std::vector<Lit> explain(Lit l) = 0;
    virtual void push_level() = 0;
    virtual void pop_to(int level) = 0;
};

class Solver;

struct DecisionIface {
    virtual ~DecisionIface() = default;
    virtual Lit next_decision(const Solver& s) = 0;  // lit_Undef defers to fallback
};

struct SolverStats {
    int64_t conflicts = 0;
    int64_t decisions = 0;
    int64_t propagations = 0;
    int64_t theory_propagations = 0;
    int64_t learned = 0;
    int64_t restarts = 0;
};

enum class SolveStatus : uint8_t { Sat, Unsat, Timeout };

class Solver {
public:
    explicit Solver(const Formula& f);

    void set_theory(TheoryIface* t) { theory_ = t; }
    void set_heuristic(DecisionIface* h) { heuristic_ = h; }
    void set_time_budget(double seconds) { budget_ = seconds; }
    void enable_restarts(bool on) { restarts_ = on; }

    SolveStatus solve();

    LBool value(VarId v) const { return assigns_[v]; }
    LBool value(Lit l) const {
        LBool b = assigns_[l.var()];
        if (b == LBool::Undef) return b;
        return lbool_of((b == LBool::True) != l.neg());
    }
    const std::vector<LBool>& model() const { return model_; }
    const SolverStats& stats() const { return stats_; }
    const Formula& formula() const { return f_; }
    int decision_level() const { return (int)trail_lim_.size(); }
    int num_assigned() const { return (int)trail_.size(); }

    // Adds a clause outside conflict analysis; no-op when an identical
    // clause is already present. Only valid at decision level 0.
    bool add_learned(std::vector<Lit> lits);

    std::string to_dimacs() const;

private:
    struct SClause {
        std::vector<Lit> lits;
        bool             learned = false;
    };

    static constexpr int kReasonNone = -1;
    static constexpr int kReasonTheory = -2;

    bool enqueue(Lit l, int reason);
    // Returns conflict literals in conflict_ and false on conflict.
    bool propagate();
    void analyze(std::vector<Lit> confl, std::vector<Lit>& learnt, int& bt_level);
    void cancel_until(int level);
    int  attach(std::vector<Lit> lits, bool learned);
    void bump(VarId v);
    void decay();
    Lit  pick_branch();
    bool out_of_time() const;
    std::vector<Lit> reason_lits(Lit p);
    static uint64_t clause_hash(const std::vector<Lit>& lits);

    const Formula&        f_;
    TheoryIface*          theory_ = nullptr;
    DecisionIface*        heuristic_ = nullptr;
    double                budget_ = 0;
    bool                  restarts_ = false;
    bool                  unsat_root_ = false;

    std::vector<SClause>  clauses_;
    std::vector<std::vector<int>> watches_;  // per literal index
    std::unordered_set<uint64_t>  clause_hashes_;

    std::vector<LBool>    assigns_;
    std::vector<int>      levels_;
    std::vector<int>      reasons_;
    std::vector<bool>     phase_;
    std::vector<Lit>      trail_;
    std::vector<int>      trail_lim_;
    size_t                qhead_ = 0;
    size_t                thead_ = 0;

    std::vector<double>   activity_;
    double                act_inc_ = 1.0;
    std::vector<int>      heap_;       // lazy max-heap over activity
    std::vector<int>      heap_pos_;
    void heap_insert(VarId v);
    VarId heap_pop();
    void heap_up(int i);
    void heap_down(int i);
    bool heap_less(VarId a, VarId b) const;

    std::vector<Lit>      conflict_;
    std::vector<char>     seen_;
    std::vector<VarId>    seen_touched_;
    std::vector<Lit>      units_;      // root-level unit clauses, kept for export
    std::vector<LBool>    model_;
    SolverStats           stats_;
    std::chrono::steady_clock::time_point start_;
};

} // namespace sode
