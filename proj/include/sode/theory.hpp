#pragma once

#include "sode/formula.hpp"
#include "sode/ode.hpp"
#include "sode/sat.hpp"

#include <deque>
#include <iosfwd>
#include <optional>

namespace sode {

// Value slots: every variable owns slot A, functional variables also slot B.
//   real v:        A = value
//   functional f:  A = init(f), B = trajectory final value
inline int slot_a(VarId v) { return 2 * v; }
inline int slot_b(VarId v) { return 2 * v + 1; }
inline VarId slot_var(int s) { return s >> 1; }
inline bool slot_is_b(int s) { return s & 1; }

// Atom dependency graph: edges run from an inference rule to every atom
// that mentions a variable the rule assigns.
struct DependencyGraph {
    int                           n = 0;       // vertices = atoms
    std::vector<std::vector<int>> out;
    std::vector<int>              in_degree;
    std::vector<char>             is_rule;     // eq rule or differential constraint
    std::vector<char>             initial;     // no incoming edges
};

DependencyGraph build_dependency_graph(const Formula& f);

class OdeTheory : public TheoryIface {
public:
    explicit OdeTheory(const Formula& f);

    Result on_assign(Lit l) override;
    std::vector<Lit> explain(Lit l) override;
    void push_level() override;
    void pop_to(int level) override;

    // value store access (plan extraction, tests)
    bool   has_slot(int s) const { return has_[s]; }
    double slot_value(int s) const { return val_[s]; }
    bool   has_real(VarId v) const { return has_[slot_a(v)]; }
    double real_value(VarId v) const { return val_[slot_a(v)]; }
    bool   has_init(VarId f) const { return has_[slot_a(f)]; }
    double init_value(VarId f) const { return val_[slot_a(f)]; }
    bool   has_final(VarId f) const { return has_[slot_b(f)]; }
    double final_value(VarId f) const { return val_[slot_b(f)]; }
    const IntegrationResult* group_result(GroupId g) const {
        return grp_[g].fired ? &grp_[g].result : nullptr;
    }
    double group_tau(GroupId g) const { return grp_[g].result.tau; }
    int8_t atom_value(AtomId a) const { return atom_val_[a]; }

    void set_trace(std::ostream* os) { trace_ = os; }

    int64_t integrations() const { return integrations_; }

private:
    struct EqDir {
        int              target = -1;
        TermId           src_term = -1;
        std::vector<int> sources;
    };
    struct AtomInfo {
        std::vector<int>     eval_inputs;   // distinct slots, comparisons only
        int                  missing = 0;
        std::optional<EqDir> dirL, dirR;
        GroupId              group = -1;    // for Diff/Invariant members
    };
    struct GroupState {
        std::vector<AtomId> diff_atoms;     // parallel to members
        std::vector<AtomId> inv_atoms;
        std::vector<int>    required;       // distinct slots
        int                 unassigned = 0; // diff + inv atoms without polarity
        bool                complete = true;
        bool                disabled = false;
        bool                fired = false;
        IntegrationResult   result;
    };
    struct Just {
        enum Kind : uint8_t { None, EqL, EqR, Group } kind = None;
        AtomId  atom = -1;
        GroupId group = -1;
    };
    struct Undo {
        enum Op : uint8_t { SetSlot, SetAtomVal, Fire, Disable } op;
        int idx;
    };

    // returns false and fills conflict_out_ on theory conflict
    bool set_slot(int s, double v, Just j);
    bool eval_atom(AtomId a, bool& truth) const; // truth of an evaluable comparison
    bool handle_cmp_assign(AtomId a, bool pol);
    bool try_fire_eq(AtomId a);
    bool try_fire_group(GroupId g);
    bool drain();                          // worklist fixpoint
    void ancestors_of_slot(int s, std::vector<Lit>& out, std::vector<char>& seen_slot) const;
    void ancestors_of_atom_inputs(AtomId a, std::vector<Lit>& out) const;
    void group_ancestors(GroupId g, std::vector<Lit>& out, std::vector<char>& seen_slot) const;
    Lit  trail_lit(AtomId a) const { return mkLit(f_.atom(a).abs, atom_val_[a] == 0); }
    void conflict_from(std::vector<Lit> lits);

    const Formula&            f_;
    std::vector<AtomInfo>     info_;
    std::vector<GroupState>   grp_;
    std::vector<double>       val_;
    std::vector<char>         has_;
    std::vector<Just>         just_;
    std::vector<int8_t>       atom_val_;   // -1 unset / 0 false / 1 true
    std::vector<std::vector<AtomId>> cmp_watch_;   // slot -> comparison atoms
    std::vector<std::vector<AtomId>> rule_watch_;  // slot -> eq-rule atoms (source side)
    std::vector<std::vector<GroupId>> grp_watch_;  // slot -> groups
    std::deque<int>           work_;       // freshly filled slots
    std::vector<Undo>         undo_;
    std::vector<size_t>       level_marks_;
    std::vector<Lit>          props_out_;
    std::vector<Lit>          conflict_out_;
    bool                      init_flushed_ = false;
    std::ostream*             trace_ = nullptr;
    int64_t                   integrations_ = 0;

    friend struct StoreEnv;
};

} // namespace sode
