#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace sode {

using VarId = int32_t;
using TermId = int32_t;
using AtomId = int32_t;
using GroupId = int32_t;
using ClauseId = int32_t;

constexpr VarId var_Undef = -1;

struct SodeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DeclError : SodeError { using SodeError::SodeError; };
struct TypeError : SodeError { using SodeError::SodeError; };
struct EvalError : SodeError { using SodeError::SodeError; };

// Literal over Boolean variables, LSB is the sign.
struct Lit {
    int32_t x = -2;
    Lit() = default;
    Lit(VarId v, bool neg) : x(v * 2 + (neg ? 1 : 0)) {}
    VarId  var() const { return x >> 1; }
    bool   neg() const { return x & 1; }
    Lit    operator~() const { Lit l; l.x = x ^ 1; return l; }
    bool   operator==(const Lit& o) const { return x == o.x; }
    bool   operator!=(const Lit& o) const { return x != o.x; }
    bool   operator<(const Lit& o) const { return x < o.x; }
};
inline Lit mkLit(VarId v, bool neg = false) { return Lit(v, neg); }
const Lit lit_Undef;

enum class VarKind : uint8_t { Boolean, Real, Functional };

struct Variable {
    VarId       id = var_Undef;
    VarKind     kind = VarKind::Boolean;
    std::string name;
    int         step = -1;          // unrolling index, -1 if none
    bool        decidable = true;   // false for CNF auxiliaries
    AtomId      atom = -1;          // bound atom if this is an abstraction variable
};

enum class TermKind : uint8_t {
    Const, RealVar, FunVar, Init, Final,
    Add, Sub, Mul, Div, Neg, Min, Max
};

struct Term {
    TermKind            kind;
    double              cval = 0;       // Const
    VarId               var = var_Undef; // RealVar / FunVar / Init / Final
    std::vector<TermId> kids;
};

enum class CmpOp : uint8_t { Lt, Le, Gt, Ge, Eq };

inline CmpOp negate_op(CmpOp op) {
    switch (op) {
        case CmpOp::Lt: return CmpOp::Ge;
        case CmpOp::Le: return CmpOp::Gt;
        case CmpOp::Gt: return CmpOp::Le;
        case CmpOp::Ge: return CmpOp::Lt;
        default: throw TypeError("cannot negate equality");
    }
}
inline const char* op_name(CmpOp op) {
    switch (op) {
        case CmpOp::Lt: return "<";
        case CmpOp::Le: return "<=";
        case CmpOp::Gt: return ">";
        case CmpOp::Ge: return ">=";
        default:        return "=";
    }
}

enum class AtomKind : uint8_t { Comparison, Diff, Invariant };

struct Atom {
    AtomKind kind;
    TermId   lhs = -1;       // Comparison / Invariant
    CmpOp    op = CmpOp::Eq;
    TermId   rhs = -1;       // also Diff right-hand side
    VarId    fvar = var_Undef; // Diff left-hand side
    GroupId  group = -1;     // Invariant
    VarId    abs = var_Undef;
};

struct Clause {
    std::vector<Lit> lits;
    uint16_t         tag = 0;   // rule tag index, 0 = untagged
};

struct IntegrationGroup {
    GroupId            id = -1;
    double             rho = 0;
    bool               sync = true;
    VarId              tau = var_Undef;  // shared length variable, undef for async groups
    std::vector<VarId> members;
};

// Boolean formula tree consumed by assert_expr.
struct BExpr;
using BRef = std::shared_ptr<const BExpr>;

struct BExpr {
    enum Kind : uint8_t { ConstK, LitK, AtomK, NotK, AndK, OrK, ImpliesK, IffK, IteK };
    Kind              kind;
    bool              bval = false;
    Lit               lit;
    AtomId            atom = -1;
    std::vector<BRef> kids;
};

BRef b_true();
BRef b_false();
BRef b_lit(Lit l);
BRef b_var(VarId v);
BRef b_atom(AtomId a);
BRef b_not(const BRef& e);
BRef b_and(std::vector<BRef> kids);
BRef b_or(std::vector<BRef> kids);
BRef b_implies(const BRef& a, const BRef& b);
BRef b_iff(const BRef& a, const BRef& b);
BRef b_ite(const BRef& c, const BRef& a, const BRef& b);

struct RuleStats {
    int64_t clauses = 0;
    int64_t literals = 0;
    int64_t atoms = 0;
};

struct FormulaStats {
    int64_t                         n_bool = 0, n_real = 0, n_fun = 0, n_aux = 0;
    std::map<int, int64_t>          vars_by_step;
    int64_t                         n_atoms = 0, n_cmp = 0, n_diff = 0, n_inv = 0;
    int64_t                         n_clauses = 0, n_literals = 0;
    std::map<std::string, RuleStats> by_rule;
};

class Formula {
public:
    // --- symbols ---
    VarId declare(VarKind kind, const std::string& name, int step = -1, bool decidable = true);
    VarId find_var(const std::string& name) const; // var_Undef if absent
    const Variable& var(VarId v) const { return vars_.at(v); }
    int num_vars() const { return (int)vars_.size(); }
    const std::vector<Variable>& vars() const { return vars_; }

    // --- terms (hash-consed) ---
    TermId t_const(double c);
    TermId t_var(VarId v);     // real variable
    TermId t_fun(VarId f);     // functional variable, pointwise value
    TermId t_init(VarId f);
    TermId t_final(VarId f);
    TermId t_add(TermId a, TermId b);
    TermId t_sub(TermId a, TermId b);
    TermId t_mul(TermId a, TermId b);
    TermId t_div(TermId a, TermId b);
    TermId t_neg(TermId a);
    TermId t_min(std::vector<TermId> kids);
    TermId t_max(std::vector<TermId> kids);
    const Term& term(TermId t) const { return terms_.at(t); }
    int num_terms() const { return (int)terms_.size(); }

    // --- integration groups ---
    GroupId make_group(double rho, bool sync, VarId tau = var_Undef);
    void add_group_member(GroupId g, VarId f);
    const IntegrationGroup& group(GroupId g) const { return groups_.at(g); }
    const std::vector<IntegrationGroup>& groups() const { return groups_; }

    // --- atoms (deduplicated, each owns one abstraction variable) ---
    AtomId atom_cmp(TermId lhs, CmpOp op, TermId rhs);
    AtomId atom_diff(VarId f, TermId rhs);
    AtomId atom_inv(GroupId g, TermId lhs, CmpOp op, TermId rhs);
    const Atom& atom(AtomId a) const { return atoms_.at(a); }
    int num_atoms() const { return (int)atoms_.size(); }
    AtomId atom_of(VarId v) const { return vars_.at(v).atom; }
    VarId abs_var(AtomId a) const { return atoms_.at(a).abs; }

    // --- clauses ---
    void set_rule(const std::string& tag);
    const std::string& rule_name(uint16_t tag) const { return rule_tags_.at(tag); }
    uint16_t rule_id(const std::string& tag);
    ClauseId add_clause(std::vector<Lit> lits);             // -1 if dropped as tautology
    std::vector<ClauseId> assert_expr(const BRef& e);
    const Clause& clause(ClauseId c) const { return clauses_.at(c); }
    int num_clauses() const { return (int)clauses_.size(); }
    const std::vector<Clause>& clauses() const { return clauses_; }
    bool has_empty_clause() const { return has_empty_; }

    void freeze();
    bool frozen() const { return frozen_; }

    FormulaStats stats() const;

    // Structural comparison ignoring term ids (terms compared recursively).
    static bool struct_equal(const Formula& a, const Formula& b);

private:
    void   check_mutable() const;
    TermId intern(Term t);
    void   check_arith(TermId t, bool allow_fun) const;
    Lit    lit_of(const BRef& e);
    void   assert_top(const BRef& e, std::vector<ClauseId>& out);
    VarId  fresh_aux();

    std::vector<Variable>                    vars_;
    std::unordered_map<std::string, VarId>   by_name_;
    std::vector<Term>                        terms_;
    std::unordered_map<uint64_t, std::vector<TermId>> term_index_;
    std::vector<Atom>                        atoms_;
    std::vector<uint16_t>                    atom_tag_of_;  // rule tag active at atom creation
    std::unordered_map<uint64_t, std::vector<AtomId>> atom_index_;
    std::vector<IntegrationGroup>            groups_;
    std::vector<Clause>                      clauses_;
    std::vector<std::string>                 rule_tags_{""};
    std::unordered_map<std::string, uint16_t> rule_ids_{{"", 0}};
    uint16_t                                 cur_tag_ = 0;
    int                                      aux_count_ = 0;
    bool                                     frozen_ = false;
    bool                                     has_empty_ = false;
};

} // namespace sode
