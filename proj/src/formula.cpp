#include "sode/formula.hpp"

#include <algorithm>
#include <cstring>

namespace sode {

// ---------------------------------------------------------------- BExpr ----

static BRef mk(BExpr e) { return std::make_shared<const BExpr>(std::move(e)); }

BRef b_true()  { BExpr e; e.kind = BExpr::ConstK; e.bval = true;  return mk(std::move(e)); }
BRef b_false() { BExpr e; e.kind = BExpr::ConstK; e.bval = false; return mk(std::move(e)); }

BRef b_lit(Lit l) { BExpr e; e.kind = BExpr::LitK; e.lit = l; return mk(std::move(e)); }
BRef b_var(VarId v) { return b_lit(mkLit(v)); }
BRef b_atom(AtomId a) { BExpr e; e.kind = BExpr::AtomK; e.atom = a; return mk(std::move(e)); }

BRef b_not(const BRef& e) {
    switch (e->kind) {
        case BExpr::ConstK: return e->bval ? b_false() : b_true();
        case BExpr::LitK:   return b_lit(~e->lit);
        case BExpr::NotK:   return e->kids[0];
        default: break;
    }
    BExpr n; n.kind = BExpr::NotK; n.kids = {e};
    return mk(std::move(n));
}

BRef b_and(std::vector<BRef> kids) {
    std::vector<BRef> out;
    for (auto& k : kids) {
        if (k->kind == BExpr::ConstK) {
            if (!k->bval) return b_false();
            continue;
        }
        if (k->kind == BExpr::AndK) {
            out.insert(out.end(), k->kids.begin(), k->kids.end());
            continue;
        }
        out.push_back(k);
    }
    if (out.empty()) return b_true();
    if (out.size() == 1) return out[0];
    BExpr e; e.kind = BExpr::AndK; e.kids = std::move(out);
    return mk(std::move(e));
}

BRef b_or(std::vector<BRef> kids) {
    std::vector<BRef> out;
    for (auto& k : kids) {
        if (k->kind == BExpr::ConstK) {
            if (k->bval) return b_true();
            continue;
        }
        if (k->kind == BExpr::OrK) {
            out.insert(out.end(), k->kids.begin(), k->kids.end());
            continue;
        }
        out.push_back(k);
    }
    if (out.empty()) return b_false();
    if (out.size() == 1) return out[0];
    BExpr e; e.kind = BExpr::OrK; e.kids = std::move(out);
    return mk(std::move(e));
}

BRef b_implies(const BRef& a, const BRef& b) {
    if (a->kind == BExpr::ConstK) return a->bval ? b : b_true();
    if (b->kind == BExpr::ConstK) return b->bval ? b_true() : b_not(a);
    BExpr e; e.kind = BExpr::ImpliesK; e.kids = {a, b};
    return mk(std::move(e));
}

BRef b_iff(const BRef& a, const BRef& b) {
    if (a->kind == BExpr::ConstK) return a->bval ? b : b_not(b);
    if (b->kind == BExpr::ConstK) return b->bval ? a : b_not(a);
    BExpr e; e.kind = BExpr::IffK; e.kids = {a, b};
    return mk(std::move(e));
}

BRef b_ite(const BRef& c, const BRef& a, const BRef& b) {
    if (c->kind == BExpr::ConstK) return c->bval ? a : b;
    BExpr e; e.kind = BExpr::IteK; e.kids = {c, a, b};
    return mk(std::move(e));
}

// -------------------------------------------------------------- Formula ----

void Formula::check_mutable() const {
    if (frozen_) throw SodeError("formula is frozen");
}

VarId Formula::declare(VarKind kind, const std::string& name, int step, bool decidable) {
    check_mutable();
    if (name.empty()) throw DeclError("empty variable name");
    if (by_name_.count(name)) throw DeclError("duplicate variable name: " + name);
    if (kind == VarKind::Functional && step < 0)
        throw DeclError("functional variable needs a step: " + name);
    Variable v;
    v.id = (VarId)vars_.size();
    v.kind = kind;
    v.name = name;
    v.step = step;
    v.decidable = decidable && kind == VarKind::Boolean;
    vars_.push_back(v);
    by_name_.emplace(name, v.id);
    return v.id;
}

VarId Formula::find_var(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? var_Undef : it->second;
}

// ---- terms ----

static uint64_t hash_mix(uint64_t h, uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
}

static uint64_t term_hash(const Term& t) {
    uint64_t h = (uint64_t)t.kind;
    uint64_t bits;
    std::memcpy(&bits, &t.cval, 8);
    h = hash_mix(h, bits);
    h = hash_mix(h, (uint64_t)(uint32_t)t.var);
    for (TermId k : t.kids) h = hash_mix(h, (uint64_t)(uint32_t)k);
    return h;
}

static bool term_same(const Term& a, const Term& b) {
    uint64_t ab, bb;
    std::memcpy(&ab, &a.cval, 8);
    std::memcpy(&bb, &b.cval, 8);
    return a.kind == b.kind && ab == bb && a.var == b.var && a.kids == b.kids;
}

TermId Formula::intern(Term t) {
    uint64_t h = term_hash(t);
    auto& bucket = term_index_[h];
    for (TermId id : bucket)
        if (term_same(terms_[id], t)) return id;
    TermId id = (TermId)terms_.size();
    terms_.push_back(std::move(t));
    bucket.push_back(id);
    return id;
}

TermId Formula::t_const(double c) {
    Term t; t.kind = TermKind::Const; t.cval = c;
    return intern(std::move(t));
}

TermId Formula::t_var(VarId v) {
    if (var(v).kind != VarKind::Real) throw TypeError("t_var expects a real variable: " + var(v).name);
    Term t; t.kind = TermKind::RealVar; t.var = v;
    return intern(std::move(t));
}

TermId Formula::t_fun(VarId f) {
    if (var(f).kind != VarKind::Functional) throw TypeError("t_fun expects a functional variable: " + var(f).name);
    Term t; t.kind = TermKind::FunVar; t.var = f;
    return intern(std::move(t));
}

TermId Formula::t_init(VarId f) {
    if (var(f).kind != VarKind::Functional) throw TypeError("init expects a functional variable: " + var(f).name);
    Term t; t.kind = TermKind::Init; t.var = f;
    return intern(std::move(t));
}

TermId Formula::t_final(VarId f) {
    if (var(f).kind != VarKind::Functional) throw TypeError("final expects a functional variable: " + var(f).name);
    Term t; t.kind = TermKind::Final; t.var = f;
    return intern(std::move(t));
}

static Term binop(TermKind k, TermId a, TermId b) {
    Term t; t.kind = k; t.kids = {a, b};
    return t;
}

TermId Formula::t_add(TermId a, TermId b) { return intern(binop(TermKind::Add, a, b)); }
TermId Formula::t_sub(TermId a, TermId b) { return intern(binop(TermKind::Sub, a, b)); }
TermId Formula::t_mul(TermId a, TermId b) { return intern(binop(TermKind::Mul, a, b)); }

TermId Formula::t_div(TermId a, TermId b) {
    if (term(b).kind == TermKind::Const && term(b).cval == 0)
        throw TypeError("division by zero constant");
    return intern(binop(TermKind::Div, a, b));
}

TermId Formula::t_neg(TermId a) {
    Term t; t.kind = TermKind::Neg; t.kids = {a};
    return intern(std::move(t));
}

TermId Formula::t_min(std::vector<TermId> kids) {
    if (kids.empty()) throw TypeError("min needs at least one operand");
    if (kids.size() == 1) return kids[0];
    Term t; t.kind = TermKind::Min; t.kids = std::move(kids);
    return intern(std::move(t));
}

TermId Formula::t_max(std::vector<TermId> kids) {
    if (kids.empty()) throw TypeError("max needs at least one operand");
    if (kids.size() == 1) return kids[0];
    Term t; t.kind = TermKind::Max; t.kids = std::move(kids);
    return intern(std::move(t));
}

void Formula::check_arith(TermId tid, bool allow_fun) const {
    const Term& t = term(tid);
    switch (t.kind) {
        case TermKind::Const: return;
        case TermKind::RealVar: return;
        case TermKind::FunVar:
            if (!allow_fun) throw TypeError("bare functional variable outside invariant/ode: " + var(t.var).name);
            return;
        case TermKind::Init:
        case TermKind::Final:
            return;
        default:
            for (TermId k : t.kids) check_arith(k, allow_fun);
            return;
    }
}

// ---- groups ----

GroupId Formula::make_group(double rho, bool sync, VarId tau) {
    check_mutable();
    if (rho <= 0) throw TypeError("group timeout must be positive");
    if (tau != var_Undef && var(tau).kind != VarKind::Real)
        throw TypeError("group length variable must be real");
    IntegrationGroup g;
    g.id = (GroupId)groups_.size();
    g.rho = rho;
    g.sync = sync;
    g.tau = tau;
    groups_.push_back(std::move(g));
    return groups_.back().id;
}

void Formula::add_group_member(GroupId g, VarId f) {
    check_mutable();
    if (var(f).kind != VarKind::Functional) throw TypeError("group member must be functional");
    auto& mem = groups_.at(g).members;
    if (std::find(mem.begin(), mem.end(), f) == mem.end()) mem.push_back(f);
}

// ---- atoms ----

static uint64_t atom_hash(const Atom& a) {
    uint64_t h = (uint64_t)a.kind;
    h = hash_mix(h, (uint64_t)(uint32_t)a.lhs);
    h = hash_mix(h, (uint64_t)a.op);
    h = hash_mix(h, (uint64_t)(uint32_t)a.rhs);
    h = hash_mix(h, (uint64_t)(uint32_t)a.fvar);
    h = hash_mix(h, (uint64_t)(uint32_t)a.group);
    return h;
}

static bool atom_same(const Atom& a, const Atom& b) {
    return a.kind == b.kind && a.lhs == b.lhs && a.op == b.op && a.rhs == b.rhs &&
           a.fvar == b.fvar && a.group == b.group;
}

AtomId Formula::atom_cmp(TermId lhs, CmpOp op, TermId rhs) {
    check_mutable();
    check_arith(lhs, false);
    check_arith(rhs, false);
    Atom a;
    a.kind = AtomKind::Comparison;
    a.lhs = lhs; a.op = op; a.rhs = rhs;
    uint64_t h = atom_hash(a);
    for (AtomId id : atom_index_[h])
        if (atom_same(atoms_[id], a)) return id;
    AtomId id = (AtomId)atoms_.size();
    a.abs = declare(VarKind::Boolean, ".a" + std::to_string(id));
    vars_[a.abs].atom = id;
    atoms_.push_back(a);
    atom_index_[h].push_back(id);
    atom_tag_of_.push_back(cur_tag_);
    return id;
}

AtomId Formula::atom_diff(VarId f, TermId rhs) {
    check_mutable();
    if (var(f).kind != VarKind::Functional) throw TypeError("ode left side must be functional");
    check_arith(rhs, true);
    Atom a;
    a.kind = AtomKind::Diff;
    a.fvar = f; a.rhs = rhs;
    uint64_t h = atom_hash(a);
    for (AtomId id : atom_index_[h])
        if (atom_same(atoms_[id], a)) return id;
    // one flow definition per functional variable
    for (const Atom& other : atoms_)
        if (other.kind == AtomKind::Diff && other.fvar == f)
            throw TypeError("second differential constraint for " + var(f).name);
    AtomId id = (AtomId)atoms_.size();
    a.abs = declare(VarKind::Boolean, ".a" + std::to_string(id));
    vars_[a.abs].atom = id;
    atoms_.push_back(a);
    atom_index_[h].push_back(id);
    atom_tag_of_.push_back(cur_tag_);
    return id;
}

AtomId Formula::atom_inv(GroupId g, TermId lhs, CmpOp op, TermId rhs) {
    check_mutable();
    check_arith(lhs, true);
    check_arith(rhs, true);
    // bare functional variables in an invariant must belong to the group
    struct Chk {
        const Formula* F; GroupId g;
        void walk(TermId t) {
            const Term& tm = F->term(t);
            if (tm.kind == TermKind::FunVar) {
                const auto& mem = F->group(g).members;
                if (std::find(mem.begin(), mem.end(), tm.var) == mem.end())
                    throw TypeError("invariant references non-member " + F->var(tm.var).name);
            }
            for (TermId k : tm.kids) walk(k);
        }
    } chk{this, g};
    chk.walk(lhs);
    chk.walk(rhs);
    Atom a;
    a.kind = AtomKind::Invariant;
    a.lhs = lhs; a.op = op; a.rhs = rhs; a.group = g;
    uint64_t h = atom_hash(a);
    for (AtomId id : atom_index_[h])
        if (atom_same(atoms_[id], a)) return id;
    AtomId id = (AtomId)atoms_.size();
    a.abs = declare(VarKind::Boolean, ".a" + std::to_string(id));
    vars_[a.abs].atom = id;
    atoms_.push_back(a);
    atom_index_[h].push_back(id);
    atom_tag_of_.push_back(cur_tag_);
    return id;
}

// ---- clauses ----

void Formula::set_rule(const std::string& tag) { cur_tag_ = rule_id(tag); }

uint16_t Formula::rule_id(const std::string& tag) {
    auto it = rule_ids_.find(tag);
    if (it != rule_ids_.end()) return it->second;
    uint16_t id = (uint16_t)rule_tags_.size();
    rule_tags_.push_back(tag);
    rule_ids_.emplace(tag, id);
    return id;
}

ClauseId Formula::add_clause(std::vector<Lit> lits) {
    check_mutable();
    std::sort(lits.begin(), lits.end());
    std::vector<Lit> out;
    for (size_t i = 0; i < lits.size(); i++) {
        if (lits[i].var() < 0 || lits[i].var() >= num_vars())
            throw TypeError("clause literal over undeclared variable");
        if (var(lits[i].var()).kind != VarKind::Boolean)
            throw TypeError("clause literal over non-Boolean variable");
        if (i + 1 < lits.size() && lits[i + 1].var() == lits[i].var()) {
            if (lits[i + 1] != lits[i]) return -1; // tautology
        }
        if (out.empty() || out.back() != lits[i]) out.push_back(lits[i]);
    }
    if (out.empty()) has_empty_ = true;
    Clause c;
    c.lits = std::move(out);
    c.tag = cur_tag_;
    clauses_.push_back(std::move(c));
    return (ClauseId)clauses_.size() - 1;
}

VarId Formula::fresh_aux() {
    return declare(VarKind::Boolean, ".x" + std::to_string(aux_count_++), -1, false);
}

Lit Formula::lit_of(const BRef& e) {
    switch (e->kind) {
        case BExpr::ConstK:
            throw TypeError("unexpected Boolean constant in CNF conversion");
        case BExpr::LitK:
            if (var(e->lit.var()).kind != VarKind::Boolean)
                throw TypeError("non-Boolean variable used as literal: " + var(e->lit.var()).name);
            return e->lit;
        case BExpr::AtomK:
            return mkLit(atoms_.at(e->atom).abs);
        case BExpr::NotK:
            return ~lit_of(e->kids[0]);
        case BExpr::ImpliesK:
            return lit_of(b_or({b_not(e->kids[0]), e->kids[1]}));
        case BExpr::AndK: {
            Lit x = mkLit(fresh_aux());
            std::vector<Lit> big{x};
            for (auto& k : e->kids) {
                Lit lk = lit_of(k);
                add_clause({~x, lk});
                big.push_back(~lk);
            }
            add_clause(std::move(big));
            return x;
        }
        case BExpr::OrK: {
            Lit x = mkLit(fresh_aux());
            std::vector<Lit> big{~x};
            for (auto& k : e->kids) {
                Lit lk = lit_of(k);
                add_clause({x, ~lk});
                big.push_back(lk);
            }
            add_clause(std::move(big));
            return x;
        }
        case BExpr::IffK: {
            Lit a = lit_of(e->kids[0]), b = lit_of(e->kids[1]);
            Lit x = mkLit(fresh_aux());
            add_clause({~x, ~a, b});
            add_clause({~x, a, ~b});
            add_clause({x, a, b});
            add_clause({x, ~a, ~b});
            return x;
        }
        case BExpr::IteK: {
            Lit c = lit_of(e->kids[0]), a = lit_of(e->kids[1]), b = lit_of(e->kids[2]);
            Lit x = mkLit(fresh_aux());
            add_clause({~x, ~c, a});
            add_clause({~x, c, b});
            add_clause({x, ~c, ~a});
            add_clause({x, c, ~b});
            return x;
        }
    }
    throw TypeError("unreachable");
}

void Formula::assert_top(const BRef& e, std::vector<ClauseId>& out) {
    switch (e->kind) {
        case BExpr::ConstK:
            if (!e->bval) out.push_back(add_clause({}));
            return;
        case BExpr::AndK:
            for (auto& k : e->kids) assert_top(k, out);
            return;
        case BExpr::OrK: {
            std::vector<Lit> lits;
            for (auto& k : e->kids) lits.push_back(lit_of(k));
            ClauseId c = add_clause(std::move(lits));
            if (c >= 0) out.push_back(c);
            return;
        }
        case BExpr::ImpliesK:
            assert_top(b_or({b_not(e->kids[0]), e->kids[1]}), out);
            return;
        case BExpr::IteK:
            // ite(c,a,b) asserted as (c => a) and (!c => b)
            assert_top(b_implies(e->kids[0], e->kids[1]), out);
            assert_top(b_implies(b_not(e->kids[0]), e->kids[2]), out);
            return;
        case BExpr::IffK: {
            Lit a = lit_of(e->kids[0]), b = lit_of(e->kids[1]);
            ClauseId c1 = add_clause({~a, b});
            ClauseId c2 = add_clause({a, ~b});
            if (c1 >= 0) out.push_back(c1);
            if (c2 >= 0) out.push_back(c2);
            return;
        }
        case BExpr::NotK: {
            const BRef& k = e->kids[0];
            if (k->kind == BExpr::LitK || k->kind == BExpr::AtomK || k->kind == BExpr::NotK) {
                ClauseId c = add_clause({~lit_of(k)});
                if (c >= 0) out.push_back(c);
                return;
            }
            if (k->kind == BExpr::AndK) { // !(a & b) == (!a | !b)
                std::vector<BRef> ks;
                for (auto& kk : k->kids) ks.push_back(b_not(kk));
                assert_top(b_or(std::move(ks)), out);
                return;
            }
            if (k->kind == BExpr::OrK) {
                for (auto& kk : k->kids) assert_top(b_not(kk), out);
                return;
            }
            ClauseId c = add_clause({~lit_of(k)});
            if (c >= 0) out.push_back(c);
            return;
        }
        default: {
            ClauseId c = add_clause({lit_of(e)});
            if (c >= 0) out.push_back(c);
            return;
        }
    }
}

std::vector<ClauseId> Formula::assert_expr(const BRef& e) {
    check_mutable();
    std::vector<ClauseId> out;
    assert_top(e, out);
    return out;
}

void Formula::freeze() { frozen_ = true; }

FormulaStats Formula::stats() const {
    FormulaStats s;
    for (const Variable& v : vars_) {
        if (v.kind == VarKind::Real) s.n_real++;
        else if (v.kind == VarKind::Functional) s.n_fun++;
        else if (!v.decidable && v.atom < 0) s.n_aux++;
        else s.n_bool++;
        if (v.step >= 0) s.vars_by_step[v.step]++;
    }
    s.n_atoms = (int64_t)atoms_.size();
    for (const Atom& a : atoms_) {
        if (a.kind == AtomKind::Comparison) s.n_cmp++;
        else if (a.kind == AtomKind::Diff) s.n_diff++;
        else s.n_inv++;
    }
    s.n_clauses = (int64_t)clauses_.size();
    for (const Clause& c : clauses_) {
        s.n_literals += (int64_t)c.lits.size();
        if (c.tag) {
            auto& r = s.by_rule[rule_tags_[c.tag]];
            r.clauses++;
            r.literals += (int64_t)c.lits.size();
        }
    }
    for (size_t i = 0; i < atom_tag_of_.size() && i < atoms_.size(); i++)
        if (atom_tag_of_[i]) s.by_rule[rule_tags_[atom_tag_of_[i]]].atoms++;
    return s;
}

bool Formula::struct_equal(const Formula& A, const Formula& B) {
    if (A.vars_.size() != B.vars_.size()) return false;
    for (size_t i = 0; i < A.vars_.size(); i++) {
        const Variable &a = A.vars_[i], &b = B.vars_[i];
        if (a.kind != b.kind || a.name != b.name || a.step != b.step ||
            a.decidable != b.decidable || a.atom != b.atom)
            return false;
    }
    if (A.groups_.size() != B.groups_.size()) return false;
    for (size_t i = 0; i < A.groups_.size(); i++) {
        const IntegrationGroup &a = A.groups_[i], &b = B.groups_[i];
        if (a.rho != b.rho || a.sync != b.sync || a.tau != b.tau || a.members != b.members)
            return false;
    }
    struct TEq {
        const Formula *A, *B;
        bool eq(TermId x, TermId y) const {
            const Term &a = A->term(x), &b = B->term(y);
            if (a.kind != b.kind || a.var != b.var || a.kids.size() != b.kids.size()) return false;
            uint64_t ab, bb;
            std::memcpy(&ab, &a.cval, 8);
            std::memcpy(&bb, &b.cval, 8);
            if (ab != bb) return false;
            for (size_t i = 0; i < a.kids.size(); i++)
                if (!eq(a.kids[i], b.kids[i])) return false;
            return true;
        }
    } teq{&A, &B};
    if (A.atoms_.size() != B.atoms_.size()) return false;
    for (size_t i = 0; i < A.atoms_.size(); i++) {
        const Atom &a = A.atoms_[i], &b = B.atoms_[i];
        if (a.kind != b.kind || a.op != b.op || a.fvar != b.fvar || a.group != b.group ||
            a.abs != b.abs)
            return false;
        if ((a.lhs >= 0) != (b.lhs >= 0) || (a.rhs >= 0) != (b.rhs >= 0)) return false;
        if (a.lhs >= 0 && !teq.eq(a.lhs, b.lhs)) return false;
        if (a.rhs >= 0 && !teq.eq(a.rhs, b.rhs)) return false;
    }
    if (A.clauses_.size() != B.clauses_.size()) return false;
    for (size_t i = 0; i < A.clauses_.size(); i++) {
        if (A.clauses_[i].lits != B.clauses_[i].lits) return false;
        if (A.rule_tags_[A.clauses_[i].tag] != B.rule_tags_[B.clauses_[i].tag]) return false;
    }
    return true;
}

} // namespace sode
