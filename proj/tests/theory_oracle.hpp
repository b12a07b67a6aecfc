#pragma once

// Shared fixtures for exercising theory propagation against an independent
// fixpoint re-evaluation. Used by the theory unit tests and the acceptance run.

#include "sode/theory.hpp"

#include <map>
#include <random>
#include <vector>

namespace sode_test {

using namespace sode;

// Feeds literals like the solver trail would, echoing propagations back.
struct Driver {
    const Formula& f;
    OdeTheory      th;
    std::map<AtomId, int>            assigned;   // atom -> polarity
    std::vector<std::pair<AtomId, bool>> propagated;
    bool             conflict = false;
    std::vector<Lit> conflict_clause;

    explicit Driver(const Formula& ff) : f(ff), th(ff) {}

    bool assert_atom(AtomId a, bool pol) {
        if (conflict || assigned.count(a)) return !conflict;
        return feed(mkLit(f.abs_var(a), !pol));
    }

    bool feed(Lit l) {
        AtomId a = f.atom_of(l.var());
        if (a >= 0) {
            auto it = assigned.find(a);
            if (it != assigned.end()) {
                if (it->second != (l.neg() ? 0 : 1)) { conflict = true; }
                return !conflict;
            }
            assigned[a] = l.neg() ? 0 : 1;
        }
        auto r = th.on_assign(l);
        if (!r.ok) {
            conflict = true;
            conflict_clause = r.conflict;
            return false;
        }
        for (Lit q : r.propagations) {
            AtomId b = f.atom_of(q.var());
            if (b >= 0 && !assigned.count(b)) propagated.push_back({b, !q.neg()});
            if (!feed(q)) return false;
        }
        return true;
    }
};

inline bool exact_cmp(CmpOp op, double l, double r) {
    switch (op) {
        case CmpOp::Lt: return l < r;
        case CmpOp::Le: return l <= r;
        case CmpOp::Gt: return l > r;
        case CmpOp::Ge: return l >= r;
        case CmpOp::Eq: return l == r;
    }
    return false;
}

struct RandomInstance {
    Formula f;
    std::vector<AtomId> atoms;
    bool    with_group = false;
    GroupId g = -1;
    VarId   v = var_Undef, tauv = var_Undef;
    AtomId  diff_atom = -1;
    std::vector<AtomId> inv_atoms;
};

inline RandomInstance make_random(std::mt19937& rng) {
    RandomInstance ri;
    Formula& f = ri.f;
    int nr = 3 + (int)(rng() % 3);
    std::vector<VarId> R;
    for (int i = 0; i < nr; i++)
        R.push_back(f.declare(VarKind::Real, "r" + std::to_string(i)));
    ri.with_group = rng() % 2;
    std::vector<TermId> pool;
    for (VarId r : R) pool.push_back(f.t_var(r));
    if (ri.with_group) {
        ri.tauv = f.declare(VarKind::Real, "tau");
        ri.v = f.declare(VarKind::Functional, "v", 0);
        ri.g = f.make_group(10.0, true, ri.tauv);
        f.add_group_member(ri.g, ri.v);
        ri.diff_atom = f.atom_diff(ri.v, f.t_const(1 + (double)(rng() % 3)));
        ri.atoms.push_back(ri.diff_atom);
        int ninv = 1 + (int)(rng() % 2);
        for (int i = 0; i < ninv; i++) {
            AtomId a = f.atom_inv(ri.g, f.t_fun(ri.v), CmpOp::Le,
                                  f.t_const(4 + (double)(rng() % 10)));
            if (a >= 0 && (ri.inv_atoms.empty() || a != ri.inv_atoms.back())) {
                ri.inv_atoms.push_back(a);
                ri.atoms.push_back(a);
            }
        }
        AtomId ai = f.atom_cmp(f.t_init(ri.v), CmpOp::Eq, f.t_const((double)(rng() % 4)));
        ri.atoms.push_back(ai);
        pool.push_back(f.t_var(ri.tauv));
        pool.push_back(f.t_init(ri.v));
        pool.push_back(f.t_final(ri.v));
    }
    auto term = [&](auto&& self, int depth) -> TermId {
        if (depth == 0 || rng() % 3 == 0) {
            if (rng() % 2) return f.t_const((double)(rng() % 7));
            return pool[rng() % pool.size()];
        }
        TermId a = self(self, depth - 1), b = self(self, depth - 1);
        switch (rng() % 5) {
            case 0: return f.t_add(a, b);
            case 1: return f.t_sub(a, b);
            case 2: return f.t_mul(a, b);
            case 3: return f.t_min({a, b});
            default: return f.t_max({a, b});
        }
    };
    // equality rules over earlier variables, mostly acyclic
    for (int i = 0; i < nr; i++) {
        if (rng() % 4 == 0) continue;
        std::vector<TermId> sub;
        sub.push_back(f.t_const((double)(rng() % 7)));
        for (int j = 0; j < i; j++) sub.push_back(f.t_var(R[j]));
        if (ri.with_group && rng() % 2) sub.push_back(f.t_var(ri.tauv));
        TermId rhs = rng() % 2 ? sub[rng() % sub.size()]
                               : f.t_add(sub[rng() % sub.size()], sub[rng() % sub.size()]);
        AtomId a = f.atom_cmp(f.t_var(R[i]), CmpOp::Eq, rhs);
        ri.atoms.push_back(a);
    }
    int ncmp = 3 + (int)(rng() % 4);
    for (int i = 0; i < ncmp; i++) {
        CmpOp ops[] = {CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Eq};
        AtomId a = f.atom_cmp(term(term, 2), ops[rng() % 5], term(term, 2));
        ri.atoms.push_back(a);
    }
    std::sort(ri.atoms.begin(), ri.atoms.end());
    ri.atoms.erase(std::unique(ri.atoms.begin(), ri.atoms.end()), ri.atoms.end());
    f.freeze();
    return ri;
}

// Independent fixpoint: keep applying every applicable rule until stable.
struct OracleStore {
    MapEnv env;
    bool   group_fired = false;
    bool   zero_length = false;
};

inline OracleStore oracle_fixpoint(const RandomInstance& ri,
                                   const std::map<AtomId, int>& assigned) {
    const Formula& f = ri.f;
    OracleStore st;
    auto try_eval = [&](TermId t, double& out) {
        try { out = eval_term(f, t, st.env); return true; }
        catch (const EvalError&) { return false; }
    };
    bool changed = true;
    while (changed && !st.zero_length) {
        changed = false;
        for (auto& [a, pol] : assigned) {
            const Atom& at = f.atom(a);
            if (pol != 1 || at.kind != AtomKind::Comparison || at.op != CmpOp::Eq) continue;
            for (int dir = 0; dir < 2; dir++) {
                TermId side = dir == 0 ? at.lhs : at.rhs;
                TermId other = dir == 0 ? at.rhs : at.lhs;
                const Term& t = f.term(side);
                double val;
                if (t.kind == TermKind::RealVar && !st.env.reals.count(t.var)) {
                    if (try_eval(other, val)) { st.env.reals[t.var] = val; changed = true; }
                } else if (t.kind == TermKind::Init && !st.env.inits.count(t.var)) {
                    if (try_eval(other, val)) { st.env.inits[t.var] = val; changed = true; }
                }
            }
        }
        if (ri.with_group && !st.group_fired) {
            bool ready = assigned.count(ri.diff_atom) &&
                         assigned.at(ri.diff_atom) == 1 &&
                         st.env.inits.count(ri.v);
            for (AtomId a : ri.inv_atoms)
                if (!assigned.count(a)) ready = false;
            if (ready) {
                OdeSystem sys;
                sys.formula = &f;
                sys.rho = f.group(ri.g).rho;
                sys.env = &st.env;
                sys.eqs.push_back({ri.v, f.atom(ri.diff_atom).rhs});
                sys.init.push_back(st.env.inits.at(ri.v));
                for (AtomId a : ri.inv_atoms)
                    if (assigned.at(a) == 1) {
                        const Atom& at = f.atom(a);
                        sys.invariants.push_back({a, at.lhs, at.op, at.rhs});
                    }
                try {
                    IntegrationResult r = integrate(sys);
                    st.env.finals[ri.v] = r.traj[0].final_value();
                    if (!st.env.reals.count(ri.tauv)) st.env.reals[ri.tauv] = r.tau;
                    st.group_fired = true;
                    changed = true;
                } catch (const ZeroLengthIntegration&) {
                    st.zero_length = true;
                }
            }
        }
    }
    return st;
}

} // namespace sode_test
