#include "sode/theory.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace sode {

namespace {

// Collects the value-store slots a term reads. Pointwise functional
// occurrences map to slot B when allowed (invariants, flow right-hand
// sides inside their own group), otherwise they are rejected upstream.
void term_slots(const Formula& f, TermId tid, std::vector<int>& out, bool bare_as_b) {
    const Term& t = f.term(tid);
    switch (t.kind) {
        case TermKind::Const: return;
        case TermKind::RealVar: out.push_back(slot_a(t.var)); return;
        case TermKind::Init:    out.push_back(slot_a(t.var)); return;
        case TermKind::Final:   out.push_back(slot_b(t.var)); return;
        case TermKind::FunVar:
            if (bare_as_b) out.push_back(slot_b(t.var));
            return;
        default:
            for (TermId k : t.kids) term_slots(f, k, out, bare_as_b);
            return;
    }
}

void sort_unique(std::vector<int>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

// Isolated-target side of an equality: a real variable or init(f) whose
// slot does not occur on the opposite side.
bool eq_target(const Formula& f, TermId side, TermId other, int& target,
               std::vector<int>& sources) {
    const Term& t = f.term(side);
    int s;
    if (t.kind == TermKind::RealVar || t.kind == TermKind::Init) s = slot_a(t.var);
    else return false;
    sources.clear();
    term_slots(f, other, sources, false);
    sort_unique(sources);
    if (std::binary_search(sources.begin(), sources.end(), s)) return false;
    target = s;
    return true;
}

} // namespace

struct StoreEnv : TermEnv {
    const OdeTheory& th;
    explicit StoreEnv(const OdeTheory& t) : th(t) {}
    double get(int s) const {
        if (!th.has_[s]) throw EvalError("slot without value");
        return th.val_[s];
    }
    double real_value(VarId v) const override { return get(slot_a(v)); }
    double init_value(VarId f) const override { return get(slot_a(f)); }
    double final_value(VarId f) const override { return get(slot_b(f)); }
};

OdeTheory::OdeTheory(const Formula& f) : f_(f) {
    const int nv = f.num_vars();
    const int ns = 2 * nv;
    val_.assign(ns, 0);
    has_.assign(ns, 0);
    just_.assign(ns, Just{});
    cmp_watch_.resize(ns);
    rule_watch_.resize(ns);
    grp_watch_.resize(ns);
    atom_val_.assign(f.num_atoms(), -1);
    info_.resize(f.num_atoms());

    std::unordered_map<VarId, GroupId> member_group;
    std::unordered_map<VarId, AtomId>  diff_of;
    grp_.resize(f.groups().size());
    for (const IntegrationGroup& g : f.groups())
        for (VarId m : g.members) member_group[m] = g.id;

    for (AtomId a = 0; a < f.num_atoms(); a++) {
        const Atom& at = f.atom(a);
        AtomInfo&   in = info_[a];
        if (at.kind == AtomKind::Comparison) {
            term_slots(f, at.lhs, in.eval_inputs, false);
            term_slots(f, at.rhs, in.eval_inputs, false);
            sort_unique(in.eval_inputs);
            in.missing = (int)in.eval_inputs.size();
            for (int s : in.eval_inputs) cmp_watch_[s].push_back(a);
            if (at.op == CmpOp::Eq) {
                EqDir d;
                if (eq_target(f, at.lhs, at.rhs, d.target, d.sources)) {
                    d.src_term = at.rhs;
                    in.dirL = d;
                }
                if (eq_target(f, at.rhs, at.lhs, d.target, d.sources)) {
                    d.src_term = at.lhs;
                    in.dirR = d;
                }
                std::vector<int> watch;
                if (in.dirL) watch.insert(watch.end(), in.dirL->sources.begin(), in.dirL->sources.end());
                if (in.dirR) watch.insert(watch.end(), in.dirR->sources.begin(), in.dirR->sources.end());
                sort_unique(watch);
                for (int s : watch) rule_watch_[s].push_back(a);
            }
        } else if (at.kind == AtomKind::Diff) {
            auto it = member_group.find(at.fvar);
            if (it != member_group.end()) {
                in.group = it->second;
                diff_of[at.fvar] = a;
            }
        } else {
            in.group = at.group;
        }
    }

    for (const IntegrationGroup& g : f.groups()) {
        GroupState& G = grp_[g.id];
        // trajectory slots of own members are produced, not consumed
        auto own_traj = [&](int s) {
            if (!slot_is_b(s)) return false;
            auto it = member_group.find(slot_var(s));
            return it != member_group.end() && it->second == g.id;
        };
        for (VarId m : g.members) {
            auto it = diff_of.find(m);
            if (it == diff_of.end()) { G.complete = false; continue; }
            G.diff_atoms.push_back(it->second);
            G.required.push_back(slot_a(m));
            std::vector<int> rs;
            term_slots(f, f_.atom(it->second).rhs, rs, true);
            for (int s : rs)
                if (!own_traj(s)) G.required.push_back(s);
        }
        for (AtomId a = 0; a < f.num_atoms(); a++) {
            const Atom& at = f.atom(a);
            if (at.kind != AtomKind::Invariant || at.group != g.id) continue;
            G.inv_atoms.push_back(a);
            std::vector<int> rs;
            term_slots(f, at.lhs, rs, true);
            term_slots(f, at.rhs, rs, true);
            for (int s : rs)
                if (!own_traj(s)) G.required.push_back(s);
        }
        sort_unique(G.required);
        G.unassigned = (int)(G.diff_atoms.size() + G.inv_atoms.size());
        for (int s : G.required) grp_watch_[s].push_back(g.id);
    }
}

bool OdeTheory::eval_atom(AtomId a, bool& truth) const {
    const Atom& at = f_.atom(a);
    StoreEnv env(*this);
    double l = eval_term(f_, at.lhs, env);
    double r = eval_term(f_, at.rhs, env);
    switch (at.op) {
        case CmpOp::Lt: truth = l < r; break;
        case CmpOp::Le: truth = l <= r; break;
        case CmpOp::Gt: truth = l > r; break;
        case CmpOp::Ge: truth = l >= r; break;
        case CmpOp::Eq: truth = l == r; break;
    }
    return true;
}

void OdeTheory::conflict_from(std::vector<Lit> true_lits) {
    conflict_out_.clear();
    for (Lit l : true_lits) conflict_out_.push_back(~l);
    std::sort(conflict_out_.begin(), conflict_out_.end());
    conflict_out_.erase(std::unique(conflict_out_.begin(), conflict_out_.end()),
                        conflict_out_.end());
    if (trace_) *trace_ << "T conflict size=" << conflict_out_.size()
                        << " @" << level_marks_.size() << "\n";
}

void OdeTheory::ancestors_of_slot(int s, std::vector<Lit>& out,
                                  std::vector<char>& seen_slot) const {
    if (seen_slot[s]) return;
    seen_slot[s] = 1;
    const Just& j = just_[s];
    if (j.kind == Just::EqL || j.kind == Just::EqR) {
        out.push_back(trail_lit(j.atom));
        const EqDir& d = j.kind == Just::EqL ? *info_[j.atom].dirL : *info_[j.atom].dirR;
        for (int src : d.sources) ancestors_of_slot(src, out, seen_slot);
    } else if (j.kind == Just::Group) {
        group_ancestors(j.group, out, seen_slot);
    }
}

void OdeTheory::group_ancestors(GroupId g, std::vector<Lit>& out,
                                std::vector<char>& seen_slot) const {
    const GroupState& G = grp_[g];
    for (AtomId a : G.diff_atoms) out.push_back(trail_lit(a));
    for (AtomId a : G.inv_atoms) out.push_back(trail_lit(a));
    for (int s : G.required) ancestors_of_slot(s, out, seen_slot);
}

void OdeTheory::ancestors_of_atom_inputs(AtomId a, std::vector<Lit>& out) const {
    std::vector<char> seen(has_.size(), 0);
    for (int s : info_[a].eval_inputs) ancestors_of_slot(s, out, seen);
}

bool OdeTheory::set_slot(int s, double v, Just j) {
    if (has_[s]) {
        if (val_[s] == v) return true;
        std::vector<Lit> tl;
        std::vector<char> seen(has_.size(), 0);
        ancestors_of_slot(s, tl, seen);
        // the incompatible second derivation
        std::vector<char> seen2(has_.size(), 0);
        if (j.kind == Just::EqL || j.kind == Just::EqR) {
            tl.push_back(trail_lit(j.atom));
            const EqDir& d = j.kind == Just::EqL ? *info_[j.atom].dirL : *info_[j.atom].dirR;
            for (int src : d.sources) ancestors_of_slot(src, tl, seen2);
        } else if (j.kind == Just::Group) {
            group_ancestors(j.group, tl, seen2);
        }
        conflict_from(std::move(tl));
        return false;
    }
    val_[s] = v;
    has_[s] = 1;
    just_[s] = j;
    for (AtomId a : cmp_watch_[s]) info_[a].missing--;
    undo_.push_back({Undo::SetSlot, s});
    work_.push_back(s);
    if (trace_) *trace_ << "T value " << f_.var(slot_var(s)).name
                        << (slot_is_b(s) ? ".final" : "") << " = " << v
                        << " @" << level_marks_.size() << "\n";
    return true;
}

bool OdeTheory::try_fire_eq(AtomId a) {
    if (atom_val_[a] != 1) return true;
    const AtomInfo& in = info_[a];
    for (int dir = 0; dir < 2; dir++) {
        const std::optional<EqDir>& od = dir == 0 ? in.dirL : in.dirR;
        if (!od || has_[od->target]) continue;
        bool ready = true;
        for (int s : od->sources)
            if (!has_[s]) { ready = false; break; }
        if (!ready) continue;
        StoreEnv env(*this);
        double v = eval_term(f_, od->src_term, env);
        if (trace_) *trace_ << "T fire-eq atom" << a << " @" << level_marks_.size() << "\n";
        if (!set_slot(od->target, v, Just{dir == 0 ? Just::EqL : Just::EqR, a, -1}))
            return false;
    }
    return true;
}

bool OdeTheory::try_fire_group(GroupId g) {
    GroupState& G = grp_[g];
    if (!G.complete || G.disabled || G.fired || G.unassigned > 0) return true;
    for (AtomId a : G.diff_atoms)
        if (atom_val_[a] != 1) return true;
    for (int s : G.required)
        if (!has_[s]) return true;

    const IntegrationGroup& grp = f_.group(g);
    StoreEnv env(*this);
    OdeSystem sys;
    sys.formula = &f_;
    sys.rho = grp.rho;
    sys.env = &env;
    for (size_t i = 0; i < grp.members.size(); i++) {
        sys.eqs.push_back({grp.members[i], f_.atom(G.diff_atoms[i]).rhs});
        sys.init.push_back(val_[slot_a(grp.members[i])]);
    }
    for (AtomId a : G.inv_atoms) {
        if (atom_val_[a] != 1) continue; // refuted invariants do not constrain the flow
        const Atom& at = f_.atom(a);
        sys.invariants.push_back({a, at.lhs, at.op, at.rhs});
    }
    integrations_++;
    try {
        G.result = integrate(sys);
    } catch (const ZeroLengthIntegration&) {
        std::vector<Lit> tl;
        std::vector<char> seen(has_.size(), 0);
        group_ancestors(g, tl, seen);
        conflict_from(std::move(tl));
        return false;
    }
    G.fired = true;
    undo_.push_back({Undo::Fire, g});
    if (trace_) *trace_ << "T fire-group g" << g << " tau=" << G.result.tau
                        << " @" << level_marks_.size() << "\n";
    for (size_t i = 0; i < grp.members.size(); i++)
        if (!set_slot(slot_b(grp.members[i]), G.result.traj[i].final_value(),
                      Just{Just::Group, -1, g}))
            return false;
    if (grp.tau != var_Undef)
        if (!set_slot(slot_a(grp.tau), G.result.tau, Just{Just::Group, -1, g}))
            return false;
    return true;
}

bool OdeTheory::handle_cmp_assign(AtomId a, bool pol) {
    if (info_[a].missing == 0) {
        bool truth;
        eval_atom(a, truth);
        if (truth != pol) {
            std::vector<Lit> tl{trail_lit(a)};
            ancestors_of_atom_inputs(a, tl);
            conflict_from(std::move(tl));
            return false;
        }
        return true;
    }
    return try_fire_eq(a);
}

bool OdeTheory::drain() {
    while (!work_.empty()) {
        int s = work_.front();
        work_.pop_front();
        if (!has_[s]) continue; // stale entry left behind by a backjump
        for (AtomId a : cmp_watch_[s]) {
            if (info_[a].missing != 0) continue;
            bool truth;
            eval_atom(a, truth);
            if (atom_val_[a] < 0) {
                Lit p = mkLit(f_.atom(a).abs, !truth);
                props_out_.push_back(p);
                if (trace_) *trace_ << "T propagate atom" << a << " -> " << (truth ? "true" : "false")
                                    << " @" << level_marks_.size() << "\n";
            } else if ((atom_val_[a] == 1) != truth) {
                std::vector<Lit> tl{trail_lit(a)};
                ancestors_of_atom_inputs(a, tl);
                conflict_from(std::move(tl));
                return false;
            }
        }
        for (AtomId a : rule_watch_[s])
            if (!try_fire_eq(a)) return false;
        for (GroupId g : grp_watch_[s])
            if (!try_fire_group(g)) return false;
    }
    return true;
}

OdeTheory::Result OdeTheory::on_assign(Lit l) {
    Result r;
    props_out_.clear();
    conflict_out_.clear();
    if (!init_flushed_) {
        init_flushed_ = true;
        for (AtomId a = 0; a < f_.num_atoms(); a++) {
            if (f_.atom(a).kind != AtomKind::Comparison || info_[a].missing != 0 ||
                !info_[a].eval_inputs.empty())
                continue;
            bool truth;
            eval_atom(a, truth);
            if (atom_val_[a] < 0) props_out_.push_back(mkLit(f_.atom(a).abs, !truth));
        }
    }
    bool ok = true;
    AtomId a = f_.atom_of(l.var());
    if (a >= 0 && atom_val_[a] < 0) {
        bool pol = !l.neg();
        atom_val_[a] = pol ? 1 : 0;
        undo_.push_back({Undo::SetAtomVal, a});
        const Atom& at = f_.atom(a);
        if (at.kind == AtomKind::Comparison) {
            ok = handle_cmp_assign(a, pol);
        } else if (info_[a].group >= 0) {
            GroupId g = info_[a].group;
            grp_[g].unassigned--;
            if (at.kind == AtomKind::Diff && !pol && !grp_[g].disabled) {
                grp_[g].disabled = true;
                undo_.push_back({Undo::Disable, g});
            }
            ok = try_fire_group(g);
        }
        if (ok) ok = drain();
    }
    if (!ok) {
        work_.clear();
        r.ok = false;
        r.conflict = std::move(conflict_out_);
        return r;
    }
    r.propagations = std::move(props_out_);
    return r;
}

std::vector<Lit> OdeTheory::explain(Lit l) {
    AtomId a = f_.atom_of(l.var());
    std::vector<Lit> tl;
    ancestors_of_atom_inputs(a, tl);
    std::vector<Lit> clause{l};
    for (Lit anc : tl)
        if (~anc != l) clause.push_back(~anc);
    std::sort(clause.begin() + 1, clause.end());
    clause.erase(std::unique(clause.begin() + 1, clause.end()), clause.end());
    return clause;
}

void OdeTheory::push_level() { level_marks_.push_back(undo_.size()); }

void OdeTheory::pop_to(int level) {
    if ((int)level_marks_.size() <= level) return;
    size_t mark = level_marks_[level];
    while (undo_.size() > mark) {
        Undo u = undo_.back();
        undo_.pop_back();
        switch (u.op) {
            case Undo::SetSlot:
                has_[u.idx] = 0;
                just_[u.idx] = Just{};
                for (AtomId a : cmp_watch_[u.idx]) info_[a].missing++;
                break;
            case Undo::SetAtomVal: {
                atom_val_[u.idx] = -1;
                GroupId g = info_[u.idx].group;
                if (g >= 0) grp_[g].unassigned++;
                break;
            }
            case Undo::Fire:
                grp_[u.idx].fired = false;
                break;
            case Undo::Disable:
                grp_[u.idx].disabled = false;
                break;
        }
    }
    level_marks_.resize(level);
    work_.clear();
    init_flushed_ = false;
}

DependencyGraph build_dependency_graph(const Formula& f) {
    DependencyGraph g;
    g.n = f.num_atoms();
    g.out.resize(g.n);
    g.in_degree.assign(g.n, 0);
    g.is_rule.assign(g.n, 0);
    g.initial.assign(g.n, 0);

    std::unordered_map<VarId, GroupId> member_group;
    for (const IntegrationGroup& ig : f.groups())
        for (VarId m : ig.members) member_group[m] = ig.id;

    // reads[s] = atoms whose terms mention slot s
    std::vector<std::vector<int>> reads(2 * f.num_vars());
    std::vector<std::vector<int>> assigns(g.n);
    for (AtomId a = 0; a < g.n; a++) {
        const Atom& at = f.atom(a);
        std::vector<int> rs;
        if (at.kind == AtomKind::Diff) {
            term_slots(f, at.rhs, rs, true);
            rs.push_back(slot_a(at.fvar));
            g.is_rule[a] = 1;
            auto it = member_group.find(at.fvar);
            if (it != member_group.end()) {
                const IntegrationGroup& ig = f.group(it->second);
                for (VarId m : ig.members) assigns[a].push_back(slot_b(m));
                if (ig.tau != var_Undef) assigns[a].push_back(slot_a(ig.tau));
            }
        } else {
            term_slots(f, at.lhs, rs, true);
            term_slots(f, at.rhs, rs, true);
            if (at.kind == AtomKind::Comparison && at.op == CmpOp::Eq) {
                int target;
                std::vector<int> srcs;
                if (eq_target(f, at.lhs, at.rhs, target, srcs)) {
                    g.is_rule[a] = 1;
                    assigns[a].push_back(target);
                }
                if (eq_target(f, at.rhs, at.lhs, target, srcs)) {
                    g.is_rule[a] = 1;
                    assigns[a].push_back(target);
                }
            }
        }
        sort_unique(rs);
        for (int s : rs) reads[s].push_back(a);
    }
    for (AtomId a = 0; a < g.n; a++) {
        sort_unique(assigns[a]);
        std::vector<int> dst;
        for (int s : assigns[a])
            for (int b : reads[s])
                if (b != a) dst.push_back(b);
        sort_unique(dst);
        g.out[a] = dst;
        for (int b : dst) g.in_degree[b]++;
    }
    for (AtomId a = 0; a < g.n; a++) g.initial[a] = g.in_degree[a] == 0;
    return g;
}

} // namespace sode
