#include "sode/sat.hpp"

#include <algorithm>
#include <sstream>

namespace sode {

Solver::Solver(const Formula& f) : f_(f) {
    int n = f.num_vars();
    assigns_.assign(n, LBool::Undef);
    levels_.assign(n, 0);
    reasons_.assign(n, kReasonNone);
    phase_.assign(n, false);
    activity_.assign(n, 0.0);
    watches_.assign(2 * (size_t)n, {});
    heap_pos_.assign(n, -1);
    if (f.has_empty_clause()) unsat_root_ = true;
    for (int i = 0; i < f.num_clauses() && !unsat_root_; i++) {
        const Clause& c = f.clause(i);
        if (c.lits.empty()) { unsat_root_ = true; break; }
        attach(c.lits, false);
    }
}

uint64_t Solver::clause_hash(const std::vector<Lit>& lits) {
    uint64_t h = 0x9e3779b97f4a7c15ull;
    for (Lit l : lits) {
        h ^= (uint64_t)(uint32_t)l.x + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return h;
}

int Solver::attach(std::vector<Lit> lits, bool learned) {
    if (lits.size() == 1) {
        // unit at the root
        if (!learned) units_.push_back(lits[0]);
        if (!enqueue(lits[0], kReasonNone) && value(lits[0]) == LBool::False)
            unsat_root_ = true;
        return -1;
    }
    int id = (int)clauses_.size();
    clauses_.push_back({std::move(lits), learned});
    const auto& ls = clauses_[id].lits;
    watches_[(~ls[0]).x].push_back(id);
    watches_[(~ls[1]).x].push_back(id);
    return id;
}

bool Solver::add_learned(std::vector<Lit> lits) {
    std::sort(lits.begin(), lits.end());
    lits.erase(std::unique(lits.begin(), lits.end()), lits.end());
    uint64_t h = clause_hash(lits);
    if (!clause_hashes_.insert(h).second) return false;
    if (lits.empty()) { unsat_root_ = true; return true; }
    attach(std::move(lits), true);
    stats_.learned++;
    return true;
}

bool Solver::enqueue(Lit l, int reason) {
    LBool cur = value(l);
    if (cur != LBool::Undef) return cur == LBool::True;
    VarId v = l.var();
    assigns_[v] = lbool_of(!l.neg());
    levels_[v] = decision_level();
    reasons_[v] = reason;
    phase_[v] = !l.neg();
    trail_.push_back(l);
    return true;
}

bool Solver::propagate() {
    for (;;) {
        // Boolean unit propagation
        while (qhead_ < trail_.size()) {
            Lit p = trail_[qhead_++];
            stats_.propagations++;
            std::vector<int>& ws = watches_[p.x];
            size_t keep = 0;
            for (size_t i = 0; i < ws.size(); i++) {
                int ci = ws[i];
                SClause& c = clauses_[ci];
                Lit false_lit = ~p;
                if (c.lits[0] == false_lit) std::swap(c.lits[0], c.lits[1]);
                if (value(c.lits[0]) == LBool::True) { ws[keep++] = ci; continue; }
                bool moved = false;
                for (size_t k = 2; k < c.lits.size(); k++) {
                    if (value(c.lits[k]) != LBool::False) {
                        std::swap(c.lits[1], c.lits[k]);
                        watches_[(~c.lits[1]).x].push_back(ci);
                        moved = true;
                        break;
                    }
                }
                if (moved) continue;
                // unit or conflicting
                ws[keep++] = ci;
                if (value(c.lits[0]) == LBool::False) {
                    for (size_t k = i + 1; k < ws.size(); k++) ws[keep++] = ws[k];
                    ws.resize(keep);
                    conflict_ = c.lits;
                    return false;
                }
                enqueue(c.lits[0], ci);
            }
            ws.resize(keep);
        }
        // theory notifications, one literal at a time
        if (!theory_ || thead_ >= trail_.size()) return true;
        Lit p = trail_[thead_++];
        TheoryIface::Result r = theory_->on_assign(p);
        if (!r.ok) {
            conflict_ = std::move(r.conflict);
            return false;
        }
        for (Lit q : r.propagations) {
            LBool val = value(q);
            if (val == LBool::True) continue;
            if (val == LBool::False) {
                conflict_ = theory_->explain(q);
                return false;
            }
            stats_.theory_propagations++;
            enqueue(q, kReasonTheory);
        }
    }
}

std::vector<Lit> Solver::reason_lits(Lit p) {
    int r = reasons_[p.var()];
    if (r == kReasonTheory) return theory_->explain(p);
    if (r >= 0) return clauses_[r].lits;
    throw SodeError("literal without reason in conflict analysis");
}

void Solver::analyze(std::vector<Lit> confl, std::vector<Lit>& learnt, int& bt_level) {
    learnt.clear();
    learnt.push_back(lit_Undef); // slot for the asserting literal
    if (seen_.size() != assigns_.size()) seen_.assign(assigns_.size(), 0);
    auto& seen = seen_;
    seen_touched_.clear();
    int counter = 0;
    Lit p = lit_Undef;
    size_t idx = trail_.size();
    std::vector<Lit> reason = std::move(confl);
    for (;;) {
        for (Lit q : reason) {
            if (p != lit_Undef && q == p) continue;
            VarId v = q.var();
            if (seen[v] || levels_[v] == 0) continue;
            seen[v] = 1;
            seen_touched_.push_back(v);
            bump(v);
            if (levels_[v] >= decision_level()) counter++;
            else learnt.push_back(q);
        }
        do {
            p = trail_[--idx];
        } while (!seen[p.var()]);
        seen[p.var()] = 0;
        counter--;
        if (counter == 0) break;
        reason = reason_lits(p);
    }
    for (VarId v : seen_touched_) seen[v] = 0;
    learnt[0] = ~p;
    bt_level = 0;
    int max_i = 1;
    for (size_t i = 1; i < learnt.size(); i++) {
        if (levels_[learnt[i].var()] > bt_level) {
            bt_level = levels_[learnt[i].var()];
            max_i = (int)i;
        }
    }
    if (learnt.size() > 1) std::swap(learnt[1], learnt[max_i]);
}

void Solver::cancel_until(int level) {
    if (decision_level() <= level) return;
    int lim = trail_lim_[level];
    for (int i = (int)trail_.size() - 1; i >= lim; i--) {
        VarId v = trail_[i].var();
        assigns_[v] = LBool::Undef;
        reasons_[v] = kReasonNone;
        if (heap_pos_[v] < 0) heap_insert(v);
    }
    trail_.resize(lim);
    trail_lim_.resize(level);
    qhead_ = trail_.size();
    thead_ = std::min(thead_, trail_.size());
    if (theory_) theory_->pop_to(level);
}

void Solver::bump(VarId v) {
    activity_[v] += act_inc_;
    if (activity_[v] > 1e100) {
        for (double& a : activity_) a *= 1e-100;
        act_inc_ *= 1e-100;
    }
    if (heap_pos_[v] >= 0) heap_up(heap_pos_[v]);
}

void Solver::decay() { act_inc_ /= 0.95; }

bool Solver::heap_less(VarId a, VarId b) const { return activity_[a] > activity_[b]; }

void Solver::heap_insert(VarId v) {
    heap_pos_[v] = (int)heap_.size();
    heap_.push_back(v);
    heap_up(heap_pos_[v]);
}

void Solver::heap_up(int i) {
    VarId v = heap_[i];
    while (i > 0) {
        int par = (i - 1) / 2;
        if (!heap_less(v, heap_[par])) break;
        heap_[i] = heap_[par];
        heap_pos_[heap_[i]] = i;
        i = par;
    }
    heap_[i] = v;
    heap_pos_[v] = i;
}

void Solver::heap_down(int i) {
    VarId v = heap_[i];
    int n = (int)heap_.size();
    for (;;) {
        int c = 2 * i + 1;
        if (c >= n) break;
        if (c + 1 < n && heap_less(heap_[c + 1], heap_[c])) c++;
        if (!heap_less(heap_[c], v)) break;
        heap_[i] = heap_[c];
        heap_pos_[heap_[i]] = i;
        i = c;
    }
    heap_[i] = v;
    heap_pos_[v] = i;
}

VarId Solver::heap_pop() {
    VarId v = heap_[0];
    heap_pos_[v] = -1;
    heap_[0] = heap_.back();
    heap_.pop_back();
    if (!heap_.empty()) {
        heap_pos_[heap_[0]] = 0;
        heap_down(0);
    }
    return v;
}

Lit Solver::pick_branch() {
    if (heuristic_) {
        Lit l = heuristic_->next_decision(*this);
        if (l != lit_Undef && value(l) == LBool::Undef) return l;
    }
    while (!heap_.empty()) {
        VarId v = heap_[0];
        if (assigns_[v] == LBool::Undef && f_.var(v).decidable) {
            heap_pop();
            return mkLit(v, !phase_[v]);
        }
        heap_pop();
    }
    // safety net: assign leftover auxiliaries
    for (VarId v = 0; v < (VarId)assigns_.size(); v++)
        if (assigns_[v] == LBool::Undef && f_.var(v).kind == VarKind::Boolean)
            return mkLit(v, !phase_[v]);
    return lit_Undef;
}

bool Solver::out_of_time() const {
    if (budget_ <= 0) return false;
    double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return el > budget_;
}

SolveStatus Solver::solve() {
    start_ = std::chrono::steady_clock::now();
    if (unsat_root_) return SolveStatus::Unsat;
    // fill the decision heap
    heap_.clear();
    std::fill(heap_pos_.begin(), heap_pos_.end(), -1);
    for (VarId v = 0; v < (VarId)assigns_.size(); v++)
        if (f_.var(v).kind == VarKind::Boolean) heap_insert(v);

    int64_t conflicts_since_restart = 0;
    int64_t restart_limit = 64;
    int luby_idx = 0;
    auto luby = [](int x) {
        int size = 1, seq = 0;
        while (size < x + 1) { seq++; size = 2 * size + 1; }
        while (size - 1 != x) {
            size = (size - 1) >> 1;
            seq--;
            x = x % size;
        }
        return 1LL << seq;
    };

    for (;;) {
        if (!propagate()) {
            stats_.conflicts++;
            conflicts_since_restart++;
            if (decision_level() == 0) return SolveStatus::Unsat;
            std::vector<Lit> learnt;
            int bt = 0;
            analyze(std::move(conflict_), learnt, bt);
            cancel_until(bt);
            if (learnt.size() == 1) {
                if (!enqueue(learnt[0], kReasonNone)) return SolveStatus::Unsat;
            } else {
                int id = attach(learnt, true);
                std::vector<Lit> sorted(clauses_[id].lits);
                std::sort(sorted.begin(), sorted.end());
                clause_hashes_.insert(clause_hash(sorted));
                stats_.learned++;
                enqueue(clauses_[id].lits[0], id);
            }
            decay();
            if ((stats_.conflicts & 127) == 0 && out_of_time()) return SolveStatus::Timeout;
            continue;
        }
        if (restarts_ && conflicts_since_restart >= restart_limit) {
            conflicts_since_restart = 0;
            restart_limit = 64LL * luby(luby_idx++);
            stats_.restarts++;
            cancel_until(0);
            continue;
        }
        if (out_of_time()) return SolveStatus::Timeout;
        Lit next = pick_branch();
        if (next == lit_Undef) {
            // full Boolean assignment with a consistent theory state;
            // trail and theory are left in place for model extraction
            model_.assign(assigns_.begin(), assigns_.end());
            return SolveStatus::Sat;
        }
        stats_.decisions++;
        trail_lim_.push_back((int)trail_.size());
        if (theory_) theory_->push_level();
        enqueue(next, kReasonNone);
    }
}

std::string Solver::to_dimacs() const {
    std::ostringstream out;
    int nc = (int)units_.size();
    for (const SClause& c : clauses_)
        if (!c.learned) nc++;
    for (VarId v = 0; v < (VarId)assigns_.size(); v++) {
        const Variable& var = f_.var(v);
        if (var.kind == VarKind::Boolean && var.decidable)
            out << "c var " << (v + 1) << ' ' << var.name << '\n';
    }
    out << "p cnf " << assigns_.size() << ' ' << nc << '\n';
    for (Lit l : units_) out << (l.neg() ? -(l.var() + 1) : (l.var() + 1)) << " 0\n";
    for (const SClause& c : clauses_) {
        if (c.learned) continue;
        for (Lit l : c.lits) out << (l.neg() ? -(l.var() + 1) : (l.var() + 1)) << ' ';
        out << "0\n";
    }
    return out.str();
}

} // namespace sode
