#include "sode/heuristics.hpp"

#include <algorithm>
#include <climits>
#include <tuple>

namespace sode {

namespace {

std::vector<int> tarjan_scc(const std::vector<std::vector<int>>& adj, int& ncomp) {
    int n = (int)adj.size();
    std::vector<int> comp(n, -1), low(n), num(n, -1), stk;
    std::vector<char> on(n, 0);
    int counter = 0;
    ncomp = 0;
    // explicit stack: (vertex, child index)
    std::vector<std::pair<int, size_t>> call;
    for (int s = 0; s < n; s++) {
        if (num[s] >= 0) continue;
        call.push_back({s, 0});
        while (!call.empty()) {
            int v = call.back().first;
            size_t& ci = call.back().second;
            if (ci == 0) {
                num[v] = low[v] = counter++;
                stk.push_back(v);
                on[v] = 1;
            }
            if (ci < adj[v].size()) {
                int w = adj[v][ci++];
                if (num[w] < 0) call.push_back({w, 0});
                else if (on[w]) low[v] = std::min(low[v], num[w]);
            } else {
                if (low[v] == num[v]) {
                    for (;;) {
                        int w = stk.back();
                        stk.pop_back();
                        on[w] = 0;
                        comp[w] = ncomp;
                        if (w == v) break;
                    }
                    ncomp++;
                }
                call.pop_back();
                if (!call.empty())
                    low[call.back().first] = std::min(low[call.back().first], low[v]);
            }
        }
    }
    return comp;
}

struct NameParts {
    std::string train, field;
    int cat = 3; // 0 enter, 1 idle, 2 next claims, 3 everything else
};

NameParts parse_name(const std::string& name) {
    NameParts p;
    size_t dot = name.find('.');
    size_t at = name.rfind('@');
    if (dot == std::string::npos || at == std::string::npos || at < dot) {
        p.field = name;
        return p;
    }
    p.train = name.substr(0, dot);
    p.field = name.substr(dot + 1, at - dot - 1);
    if (p.field == "enter") p.cat = 0;
    else if (p.field == "idle") p.cat = 1;
    else if (p.field.rfind("next_", 0) == 0) p.cat = 2;
    return p;
}

} // namespace

std::vector<int> compute_distances(const DependencyGraph& g) {
    int ncomp = 0;
    std::vector<int> comp = tarjan_scc(g.out, ncomp);
    // Tarjan emits components sinks first, so one pass suffices
    std::vector<int> cdist(ncomp, 0);
    std::vector<std::vector<int>> members(ncomp);
    for (int v = 0; v < g.n; v++) members[comp[v]].push_back(v);
    for (int c = 0; c < ncomp; c++)
        for (int v : members[c])
            for (int w : g.out[v])
                if (comp[w] != c) cdist[c] = std::max(cdist[c], 1 + cdist[comp[w]]);
    std::vector<int> dist(g.n);
    for (int v = 0; v < g.n; v++) dist[v] = cdist[comp[v]];
    return dist;
}

StaticOrderHeuristic::StaticOrderHeuristic(const Formula& f, HeuristicKind kind) {
    struct Entry {
        std::tuple<int, int, std::string, std::string, VarId> key;
        Lit lit;
    };
    std::vector<Entry> entries;

    std::vector<int> dist;
    std::vector<char> demote;
    if (kind == HeuristicKind::Initial) {
        DependencyGraph dg = build_dependency_graph(f);
        dist = compute_distances(dg);
        int max_step = -1;
        for (const Variable& v : f.vars()) max_step = std::max(max_step, v.step);
        demote.assign(f.num_atoms(), 0);
        for (AtomId a = 0; a < f.num_atoms(); a++) {
            VarId av = f.abs_var(a);
            if (dg.initial[a] && dg.is_rule[a] && max_step >= 0 &&
                f.var(av).step == max_step)
                demote[a] = 1;
        }
    }

    for (const Variable& v : f.vars()) {
        if (v.kind != VarKind::Boolean || !v.decidable) continue;
        int step = v.step < 0 ? INT_MAX : v.step;
        switch (kind) {
            case HeuristicKind::Bmc:
                entries.push_back({{step, 0, "", "", v.id}, mkLit(v.id, false)});
                break;
            case HeuristicKind::Railway: {
                NameParts p = parse_name(v.name);
                bool neg = p.cat == 1 || p.cat == 2;
                entries.push_back({{step, p.cat, p.train, p.field, v.id},
                                   mkLit(v.id, neg)});
                break;
            }
            case HeuristicKind::Initial: {
                AtomId a = v.atom;
                int d = a >= 0 ? dist[a] : -1;
                int rank = a >= 0 && demote[a] ? 1 : 0;
                entries.push_back({{rank, -d, "", "", v.id}, mkLit(v.id, false)});
                break;
            }
        }
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.key < b.key; });
    order_.reserve(entries.size());
    for (const Entry& e : entries) order_.push_back(e.lit);
}

Lit StaticOrderHeuristic::next_decision(const Solver& s) {
    int lvl = s.decision_level();
    if ((int)snap_.size() > lvl) {
        cursor_ = snap_[lvl];
        snap_.resize(lvl);
    }
    while (cursor_ < order_.size() &&
           s.value(order_[cursor_].var()) != LBool::Undef)
        cursor_++;
    if (cursor_ == order_.size()) return lit_Undef;
    snap_.push_back(cursor_);
    return order_[cursor_];
}

std::unique_ptr<StaticOrderHeuristic> make_heuristic(const Formula& f,
                                                     const std::string& name) {
    if (name == "vsids") return nullptr;
    if (name == "bmc") return std::make_unique<StaticOrderHeuristic>(f, HeuristicKind::Bmc);
    if (name == "railway")
        return std::make_unique<StaticOrderHeuristic>(f, HeuristicKind::Railway);
    if (name == "initial")
        return std::make_unique<StaticOrderHeuristic>(f, HeuristicKind::Initial);
    throw SodeError("unknown heuristic: " + name);
}

} // namespace sode
