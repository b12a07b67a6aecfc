#include "sode/plan.hpp"

#include "sode/ode.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>

namespace sode {

using nlohmann::json;

namespace {

constexpr double kTimeTol = 1e-9;
constexpr double kSimTol = 1e-6;

const char* kModes[] = {"idle", "steady", "acc", "brake"};

} // namespace

Plan extract_plan(const Problem& p, const Encoded& enc, const Solver& s,
                  const OdeTheory& th) {
    const Formula& f = enc.formula;
    const int S = p.config.J + 1;
    Plan plan;

    auto var_of = [&](const std::string& name) {
        VarId v = f.find_var(name);
        if (v == var_Undef) throw SodeError("plan extraction: missing variable " + name);
        return v;
    };
    auto bval = [&](const std::string& name) {
        return s.model().at(var_of(name)) == LBool::True;
    };
    auto rval = [&](const std::string& name) {
        VarId v = var_of(name);
        if (!th.has_real(v)) throw SodeError("plan extraction: no value for " + name);
        return th.real_value(v);
    };

    for (int j = 0; j < S; j++) {
        plan.t.push_back(rval("t@" + std::to_string(j)));
        plan.tau.push_back(rval("tau@" + std::to_string(j)));
    }

    // sync group of each step, recognized by its shared length variable
    std::vector<GroupId> gsync(S, -1);
    for (const IntegrationGroup& g : f.groups())
        if (g.sync && g.tau != var_Undef) gsync[f.var(g.tau).step] = g.id;

    for (size_t i = 0; i < p.trains.size(); i++) {
        const std::string& T = p.trains[i].id;
        const SuccessorInfo& si = enc.succ[i];
        TrainPlan tp;
        tp.id = T;
        double cum_d = 0;
        for (int j = 0; j < S; j++) {
            TrainStep st;
            for (const char* m : kModes)
                if (bval(enc_var(T, m, j))) st.mode = m;
            if (st.mode.empty()) throw SodeError("plan extraction: no mode for " + T);
            st.away = bval(enc_var(T, "away", j));
            st.enter = bval(enc_var(T, "enter", j));
            st.finished = bval(enc_var(T, "finished", j));
            for (int seg : si.used_segments) {
                const std::string& sid = p.network.segments[seg].id;
                if (bval(enc_var(T, "back_" + sid, j))) st.back = seg;
                if (bval(enc_var(T, "front_" + sid, j))) st.front = seg;
                if (bval(enc_var(T, "next_" + sid, j))) st.next = seg;
            }
            VarId vd = var_of(enc_var(T, "d", j));
            VarId vv = var_of(enc_var(T, "v", j));
            if (!th.has_final(vd) || !th.has_final(vv) || !th.has_init(vv))
                throw SodeError("plan extraction: incomplete trajectory for " + T);
            st.init_v = th.init_value(vv);
            st.final_v = th.final_value(vv);
            st.final_d = th.final_value(vd);

            if (!st.away) {
                const IntegrationGroup& g = f.group(gsync[j]);
                const IntegrationResult* res = th.group_result(gsync[j]);
                if (!res) throw SodeError("plan extraction: step " + std::to_string(j) +
                                          " was never integrated");
                int di = -1, vi = -1;
                for (size_t m = 0; m < g.members.size(); m++) {
                    if (g.members[m] == vd) di = (int)m;
                    if (g.members[m] == vv) vi = (int)m;
                }
                const Trajectory& td = res->traj.at(di);
                const Trajectory& tv = res->traj.at(vi);
                for (size_t k = 0; k < td.times.size(); k++) {
                    if (!tp.samples.empty() && k == 0) continue;
                    tp.samples.push_back({plan.t[j] + td.times[k], cum_d + td.values[k],
                                          tv.values[k], st.front});
                }
                cum_d += st.final_d;
            }
            tp.steps.push_back(st);
        }
        plan.trains.push_back(std::move(tp));

        // visit events
        std::set<int> vnodes;
        for (auto [n, sg] : si.node_to_seg) vnodes.insert(n);
        for (auto [sg, n] : si.seg_to_node) vnodes.insert(n);
        if (si.start_node >= 0) vnodes.insert(si.start_node);
        for (int n : vnodes) {
            const std::string& nid = p.network.nodes[n].id;
            for (int j = 0; j < S; j++) {
                for (bool dep : {false, true}) {
                    std::string fld = (dep ? "depart_" : "arrive_") + nid;
                    VarId v = f.find_var(enc_var(T, fld, j));
                    if (v != var_Undef && s.model().at(v) == LBool::True)
                        plan.visits.push_back({T, nid, dep, j, plan.t[j]});
                }
            }
        }
    }
    std::stable_sort(plan.visits.begin(), plan.visits.end(),
                     [](const VisitEvent& a, const VisitEvent& b) { return a.step < b.step; });
    return plan;
}

// --- validation ---

namespace {

struct Checker {
    const Plan& plan;
    const Problem& p;
    ValidationReport rep;

    void bad(const std::string& rule, int step, const std::string& detail) {
        rep.ok = false;
        rep.violations.push_back({rule, step, detail});
    }
};

} // namespace

ValidationReport validate_plan(const Plan& plan, const Problem& p) {
    Checker c{plan, p, {}};
    const size_t S = plan.t.size();
    if (S == 0 || plan.tau.size() != S) {
        c.bad("plan", -1, "missing or inconsistent time axis");
        return c.rep;
    }
    for (const TrainPlan& tp : plan.trains)
        if (tp.steps.size() != S) {
            c.bad("plan", -1, "train " + tp.id + " has wrong step count");
            return c.rep;
        }

    if (std::abs(plan.t[0]) > kTimeTol) c.bad("time", 0, "t does not start at zero");
    for (size_t j = 0; j < S; j++) {
        if (plan.tau[j] <= 0 || plan.tau[j] > p.config.rho + kTimeTol)
            c.bad("time", (int)j, "step length outside (0, rho]");
        if (j + 1 < S && std::abs(plan.t[j + 1] - (plan.t[j] + plan.tau[j])) > kTimeTol)
            c.bad("time", (int)j, "t is not the prefix sum of tau");
    }

    // per-train re-simulation and occupancy bookkeeping
    struct Events {
        std::map<std::pair<std::string, bool>, std::vector<std::pair<int, double>>> occ;
    };
    std::map<std::string, Events> events;

    for (const TrainPlan& tp : plan.trains) {
        const TrainDef* def = nullptr;
        for (const TrainDef& t : p.trains)
            if (t.id == tp.id) def = &t;
        if (!def) {
            c.bad("plan", -1, "unknown train " + tp.id);
            continue;
        }
        SuccessorInfo si = successor_relation(p.network, p.connection(tp.id));
        Events& ev = events[tp.id];
        auto node_id = [&](int n) { return p.network.nodes[n].id; };

        // scratch system: d' = v, v' = a
        Formula sf;
        VarId sa = sf.declare(VarKind::Real, "a", 0);
        VarId sd = sf.declare(VarKind::Functional, "d", 0);
        VarId sv = sf.declare(VarKind::Functional, "v", 0);
        OdeSystem sys;
        sys.formula = &sf;
        sys.eqs = {{sd, sf.t_fun(sv)}, {sv, sf.t_var(sa)}};
        MapEnv env;
        sys.env = &env;

        bool entered = false, was_finished = false;
        double back_rem = 0, front_rem = 0;
        std::vector<int> nodes_passed;

        for (size_t j = 0; j < S; j++) {
            const TrainStep& st = tp.steps[j];
            const TrainStep* prev = j ? &tp.steps[j - 1] : nullptr;

            double a = st.mode == "acc" ? def->accel
                     : st.mode == "brake" ? -def->decel : 0.0;
            env.reals[sa] = a;
            sys.init = {0.0, st.init_v};
            sys.rho = plan.tau[j];
            IntegrationResult res = integrate(sys);
            double sim_d = res.traj[0].final_value();
            double sim_v = res.traj[1].final_value();
            if (std::abs(sim_d - st.final_d) > kSimTol)
                c.bad("dynamics", (int)j, tp.id + ": travelled distance mismatch");
            if (std::abs(sim_v - st.final_v) > kSimTol)
                c.bad("dynamics", (int)j, tp.id + ": final velocity mismatch");
            if (j + 1 < S && std::abs(tp.steps[j + 1].init_v - st.final_v) > kSimTol)
                c.bad("dynamics", (int)j, tp.id + ": velocity not chained across steps");

            double lim = def->vmax;
            if (st.back >= 0) lim = std::min(lim, p.network.segments[st.back].limit);
            if (st.front >= 0) lim = std::min(lim, p.network.segments[st.front].limit);
            if (!st.away)
                for (double vv : res.traj[1].values) {
                    if (vv > lim + kSimTol)
                        c.bad("limits", (int)j, tp.id + ": velocity above segment limit");
                    if (vv < -kSimTol) c.bad("limits", (int)j, tp.id + ": negative velocity");
                }

            // flag / occupancy consistency
            bool outside = st.back < 0 && st.front < 0;
            if (st.away != outside) c.bad("position", (int)j, tp.id + ": away flag mismatch");
            if (st.finished && st.front >= 0)
                c.bad("position", (int)j, tp.id + ": finished but still has a front");
            if (prev && prev->finished && !st.finished)
                c.bad("position", (int)j, tp.id + ": finished flag dropped");
            was_finished = was_finished || st.finished;

            if (st.enter) {
                if (entered || (prev && !prev->away))
                    c.bad("position", (int)j, tp.id + ": re-entry");
                if (!si.start_segments.count(st.front))
                    c.bad("position", (int)j, tp.id + ": entry on a non-starting segment");
                if (st.back >= 0) c.bad("position", (int)j, tp.id + ": back set at entry");
                if (std::abs(st.init_v) > kSimTol)
                    c.bad("position", (int)j, tp.id + ": nonzero entry velocity");
                entered = true;
                back_rem = def->length;
                front_rem = st.front >= 0 ? p.network.segments[st.front].length : 0;
                ev.occ[{node_id(si.start_node), true}].push_back({(int)j, plan.t[j]});
            } else if (prev && !prev->away && !st.away) {
                // transfer legality and exact positions
                if (st.front != prev->front) {
                    if (st.front >= 0 && prev->front >= 0) {
                        if (!si.seg_pairs.count({prev->front, st.front}))
                            c.bad("position", (int)j, tp.id + ": illegal front transfer");
                        if (std::abs(front_rem - prev->final_d) > kSimTol)
                            c.bad("position", (int)j,
                                  tp.id + ": front transfer not at segment end");
                        int n = p.network.segments[prev->front].b.node;
                        nodes_passed.push_back(n);
                        ev.occ[{node_id(n), false}].push_back({(int)j, plan.t[j]});
                        if (st.init_v > p.network.segments[st.front].limit + kSimTol)
                            c.bad("limits", (int)j, tp.id + ": entered segment too fast");
                        front_rem += p.network.segments[st.front].length;
                    } else if (st.front < 0) {
                        // front left the network
                        if (prev->front < 0 || !si.ending_segments.count(prev->front))
                            c.bad("position", (int)j, tp.id + ": front vanished mid-network");
                        else {
                            if (std::abs(front_rem - prev->final_d) > kSimTol)
                                c.bad("position", (int)j,
                                      tp.id + ": exit not at segment end");
                            if (!st.finished)
                                c.bad("position", (int)j, tp.id + ": exit without finishing");
                            int n = p.network.segments[prev->front].b.node;
                            nodes_passed.push_back(n);
                            ev.occ[{node_id(n), false}].push_back({(int)j, plan.t[j]});
                        }
                    }
                }
                if (st.back != prev->back) {
                    if (st.back >= 0 && st.back != prev->front &&
                        !(prev->back >= 0 && si.seg_pairs.count({prev->back, st.back})))
                        c.bad("position", (int)j, tp.id + ": illegal back transfer");
                    if (std::abs(back_rem - prev->final_d) > kSimTol)
                        c.bad("position", (int)j, tp.id + ": back transfer not at segment end");
                    if (st.back >= 0) back_rem += p.network.segments[st.back].length;
                }
                front_rem -= prev->final_d;
                back_rem -= prev->final_d;
                if (st.front >= 0 && front_rem < -kSimTol)
                    c.bad("position", (int)j, tp.id + ": overran segment end without transfer");
                if (st.back >= 0 && back_rem < -kSimTol)
                    c.bad("position", (int)j, tp.id + ": tail overran segment end");
                // interior departure: standing start on an outgoing segment
                if (st.mode == "acc" && st.init_v <= 1e-9 && st.front >= 0) {
                    int n = p.network.segments[st.front].a.node;
                    if (n != si.start_node)
                        ev.occ[{node_id(n), true}].push_back({(int)j, plan.t[j]});
                }
            } else if (prev && !prev->away && st.away) {
                if (prev->back < 0 || !si.ending_segments.count(prev->back))
                    c.bad("position", (int)j, tp.id + ": left the network mid-track");
                else if (std::abs(back_rem - prev->final_d) > kSimTol)
                    c.bad("position", (int)j, tp.id + ": departure before clearing the exit");
            }
            if (!st.away && !st.enter && prev && prev->away)
                c.bad("position", (int)j, tp.id + ": appeared without entering");
        }

        // connection order: listed nodes as a subsequence of passed nodes
        const ConnectionDef& conn = p.connection(tp.id);
        size_t want = 1;   // start node consumed at entry
        for (int n : nodes_passed)
            if (want < conn.nodes.size() &&
                p.network.nodes[n].id == conn.nodes[want])
                want++;
        if (entered && was_finished && want < conn.nodes.size())
            c.bad("connection", -1, tp.id + ": listed nodes not visited in order");
        if (!entered && was_finished)
            c.bad("connection", -1, tp.id + ": finished without entering");
    }

    // mutual exclusion across trains, all role pairs
    for (size_t x = 0; x < plan.trains.size(); x++)
        for (size_t y = x + 1; y < plan.trains.size(); y++)
            for (size_t j = 0; j < S; j++) {
                const TrainStep& a = plan.trains[x].steps[j];
                const TrainStep& b = plan.trains[y].steps[j];
                int ra[3] = {a.back, a.front, a.next};
                int rb[3] = {b.back, b.front, b.next};
                for (int u : ra)
                    for (int v : rb)
                        if (u >= 0 && u == v)
                            c.bad("mutual", (int)j,
                                  plan.trains[x].id + " and " + plan.trains[y].id +
                                      " share segment " + p.network.segments[u].id);
            }

    // schedule constraints evaluated on recomputed visit events
    {
        auto occ = [&](const VisitRef& v) -> const std::vector<std::pair<int, double>>* {
            auto it = events.find(v.train);
            if (it == events.end()) return nullptr;
            auto jt = it->second.occ.find({v.node, v.departure});
            if (jt == it->second.occ.end()) return nullptr;
            return &jt->second;
        };
        std::function<bool(const SchedPtr&)> holds = [&](const SchedPtr& s) -> bool {
            switch (s->kind) {
                case SchedExpr::And:
                    for (const SchedPtr& k : s->kids)
                        if (!holds(k)) return false;
                    return true;
                case SchedExpr::Or:
                    for (const SchedPtr& k : s->kids)
                        if (holds(k)) return true;
                    return false;
                case SchedExpr::Not:
                    return !holds(s->kids[0]);
                case SchedExpr::Ordering: {
                    VisitRef v1 = s->v1, v2 = s->v2;
                    CmpOp op = s->op;
                    if (op == CmpOp::Gt) { std::swap(v1, v2); op = CmpOp::Lt; }
                    if (op == CmpOp::Ge) { std::swap(v1, v2); op = CmpOp::Le; }
                    auto *o1 = occ(v1), *o2 = occ(v2);
                    if (op == CmpOp::Eq) {
                        if (!o1 || !o2) return !o1 && !o2;
                        std::vector<int> s1, s2;
                        for (auto [st, tm] : *o1) s1.push_back(st);
                        for (auto [st, tm] : *o2) s2.push_back(st);
                        return s1 == s2;
                    }
                    if (!o2) return true;   // nothing to order
                    if (!o1) return false;
                    for (auto [k, t1] : *o1)
                        for (auto [l, t2] : *o2)
                            if (op == CmpOp::Lt ? l <= k : l < k) return false;
                    return true;
                }
                case SchedExpr::AbsTiming: {
                    auto* o = occ(s->v1);
                    if (s->op == CmpOp::Lt || s->op == CmpOp::Le) {
                        if (!o) return false;
                        for (auto [k, tm] : *o)
                            if (!cmp_holds(s->op, tm, s->xi, 0)) return false;
                        return true;
                    }
                    if (!o) return true;
                    for (auto [k, tm] : *o)
                        if (!cmp_holds(s->op, tm, s->xi, 0)) return false;
                    return true;
                }
                case SchedExpr::RelTiming: {
                    auto *o1 = occ(s->v1), *o2 = occ(s->v2);
                    if (!o1) return true;
                    bool need = s->op == CmpOp::Lt || s->op == CmpOp::Le;
                    for (auto [j1, t1] : *o1) {
                        bool found = false;
                        if (o2)
                            for (auto [j2, t2] : *o2) {
                                if (j2 < j1) continue;
                                if (!cmp_holds(s->op, t2 - t1, s->xi, 0)) return false;
                                found = true;
                            }
                        if (need && !found) return false;
                    }
                    return true;
                }
            }
            return false;
        };
        for (size_t i = 0; i < p.schedule.size(); i++)
            if (!holds(p.schedule[i]))
                c.bad("schedule", -1,
                      "constraint not satisfied: " + sched_to_text(p.schedule[i]));
    }
    return c.rep;
}

// --- serialization ---

std::string plan_to_json(const Plan& plan, const Problem& p) {
    json j;
    j["t"] = plan.t;
    j["tau"] = plan.tau;
    j["trains"] = json::array();
    for (const TrainPlan& tp : plan.trains) {
        json jt;
        jt["id"] = tp.id;
        jt["steps"] = json::array();
        for (const TrainStep& st : tp.steps) {
            auto seg = [&](int s) { return s < 0 ? json() : json(p.network.segments[s].id); };
            jt["steps"].push_back({{"mode", st.mode},
                                   {"back", seg(st.back)},
                                   {"front", seg(st.front)},
                                   {"next", seg(st.next)},
                                   {"away", st.away},
                                   {"enter", st.enter},
                                   {"finished", st.finished},
                                   {"init_v", st.init_v},
                                   {"final_v", st.final_v},
                                   {"final_d", st.final_d}});
        }
        jt["samples"] = json::array();
        for (const Sample& s : tp.samples)
            jt["samples"].push_back(
                {s.time, s.d, s.v, s.segment < 0 ? json() : json(p.network.segments[s.segment].id)});
        j["trains"].push_back(std::move(jt));
    }
    j["visits"] = json::array();
    for (const VisitEvent& v : plan.visits)
        j["visits"].push_back({{"train", v.train},
                               {"node", v.node},
                               {"kind", v.departure ? "depart" : "arrive"},
                               {"step", v.step},
                               {"time", v.time}});
    return j.dump(2) + "\n";
}

Plan plan_from_json(const std::string& text, const Problem& p) {
    json j = json::parse(text);
    Plan plan;
    plan.t = j.at("t").get<std::vector<double>>();
    plan.tau = j.at("tau").get<std::vector<double>>();
    auto seg_of = [&](const json& js) {
        if (js.is_null()) return -1;
        int s = p.network.seg_index(js.get<std::string>());
        if (s < 0) throw SodeError("plan references unknown segment " + js.get<std::string>());
        return s;
    };
    for (const json& jt : j.at("trains")) {
        TrainPlan tp;
        tp.id = jt.at("id").get<std::string>();
        for (const json& js : jt.at("steps")) {
            TrainStep st;
            st.mode = js.at("mode").get<std::string>();
            st.back = seg_of(js.at("back"));
            st.front = seg_of(js.at("front"));
            st.next = seg_of(js.at("next"));
            st.away = js.at("away").get<bool>();
            st.enter = js.at("enter").get<bool>();
            st.finished = js.at("finished").get<bool>();
            st.init_v = js.at("init_v").get<double>();
            st.final_v = js.at("final_v").get<double>();
            st.final_d = js.at("final_d").get<double>();
            tp.steps.push_back(st);
        }
        for (const json& js : jt.at("samples"))
            tp.samples.push_back({js.at(0).get<double>(), js.at(1).get<double>(),
                                  js.at(2).get<double>(), seg_of(js.at(3))});
        plan.trains.push_back(std::move(tp));
    }
    for (const json& jv : j.at("visits"))
        plan.visits.push_back({jv.at("train").get<std::string>(),
                               jv.at("node").get<std::string>(),
                               jv.at("kind").get<std::string>() == "depart",
                               jv.at("step").get<int>(), jv.at("time").get<double>()});
    return plan;
}

std::string plan_csv(const Plan& plan, const Problem& p, const std::string& train) {
    std::ostringstream os;
    os.precision(12);
    os << "time,d,v,segment\n";
    for (const TrainPlan& tp : plan.trains) {
        if (tp.id != train) continue;
        for (const Sample& s : tp.samples)
            os << s.time << "," << s.d << "," << s.v << ","
               << (s.segment < 0 ? "" : p.network.segments[s.segment].id) << "\n";
    }
    return os.str();
}

} // namespace sode
