// End-to-end acceptance run: ten checks covering the solver stack, the
// encoder, the benchmark scenarios, and the supporting oracles. Prints one
// verdict line per check and exits nonzero if any of them fails.

#include "sode/bench.hpp"
#include "sode/encoder.hpp"
#include "sode/heuristics.hpp"
#include "sode/plan.hpp"
#include "sode/theory.hpp"
#include "theory_oracle.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <iostream>
#include <random>
#include <sstream>

using namespace sode;
using namespace sode_test;

namespace {

int g_failures = 0;
std::ostringstream g_notes;

void expect(bool ok, const std::string& what) {
    if (!ok) {
        g_failures++;
        g_notes << "    " << what << "\n";
    }
}

int g_overall = 0;

void verdict(int id, const std::string& title) {
    bool ok = g_failures == 0;
    if (!ok) g_overall++;
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << id << ". " << title << "\n";
    if (!ok) std::cout << g_notes.str();
    g_failures = 0;
    g_notes.str("");
}

struct RunOut {
    SolveStatus st = SolveStatus::Timeout;
    SolverStats stats;
    double      wall = 0;
    Problem     p;
    Plan        plan;
    std::string plan_json;
    bool        has_plan = false;
};

RunOut run_case(const std::string& sc, int nt, int ns, double bnd, bool extract) {
    RunOut out;
    out.p = gen_scenario(sc, nt, ns, bnd);
    Encoded enc = encode(out.p);
    OdeTheory th(enc.formula);
    Solver s(enc.formula);
    s.set_theory(&th);
    auto h = make_heuristic(enc.formula, "railway");
    s.set_heuristic(h.get());
    s.set_time_budget(1700);
    auto t0 = std::chrono::steady_clock::now();
    out.st = s.solve();
    out.wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.stats = s.stats();
    if (out.st == SolveStatus::Sat && extract) {
        out.plan = extract_plan(out.p, enc, s, th);
        out.plan_json = plan_to_json(out.plan, out.p);
        out.has_plan = true;
    }
    return out;
}

std::string case_name(const std::string& sc, int nt, int ns, double bnd) {
    std::ostringstream os;
    os << sc << "/" << nt << "x" << ns << " bnd=" << bnd;
    return os.str();
}

// --- boolean oracle helpers ---

Formula bool_formula(int nvars, const std::vector<std::vector<int>>& cls) {
    Formula f;
    for (int i = 1; i <= nvars; i++) f.declare(VarKind::Boolean, "p" + std::to_string(i));
    for (const auto& c : cls) {
        std::vector<Lit> lits;
        for (int x : c) lits.push_back(mkLit(std::abs(x) - 1, x < 0));
        f.add_clause(std::move(lits));
    }
    return f;
}

bool brute_force_sat(int nvars, const std::vector<std::vector<int>>& cls) {
    for (uint32_t m = 0; m < (1u << nvars); m++) {
        bool ok = true;
        for (const auto& c : cls) {
            bool sat = false;
            for (int x : c) {
                bool v = (m >> (std::abs(x) - 1)) & 1;
                if (x < 0 ? !v : v) { sat = true; break; }
            }
            if (!sat) { ok = false; break; }
        }
        if (ok) return true;
    }
    return false;
}

std::vector<std::vector<int>> php(int holes) {
    int pigeons = holes + 1;
    auto v = [&](int i, int j) { return i * holes + j + 1; };
    std::vector<std::vector<int>> cls;
    for (int i = 0; i < pigeons; i++) {
        std::vector<int> c;
        for (int j = 0; j < holes; j++) c.push_back(v(i, j));
        cls.push_back(c);
    }
    for (int j = 0; j < holes; j++)
        for (int i1 = 0; i1 < pigeons; i1++)
            for (int i2 = i1 + 1; i2 < pigeons; i2++)
                cls.push_back({-v(i1, j), -v(i2, j)});
    return cls;
}

} // namespace

int main() {
    std::vector<std::pair<Problem, Plan>> sat_plans;

    // 1. scheduled scenarios: generous bound satisfiable, tight bounds not
    {
        double total = 0;
        for (const char* sc : {"last", "all"})
            for (int nt : {1, 2})
                for (int ns : {2, 3})
                    for (double bnd : {10.0, 100.0, 1000.0}) {
                        RunOut r = run_case(sc, nt, ns, bnd, bnd == 1000.0);
                        total += r.wall;
                        SolveStatus want =
                            bnd == 1000.0 ? SolveStatus::Sat : SolveStatus::Unsat;
                        expect(r.st == want,
                               case_name(sc, nt, ns, bnd) + " expected " +
                                   (want == SolveStatus::Sat ? "sat" : "unsat"));
                        if (r.has_plan) sat_plans.push_back({r.p, r.plan});
                    }
        expect(total <= 1800.0, "family exceeded the 30 minute budget");
        verdict(1, "timing-bound scenarios split into sat at 1000s and unsat at 10s/100s "
                   "(within 30 min)");
    }

    // 2. unconstrained scenarios are satisfiable
    {
        double total = 0;
        for (int nt : {1, 2, 3})
            for (int ns : {2, 3}) {
                RunOut r = run_case("nop", nt, ns, 0, true);
                total += r.wall;
                expect(r.st == SolveStatus::Sat, case_name("nop", nt, ns, 0) + " expected sat");
                if (r.has_plan) sat_plans.push_back({r.p, r.plan});
            }
        expect(total <= 900.0, "family exceeded the 15 minute budget");
        verdict(2, "unconstrained scenarios up to 3 trains are sat (within 15 min)");
    }

    // 3. every satisfying assignment yields a plan the checker accepts
    {
        expect(!sat_plans.empty(), "no plans were collected");
        for (auto& [p, plan] : sat_plans) {
            ValidationReport rep = validate_plan(plan, p);
            expect(rep.ok && rep.violations.empty(), "plan checker reported violations");
            for (const Violation& v : rep.violations)
                g_notes << "      " << v.rule << ": " << v.detail << "\n";
        }
        verdict(3, "all extracted plans pass the independent checker with zero violations");
    }

    // 4. route and node counts of the generated networks
    {
        const int want_nodes[] = {10, 17, 26};
        const long long want_paths[] = {4, 27, 256};
        for (int q = 2; q <= 4; q++) {
            Problem p = gen_serial_parallel(1, q, q);
            expect((int)p.network.nodes.size() == want_nodes[q - 2], "node count mismatch");
            SuccessorInfo si = successor_relation(p.network, p.connections[0]);
            expect(si.path_count == want_paths[q - 2], "route count mismatch");
        }
        verdict(4, "network sizes give 10/17/26 nodes and 4/27/256 routes");
    }

    // 5. integrator against closed-form kinematics
    {
        Formula f;
        VarId fv = f.declare(VarKind::Functional, "v@0", 0);
        VarId fd = f.declare(VarKind::Functional, "d@0", 0);
        VarId fa = f.declare(VarKind::Real, "a@0", 0);
        std::mt19937 rng(424242);
        std::uniform_real_distribution<double> ua(0.5, 4.0), uv(0.0, 10.0), udv(5.0, 30.0),
            ud(20.0, 1000.0), ur(5.0, 50.0);
        for (int iter = 0; iter < 1000; iter++) {
            double a = ua(rng), v0 = uv(rng), vmax = v0 + udv(rng), dmax = ud(rng),
                   rho = ur(rng);
            MapEnv env;
            env.reals[fa] = a;
            OdeSystem sys;
            sys.formula = &f;
            sys.eqs = {{fv, f.t_var(fa)}, {fd, f.t_fun(fv)}};
            sys.init = {v0, 0.0};
            sys.invariants = {{0, f.t_fun(fd), CmpOp::Le, f.t_const(dmax)},
                              {1, f.t_fun(fv), CmpOp::Le, f.t_const(vmax)}};
            sys.rho = rho;
            sys.env = &env;
            IntegrationResult r = integrate(sys);
            double tv = (vmax - v0) / a;
            double td = (-v0 + std::sqrt(v0 * v0 + 2 * a * dmax)) / a;
            double tau = std::min({tv, td, rho});
            double cvf = v0 + a * tau, cdf = v0 * tau + 0.5 * a * tau * tau;
            double tolv = 1e-9 * std::max(1.0, std::fabs(cvf)) + 4e-9;
            double told = 1e-9 * std::max(1.0, std::fabs(cdf)) + 4e-9;
            expect(std::fabs(r.traj[0].final_value() - cvf) <= tolv,
                   "final velocity off closed form");
            expect(std::fabs(r.traj[1].final_value() - cdf) <= told,
                   "final distance off closed form");
            int which = tau >= rho ? -1 : (td < tv ? 0 : 1);
            if (which < 0)
                expect(r.reason.kind == StopKind::TimeoutReached, "expected timeout stop");
            else
                expect(r.reason.kind == StopKind::InvariantViolated &&
                           r.reason.invariant_id == which,
                       "wrong stopping invariant");
            OdeSystem half = sys;
            half.h = sys.h / 2;
            IntegrationResult rh = integrate(half);
            expect(rh.reason.kind == r.reason.kind &&
                       rh.reason.invariant_id == r.reason.invariant_id,
                   "stop reason changed under step halving");
            if (g_failures) break;
        }
        verdict(5, "integrator matches closed-form kinematics within 1e-9 relative error, "
                   "stop reasons stable under step halving");
    }

    // 6. segment entry speeds never exceed the limit
    {
        int entries = 0;
        for (auto& [p, plan] : sat_plans)
            for (const TrainPlan& tp : plan.trains)
                for (size_t j = 0; j < tp.steps.size(); j++) {
                    int s = tp.steps[j].front;
                    if (s < 0) continue;
                    bool fresh = j == 0 || tp.steps[j - 1].front != s;
                    if (!fresh) continue;
                    entries++;
                    expect(tp.steps[j].init_v <= p.network.segments[s].limit + 1e-6,
                           "segment entered above its speed limit");
                }
        expect(entries > 0, "no segment entries observed");
        verdict(6, "every segment entry is at most 1e-6 above the speed limit");
    }

    // 7. boolean core against brute force and pigeonhole instances
    {
        std::mt19937 rng(31415926);
        for (int iter = 0; iter < 500 && !g_failures; iter++) {
            int nv = 5 + (int)(rng() % 16);
            double ratio = 3.5 + (rng() % 1000) / 666.0;
            int nc = std::max(1, (int)(nv * ratio));
            std::vector<std::vector<int>> cls;
            for (int i = 0; i < nc; i++) {
                std::vector<int> c;
                while ((int)c.size() < 3) {
                    int v = 1 + (int)(rng() % nv);
                    bool dup = false;
                    for (int x : c)
                        if (std::abs(x) == v) dup = true;
                    if (!dup) c.push_back(rng() & 1 ? v : -v);
                }
                cls.push_back(c);
            }
            Formula f = bool_formula(nv, cls);
            Solver s(f);
            bool want = brute_force_sat(nv, cls);
            expect(s.solve() == (want ? SolveStatus::Sat : SolveStatus::Unsat),
                   "random 3-CNF verdict disagrees with brute force");
        }
        for (int holes = 1; holes <= 4; holes++) {
            Formula f = bool_formula((holes + 1) * holes, php(holes));
            Solver s(f);
            expect(s.solve() == SolveStatus::Unsat, "pigeonhole instance not refuted");
        }
        verdict(7, "sat core agrees with brute force on 500 random 3-CNFs and refutes "
                   "pigeonhole up to n=4");
    }

    // 8. theory propagation fixpoint against an independent re-evaluation
    {
        std::mt19937 rng(20240817);
        for (int iter = 0; iter < 200 && !g_failures; iter++) {
            RandomInstance ri = make_random(rng);
            const Formula& f = ri.f;
            Driver dr(f);
            dr.th.push_level();
            std::vector<AtomId> order = ri.atoms;
            std::shuffle(order.begin(), order.end(), rng);
            for (AtomId a : order) {
                bool is_rule = f.atom(a).kind != AtomKind::Comparison ||
                               f.atom(a).op == CmpOp::Eq;
                bool pol = is_rule ? rng() % 5 != 0 : rng() % 2;
                if (!dr.assert_atom(a, pol)) break;
            }
            if (dr.conflict) {
                expect(!dr.conflict_clause.empty(), "empty conflict clause");
                for (Lit l : dr.conflict_clause) {
                    AtomId b = f.atom_of(l.var());
                    expect(b >= 0 && dr.assigned.count(b) &&
                               dr.assigned[b] == (l.neg() ? 1 : 0),
                           "conflict clause not falsified by the assignment");
                }
                continue;
            }
            OracleStore st = oracle_fixpoint(ri, dr.assigned);
            expect(!st.zero_length, "oracle hit a zero-length run without a conflict");
            for (const Variable& var : f.vars()) {
                if (var.kind == VarKind::Real) {
                    bool have = st.env.reals.count(var.id);
                    expect(dr.th.has_real(var.id) == have, "real slot coverage differs");
                    if (have && dr.th.has_real(var.id)) {
                        double a1 = st.env.reals[var.id], a2 = dr.th.real_value(var.id);
                        expect(std::memcmp(&a1, &a2, 8) == 0, "real value differs bitwise");
                    }
                } else if (var.kind == VarKind::Functional) {
                    bool have_f = st.env.finals.count(var.id);
                    expect(dr.th.has_final(var.id) == have_f, "final slot coverage differs");
                    if (have_f && dr.th.has_final(var.id)) {
                        double a1 = st.env.finals[var.id], a2 = dr.th.final_value(var.id);
                        expect(std::memcmp(&a1, &a2, 8) == 0, "final value differs bitwise");
                    }
                }
            }
            for (AtomId a = 0; a < f.num_atoms(); a++) {
                const Atom& at = f.atom(a);
                if (at.kind != AtomKind::Comparison) continue;
                double l, r;
                try {
                    l = eval_term(f, at.lhs, st.env);
                    r = eval_term(f, at.rhs, st.env);
                } catch (const EvalError&) {
                    continue;
                }
                bool truth = exact_cmp(at.op, l, r);
                expect(dr.assigned.count(a) && dr.assigned[a] == (truth ? 1 : 0),
                       "evaluable comparison missing its forced polarity");
            }
            for (auto& [a, pol] : dr.propagated) {
                Lit pl = mkLit(f.abs_var(a), !pol);
                auto expl = dr.th.explain(pl);
                bool has_p = false;
                for (Lit l : expl) {
                    if (l == pl) { has_p = true; continue; }
                    AtomId b = f.atom_of(l.var());
                    expect(b >= 0 && dr.assigned.count(b) &&
                               dr.assigned[b] == (l.neg() ? 1 : 0),
                           "explanation literal not falsified");
                }
                expect(has_p, "explanation omits the propagated literal");
            }
        }
        verdict(8, "theory propagation reaches the brute-force fixpoint on 200 random "
                   "instances with falsified explanations");
    }

    // 9. tight bounds are refuted much faster than loose ones
    {
        double w10 = 1e18, w100 = 0;
        for (int rep = 0; rep < 2; rep++) {
            RunOut a = run_case("all", 2, 2, 10, false);
            RunOut b = run_case("all", 2, 2, 100, false);
            expect(a.st == SolveStatus::Unsat && b.st == SolveStatus::Unsat,
                   "expected both bounds to be unsat");
            w10 = std::min(w10, a.wall);
            w100 = std::max(w100, b.wall);
        }
        expect(w100 >= 5.0 * w10, "bound 10 was not at least 5x faster than bound 100");
        verdict(9, "refuting bound 10 is at least 5x faster than refuting bound 100 on "
                   "all/2x2");
    }

    // 10. determinism of the whole pipeline including plan bytes
    {
        RunOut a = run_case("last", 2, 2, 1000, true);
        RunOut b = run_case("last", 2, 2, 1000, true);
        expect(a.st == SolveStatus::Sat && b.st == SolveStatus::Sat, "expected sat");
        expect(a.stats.conflicts == b.stats.conflicts &&
                   a.stats.decisions == b.stats.decisions &&
                   a.stats.propagations == b.stats.propagations,
               "solver statistics differ between identical runs");
        expect(a.plan_json == b.plan_json, "plan bytes differ between identical runs");
        Problem p = gen_scenario("last", 2, 2, 1000);
        expect(Formula::struct_equal(encode(p).formula, encode(p).formula),
               "encoding is not structurally deterministic");
        verdict(10, "repeated runs are deterministic down to the plan bytes");
    }

    std::cout << (g_overall == 0 ? "all criteria passed"
                                 : std::to_string(g_overall) + " criteria failed")
              << "\n";
    return g_overall == 0 ? 0 : 1;
}
