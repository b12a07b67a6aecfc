#include "sode/bench.hpp"

#include "sode/encoder.hpp"
#include "sode/heuristics.hpp"
#include "sode/theory.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>

namespace sode {

namespace {

int steps_for(int nt) { return 45 + 35 * (nt - 1); }

} // namespace

Problem gen_serial_parallel(int nt, int ns, int np) {
    if (nt < 1 || ns < 1 || np < 1) throw SodeError("gen_serial_parallel needs positive sizes");
    Problem p;
    NetworkDef& net = p.network;

    auto node = [&](const std::string& id, bool boundary, bool stop) {
        net.nodes.push_back({id, boundary, stop});
        return (int)net.nodes.size() - 1;
    };
    // travel direction: departures use side 1, arrivals side 0
    auto seg = [&](const std::string& id, int u, int v, double len) {
        net.segments.push_back({id, {u, 1}, {v, 0}, len, 40.0});
    };

    int b_start = node("b_start", true, false);
    int b_end = node("b_end", true, false);
    std::vector<int> split(ns), merge(ns);
    for (int g = 0; g < ns; g++) {
        split[g] = node("split" + std::to_string(g), false, false);
        merge[g] = node("merge" + std::to_string(g), false, false);
        for (int b = 0; b < np; b++)
            node("sta" + std::to_string(g) + "_" + std::to_string(b), false, true);
    }
    seg("entry", b_start, split[0], 100);
    for (int g = 0; g < ns; g++) {
        for (int b = 0; b < np; b++) {
            std::string gs = std::to_string(g) + "_" + std::to_string(b);
            int sta = net.node_index("sta" + gs);
            seg("in" + gs, split[g], sta, 900);
            seg("out" + gs, sta, merge[g], 900);
        }
        if (g + 1 < ns) seg("link" + std::to_string(g), merge[g], split[g + 1], 100);
    }
    seg("exit", merge[ns - 1], b_end, 100);

    for (int t = 1; t <= nt; t++) {
        std::string id = "T" + std::to_string(t);
        p.trains.push_back({id, 2.0, 1.0, 40.0, 50.0});
        p.connections.push_back({id, {"b_start", "b_end"}});
    }
    p.config.J = steps_for(nt);
    p.config.rho = 30;
    p.validate();
    return p;
}

Problem gen_scenario(const std::string& scenario, int nt, int ns, double bnd) {
    Problem p = gen_serial_parallel(nt, ns, ns);
    auto tid = [&](int i) { return "T" + std::to_string(i + 1); };
    auto depart = [&](int i) { return VisitRef{tid(i), "b_start", true}; };
    auto arrive_end = [&](int i) { return VisitRef{tid(i), "b_end", false}; };
    auto arrive_merge = [&](int i) { return VisitRef{tid(i), "merge0", false}; };
    auto timing = [&](int i) { return sched_rel(depart(i), arrive_end(i), CmpOp::Lt, bnd); };
    auto enter_before = [&](int i, int j) {
        return sched_ordering(depart(i), depart(j), CmpOp::Lt);
    };
    auto early_after = [&](int i, int j) {
        return sched_ordering(depart(i), arrive_merge(j), CmpOp::Le);
    };
    auto enter_first = [&](int i) { return sched_abs(depart(i), CmpOp::Le, 0); };

    if (scenario == "nop") {
        // no schedule constraints
    } else if (scenario == "last") {
        p.schedule.push_back(timing(nt - 1));
        for (int i = 0; i + 1 < nt; i++) {
            p.schedule.push_back(enter_before(i, i + 1));
            p.schedule.push_back(early_after(i + 1, i));
        }
    } else if (scenario == "all") {
        for (int i = 0; i < nt; i++) {
            p.schedule.push_back(timing(i));
            if (nt == 1) continue;   // entry condition is vacuous for a lone train
            std::vector<SchedPtr> opts{enter_first(i)};
            for (int j = 0; j < nt; j++)
                if (j != i)
                    opts.push_back(sched_and({enter_before(j, i), early_after(i, j)}));
            p.schedule.push_back(sched_or(std::move(opts)));
        }
    } else {
        throw SodeError("unknown scenario: " + scenario);
    }
    return p;
}

std::vector<BenchResult> run_suite(const std::vector<BenchCase>& cases,
                                   double timeout_s, std::ostream* log) {
    std::vector<BenchResult> out;
    for (const BenchCase& bc : cases) {
        Problem p = gen_scenario(bc.scenario, bc.nt, bc.ns, bc.bnd);
        Encoded enc = encode(p);
        OdeTheory th(enc.formula);
        Solver s(enc.formula);
        s.set_theory(&th);
        auto h = make_heuristic(enc.formula, "railway");
        s.set_heuristic(h.get());
        s.set_time_budget(timeout_s);

        auto t0 = std::chrono::steady_clock::now();
        SolveStatus st = s.solve();
        std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;

        BenchResult r;
        r.c = bc;
        r.result = st == SolveStatus::Sat ? "sat"
                 : st == SolveStatus::Unsat ? "unsat" : "timeout";
        r.wall_s = dt.count();
        r.conflicts = s.stats().conflicts;
        r.decisions = s.stats().decisions;
        if (log)
            *log << bc.scenario << " nt=" << bc.nt << " ns=" << bc.ns << " bnd=" << bc.bnd
                 << ": " << r.result << " in " << r.wall_s << "s (" << r.conflicts
                 << " conflicts, " << r.decisions << " decisions)" << std::endl;
        out.push_back(std::move(r));
    }
    return out;
}

std::string results_csv(const std::vector<BenchResult>& rs) {
    std::ostringstream os;
    os << "scenario,nt,ns,bnd,result,wall_s,conflicts,decisions\n";
    for (const BenchResult& r : rs) {
        os << r.c.scenario << "," << r.c.nt << "," << r.c.ns << ",";
        if (r.c.bnd == std::floor(r.c.bnd))
            os << (long long)r.c.bnd;
        else
            os << r.c.bnd;
        os.precision(6);
        os << "," << r.result << "," << std::fixed << r.wall_s << ","
           << r.conflicts << "," << r.decisions << "\n";
        os.unsetf(std::ios::fixed);
    }
    return os.str();
}

} // namespace sode
