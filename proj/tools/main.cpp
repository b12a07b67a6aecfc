#include "sode/bench.hpp"
#include "sode/encoder.hpp"
#include "sode/heuristics.hpp"
#include "sode/plan.hpp"
#include "sode/text.hpp"
#include "sode/theory.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace sode;

namespace {

constexpr int kExitSat = 0, kExitUnsat = 20, kExitTimeout = 30, kExitUsage = 1;

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SodeError("cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void spit(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SodeError("cannot write " + path);
    out << data;
}

// single-line problem header so a solved file can be checked and replayed
std::string problem_header(const Problem& p) {
    return "; problem " + nlohmann::json::parse(problem_to_json(p)).dump() + "\n";
}

bool embedded_problem(const std::string& text, Problem& out) {
    const std::string key = "; problem ";
    if (text.rfind(key, 0) != 0) return false;
    size_t eol = text.find('\n');
    out = problem_from_json(text.substr(key.size(), eol - key.size()));
    return true;
}

int cmd_encode(const std::string& problem_path, const std::string& out_path) {
    Problem p = problem_from_json(slurp(problem_path));
    Encoded enc = encode(p);
    for (const std::string& w : enc.warnings) std::cerr << "warning: " << w << "\n";
    spit(out_path, problem_header(p) + dump_text(enc.formula));
    std::cout << "wrote " << out_path << "\n";
    return kExitSat;
}

int cmd_solve(const std::string& path, const std::string& heuristic, double timeout,
              const std::string& plan_path) {
    std::string text = slurp(path);
    Problem p;
    bool have_problem = embedded_problem(text, p);
    Formula f = parse_text(text);

    OdeTheory th(f);
    Solver s(f);
    s.set_theory(&th);
    std::unique_ptr<StaticOrderHeuristic> h;
    if (heuristic != "vsids") {
        h = make_heuristic(f, heuristic);
        s.set_heuristic(h.get());
    }
    if (timeout > 0) s.set_time_budget(timeout);

    SolveStatus st = s.solve();
    const SolverStats& ss = s.stats();
    std::cout << (st == SolveStatus::Sat ? "sat"
                  : st == SolveStatus::Unsat ? "unsat" : "timeout")
              << " (" << ss.conflicts << " conflicts, " << ss.decisions << " decisions, "
              << ss.theory_propagations << " theory propagations)\n";

    if (st == SolveStatus::Sat && !plan_path.empty()) {
        if (!have_problem)
            throw SodeError("plan extraction needs a file produced by the encode command");
        Encoded enc;
        enc.formula = parse_text(text);
        for (const TrainDef& t : p.trains)
            enc.succ.push_back(successor_relation(p.network, p.connection(t.id)));
        Plan plan = extract_plan(p, enc, s, th);
        spit(plan_path, plan_to_json(plan, p));
        std::cout << "wrote " << plan_path << "\n";
    }
    return st == SolveStatus::Sat ? kExitSat
           : st == SolveStatus::Unsat ? kExitUnsat : kExitTimeout;
}

int cmd_check(const std::string& plan_path, const std::string& problem_path) {
    Problem p = problem_from_json(slurp(problem_path));
    Plan plan = plan_from_json(slurp(plan_path), p);
    ValidationReport rep = validate_plan(plan, p);
    for (const Violation& v : rep.violations) {
        std::cout << "violation(" << v.rule << ")";
        if (v.step >= 0) std::cout << " step " << v.step;
        std::cout << ": " << v.detail << "\n";
    }
    std::cout << (rep.ok ? "ok" : "invalid") << " (" << rep.violations.size()
              << " violations)\n";
    return rep.ok ? kExitSat : kExitUsage;
}

int cmd_bench(const std::string& scenario, int nt, int ns, double bnd, double timeout,
              const std::string& out_path) {
    std::vector<BenchResult> rs = run_suite({{scenario, nt, ns, bnd}}, timeout, &std::cerr);
    std::string csv = results_csv(rs);
    if (out_path.empty())
        std::cout << csv;
    else
        spit(out_path, csv);
    return kExitSat;
}

int cmd_stats(const std::string& path) {
    Formula f = parse_text(slurp(path));
    FormulaStats st = f.stats();
    std::cout << "vars: " << f.num_vars() << " (" << st.n_bool << " bool, " << st.n_real
              << " real, " << st.n_fun << " functional, " << st.n_aux << " aux)\n"
              << "atoms: " << st.n_atoms << " (" << st.n_cmp << " comparisons, " << st.n_diff
              << " flows, " << st.n_inv << " invariants)\n"
              << "groups: " << f.groups().size() << "\n"
              << "clauses: " << st.n_clauses << " (" << st.n_literals << " literals)\n";
    for (const auto& [rule, rs] : st.by_rule)
        if (!rule.empty())
            std::cout << "  " << rule << ": " << rs.clauses << " clauses, " << rs.literals
                      << " literals\n";
    return kExitSat;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SAT-modulo-ODE solver for railway scheduling"};
    app.require_subcommand(1);

    std::string problem_path, out_path, in_path, plan_path;
    std::string heuristic = "railway", scenario = "all";
    double timeout = 7200, bnd = 100;
    int nt = 2, ns = 2;

    CLI::App* enc = app.add_subcommand("encode", "encode a problem into a formula file");
    enc->add_option("--problem", problem_path, "problem json")->required();
    enc->add_option("-o,--out", out_path, "output .sode file")->required();

    CLI::App* sol = app.add_subcommand("solve", "solve a formula file");
    sol->add_option("file", in_path, ".sode file")->required();
    sol->add_option("--heuristic", heuristic, "bmc|initial|railway|vsids")
        ->check(CLI::IsMember({"bmc", "initial", "railway", "vsids"}));
    sol->add_option("--timeout", timeout, "time budget in seconds");
    sol->add_option("--dump-plan", plan_path, "write the plan as json when satisfiable");

    CLI::App* chk = app.add_subcommand("check", "validate a plan against a problem");
    chk->add_option("--plan", plan_path, "plan json")->required();
    chk->add_option("--problem", problem_path, "problem json")->required();

    CLI::App* ben = app.add_subcommand("bench", "run a generated scenario");
    ben->add_option("--scenario", scenario, "nop|last|all")
        ->check(CLI::IsMember({"nop", "last", "all"}));
    ben->add_option("--nt", nt, "number of trains");
    ben->add_option("--ns", ns, "number of station groups");
    ben->add_option("--bnd", bnd, "timing bound in seconds");
    ben->add_option("--timeout", timeout, "time budget in seconds");
    ben->add_option("--out", out_path, "results csv path");

    CLI::App* sta = app.add_subcommand("stats", "print formula statistics");
    sta->add_option("file", in_path, ".sode file")->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (enc->parsed()) return cmd_encode(problem_path, out_path);
        if (sol->parsed()) return cmd_solve(in_path, heuristic, timeout, plan_path);
        if (chk->parsed()) return cmd_check(plan_path, problem_path);
        if (ben->parsed()) return cmd_bench(scenario, nt, ns, bnd, timeout, out_path);
        if (sta->parsed()) return cmd_stats(in_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
