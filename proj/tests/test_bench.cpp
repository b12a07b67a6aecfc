#include <doctest.h>

#include "sode/bench.hpp"
#include "sode/plan.hpp"

#include <sstream>

using namespace sode;

TEST_CASE("results csv has the fixed column layout") {
    BenchResult r;
    r.c = {"last", 2, 3, 1000};
    r.result = "sat";
    r.wall_s = 1.25;
    r.conflicts = 7;
    r.decisions = 9;
    std::string csv = results_csv({r});
    std::istringstream is(csv);
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "scenario,nt,ns,bnd,result,wall_s,conflicts,decisions");
    REQUIRE(std::getline(is, line));
    CHECK(line == "last,2,3,1000,sat,1.250000,7,9");
    CHECK(!std::getline(is, line));

    CHECK(results_csv({}) == "scenario,nt,ns,bnd,result,wall_s,conflicts,decisions\n");
}

TEST_CASE("suite run solves a scenario and reports stable statistics") {
    std::vector<BenchCase> cases = {{"last", 1, 2, 1000}, {"last", 1, 2, 100}};
    std::vector<BenchResult> a = run_suite(cases, 600);
    REQUIRE(a.size() == 2);
    CHECK(a[0].result == "sat");
    CHECK(a[1].result == "unsat");
    CHECK(a[0].wall_s > 0);

    std::vector<BenchResult> b = run_suite(cases, 600);
    for (size_t i = 0; i < a.size(); i++) {
        CHECK(a[i].result == b[i].result);
        CHECK(a[i].conflicts == b[i].conflicts);
        CHECK(a[i].decisions == b[i].decisions);
    }
}
