#include <doctest.h>

#include "sode/ode.hpp"
#include "sode/text.hpp"

#include <cmath>
#include <cstring>
#include <random>

using namespace sode;

namespace {

// Shared fixture: build d'=v, v'=a systems over a tiny formula.
struct Kin {
    Formula f;
    VarId v, d, a;
    Kin() {
        v = f.declare(VarKind::Functional, "v@0", 0);
        d = f.declare(VarKind::Functional, "d@0", 0);
        a = f.declare(VarKind::Real, "a@0", 0);
    }
};

} // namespace

TEST_CASE("v'=2 capped at 40 stops at tau=20") {
    Kin k;
    MapEnv env;
    env.reals[k.a] = 2.0;
    OdeSystem sys;
    sys.formula = &k.f;
    sys.eqs = {{k.v, k.f.t_var(k.a)}};
    sys.init = {0.0};
    sys.invariants = {{0, k.f.t_fun(k.v), CmpOp::Le, k.f.t_const(40)}};
    sys.rho = 30;
    sys.env = &env;
    IntegrationResult r = integrate(sys);
    CHECK(r.reason.kind == StopKind::InvariantViolated);
    CHECK(r.reason.invariant_id == 0);
    CHECK(r.tau == doctest::Approx(20).epsilon(1e-9));
    CHECK(r.traj[0].final_value() == doctest::Approx(40).epsilon(1e-9));
}

TEST_CASE("idle system runs to the timeout") {
    Kin k;
    MapEnv env;
    env.reals[k.a] = 0.0;
    OdeSystem sys;
    sys.formula = &k.f;
    sys.eqs = {{k.v, k.f.t_var(k.a)}, {k.d, k.f.t_fun(k.v)}};
    sys.init = {0.0, 0.0};
    sys.invariants = {{0, k.f.t_fun(k.d), CmpOp::Le, k.f.t_const(0)}};
    sys.rho = 30;
    sys.env = &env;
    IntegrationResult r = integrate(sys);
    CHECK(r.reason.kind == StopKind::TimeoutReached);
    CHECK(r.tau == 30.0);
    CHECK(r.traj[1].final_value() == doctest::Approx(0).epsilon(1e-12));
}

TEST_CASE("distance bound fires before the velocity bound") {
    Kin k;
    MapEnv env;
    env.reals[k.a] = 2.0;
    OdeSystem sys;
    sys.formula = &k.f;
    sys.eqs = {{k.v, k.f.t_var(k.a)}, {k.d, k.f.t_fun(k.v)}};
    sys.init = {0.0, 0.0};
    sys.invariants = {{0, k.f.t_fun(k.d), CmpOp::Le, k.f.t_const(100)},
                      {1, k.f.t_fun(k.v), CmpOp::Le, k.f.t_const(40)}};
    sys.rho = 30;
    sys.env = &env;
    IntegrationResult r = integrate(sys);
    CHECK(r.reason.kind == StopKind::InvariantViolated);
    CHECK(r.reason.invariant_id == 0);
    CHECK(r.tau == doctest::Approx(10).epsilon(1e-9));
    CHECK(r.traj[1].final_value() == doctest::Approx(100).epsilon(1e-9));
    CHECK(r.traj[0].final_value() == doctest::Approx(20).epsilon(1e-9));
}

TEST_CASE("invariant violated at t=0 raises zero_length_integration") {
    Kin k;
    MapEnv env;
    env.reals[k.a] = 1.0;
    OdeSystem sys;
    sys.formula = &k.f;
    sys.eqs = {{k.v, k.f.t_var(k.a)}};
    sys.init = {5.0};
    sys.invariants = {{7, k.f.t_fun(k.v), CmpOp::Le, k.f.t_const(4)}};
    sys.rho = 30;
    sys.env = &env;
    CHECK_THROWS_AS(integrate(sys), ZeroLengthIntegration);
}

TEST_CASE("integration is bitwise deterministic") {
    Kin k;
    MapEnv env;
    env.reals[k.a] = 1.37;
    OdeSystem sys;
    sys.formula = &k.f;
    sys.eqs = {{k.v, k.f.t_var(k.a)}, {k.d, k.f.t_fun(k.v)}};
    sys.init = {0.25, 0.0};
    sys.invariants = {{0, k.f.t_fun(k.d), CmpOp::Le, k.f.t_const(313.7)}};
    sys.rho = 30;
    sys.env = &env;
    IntegrationResult r1 = integrate(sys);
    IntegrationResult r2 = integrate(sys);
    CHECK(trajectories_csv(k.f, r1) == trajectories_csv(k.f, r2));
    CHECK(std::memcmp(&r1.tau, &r2.tau, 8) == 0);
}

TEST_CASE("eval_term evaluates min, scaled products, and finals") {
    Formula f;
    VarId v = f.declare(VarKind::Real, "v");
    VarId d = f.declare(VarKind::Functional, "d@0", 0);
    MapEnv env;
    env.reals[v] = 10.0;
    env.finals[d] = 100.0;
    TermId m = f.t_min({f.t_const(40), f.t_const(30), f.t_const(25)});
    CHECK(eval_term(f, m, env) == 25.0);
    TermId p = f.t_mul(f.t_neg(f.t_div(f.t_const(2), f.t_const(1))), f.t_var(v));
    CHECK(eval_term(f, p, env) == -20.0);
    CHECK(eval_term(f, f.t_final(d), env) == 100.0);
    VarId unbound = f.declare(VarKind::Real, "u");
    CHECK_THROWS_AS(eval_term(f, f.t_var(unbound), env), EvalError);
}

TEST_CASE("csv export has a header and strictly increasing times") {
    Kin k;
    MapEnv env;
    env.reals[k.a] = 2.0;
    OdeSystem sys;
    sys.formula = &k.f;
    sys.eqs = {{k.v, k.f.t_var(k.a)}, {k.d, k.f.t_fun(k.v)}};
    sys.init = {0.0, 0.0};
    sys.invariants = {{0, k.f.t_fun(k.v), CmpOp::Le, k.f.t_const(7)}};
    sys.rho = 30;
    sys.env = &env;
    IntegrationResult r = integrate(sys);
    std::string csv = trajectories_csv(k.f, r);
    CHECK(csv.rfind("time,v@0,d@0\n", 0) == 0);
    for (size_t i = 1; i < r.traj[0].times.size(); i++)
        CHECK(r.traj[0].times[i] > r.traj[0].times[i - 1]);
}

// ---------------------------------------------------------------------
// Closed-form kinematics oracle over random constant-acceleration runs.
// ---------------------------------------------------------------------

namespace {

struct Closed {
    double tau;
    double vf, df;
    int which; // 0 = d cap, 1 = v cap, -1 = timeout
};

Closed closed_form(double a, double v0, double vmax, double dmax, double rho) {
    // first crossing of v == vmax or d == dmax under v=v0+at, d=v0 t + a t^2/2
    double tv = a > 0 ? (vmax - v0) / a : INFINITY;
    double td;
    if (a == 0) td = v0 > 0 ? dmax / v0 : INFINITY;
    else td = (-v0 + std::sqrt(v0 * v0 + 2 * a * dmax)) / a;
    Closed c{};
    c.tau = std::min({tv, td, rho});
    c.which = c.tau >= rho ? -1 : (td < tv ? 0 : 1);
    c.vf = v0 + a * c.tau;
    c.df = v0 * c.tau + 0.5 * a * c.tau * c.tau;
    return c;
}

} // namespace

TEST_CASE("integrator matches closed-form kinematics on 1000 random systems") {
    std::mt19937 rng(424242);
    std::uniform_real_distribution<double> ua(0.5, 4.0), uv(0.0, 10.0), udv(5.0, 30.0),
        ud(20.0, 1000.0), ur(5.0, 50.0);
    Kin k;
    for (int iter = 0; iter < 1000; iter++) {
        double a = ua(rng), v0 = uv(rng), vmax = v0 + udv(rng), dmax = ud(rng), rho = ur(rng);
        MapEnv env;
        env.reals[k.a] = a;
        OdeSystem sys;
        sys.formula = &k.f;
        sys.eqs = {{k.v, k.f.t_var(k.a)}, {k.d, k.f.t_fun(k.v)}};
        sys.init = {v0, 0.0};
        sys.invariants = {{0, k.f.t_fun(k.d), CmpOp::Le, k.f.t_const(dmax)},
                          {1, k.f.t_fun(k.v), CmpOp::Le, k.f.t_const(vmax)}};
        sys.rho = rho;
        sys.env = &env;
        IntegrationResult r = integrate(sys);
        Closed c = closed_form(a, v0, vmax, dmax, rho);
        double tolv = 1e-9 * std::max(1.0, std::fabs(c.vf)) + 4e-9;
        double told = 1e-9 * std::max(1.0, std::fabs(c.df)) + 4e-9;
        REQUIRE(std::fabs(r.traj[0].final_value() - c.vf) <= tolv);
        REQUIRE(std::fabs(r.traj[1].final_value() - c.df) <= told);
        if (c.which < 0) REQUIRE(r.reason.kind == StopKind::TimeoutReached);
        else {
            REQUIRE(r.reason.kind == StopKind::InvariantViolated);
            REQUIRE(r.reason.invariant_id == c.which);
        }

        // stop reason invariant under step halving
        OdeSystem half = sys;
        half.h = sys.h / 2;
        IntegrationResult rh = integrate(half);
        REQUIRE(rh.reason.kind == r.reason.kind);
        REQUIRE(rh.reason.invariant_id == r.reason.invariant_id);

        // the violated predicate holds at tau and fails just beyond it
        if (c.which >= 0) {
            REQUIRE(r.tau <= rho);
            double slack = 2e-9;
            if (c.which == 0) {
                double d_after = v0 * (r.tau + slack) + 0.5 * a * (r.tau + slack) * (r.tau + slack);
                REQUIRE(r.traj[1].final_value() <= dmax + kInvariantTol + 1e-12);
                REQUIRE(d_after > dmax);
            } else {
                double v_after = v0 + a * (r.tau + slack);
                REQUIRE(r.traj[0].final_value() <= vmax + kInvariantTol + 1e-12);
                REQUIRE(v_after > vmax);
            }
        }
    }
}
