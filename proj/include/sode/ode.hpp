#pragma once

#include "sode/formula.hpp"

#include <unordered_map>

namespace sode {

// Provides values for symbols external to the integrated system.
struct TermEnv {
    virtual ~TermEnv() = default;
    virtual double real_value(VarId v) const = 0;
    virtual double init_value(VarId f) const = 0;
    virtual double final_value(VarId f) const = 0;
};

struct MapEnv : TermEnv {
    std::unordered_map<VarId, double> reals, inits, finals;
    double real_value(VarId v) const override;
    double init_value(VarId f) const override;
    double final_value(VarId f) const override;
};

struct OdeEquation {
    VarId  fvar;
    TermId rhs;
};

struct OdeInvariant {
    int    id;
    TermId lhs;
    CmpOp  op;
    TermId rhs;
};

struct OdeSystem {
    const Formula*            formula = nullptr;
    std::vector<OdeEquation>  eqs;
    std::vector<double>       init;   // parallel to eqs
    std::vector<OdeInvariant> invariants;
    double                    rho = 0;
    double                    h = 0.05;
    const TermEnv*            env = nullptr;
};

struct Trajectory {
    VarId               fvar = var_Undef;
    std::vector<double> times;
    std::vector<double> values;
    double init_value() const { return values.front(); }
    double final_value() const { return values.back(); }
    double tau() const { return times.back(); }
};

enum class StopKind : uint8_t { InvariantViolated, TimeoutReached };

struct StopReason {
    StopKind kind;
    int      invariant_id = -1;
    double   crossing_time = 0;
};

struct IntegrationResult {
    std::vector<Trajectory> traj;   // parallel to system equations
    double                  tau = 0;
    StopReason              reason{StopKind::TimeoutReached};
};

struct ZeroLengthIntegration : SodeError {
    int invariant_id;
    explicit ZeroLengthIntegration(int inv)
        : SodeError("invariant " + std::to_string(inv) + " violated at t=0"), invariant_id(inv) {}
};

struct NumericError : SodeError {
    using SodeError::SodeError;
};

// Comparison slack used when checking invariants along a trajectory.
constexpr double kInvariantTol = 1e-9;
// Bisection stops once the straddling interval is at most this wide.
constexpr double kBisectTol = 1e-12;

bool cmp_holds(CmpOp op, double lhs, double rhs, double tol);

// Fixed-step classic Runge-Kutta with bisection event localization.
// Throws ZeroLengthIntegration if an invariant fails already at t=0.
IntegrationResult integrate(const OdeSystem& sys);

// Plain term evaluation against an environment (no integrated members).
double eval_term(const Formula& f, TermId t, const TermEnv& env);

std::string trajectories_csv(const Formula& f, const IntegrationResult& r);

} // namespace sode
