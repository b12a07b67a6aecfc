#include "sode/ode.hpp"
#include "sode/text.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sode {

double MapEnv::real_value(VarId v) const {
    auto it = reals.find(v);
    if (it == reals.end()) throw EvalError("unbound real variable id " + std::to_string(v));
    return it->second;
}
double MapEnv::init_value(VarId f) const {
    auto it = inits.find(f);
    if (it == inits.end()) throw EvalError("unbound init value id " + std::to_string(f));
    return it->second;
}
double MapEnv::final_value(VarId f) const {
    auto it = finals.find(f);
    if (it == finals.end()) throw EvalError("unbound final value id " + std::to_string(f));
    return it->second;
}

bool cmp_holds(CmpOp op, double l, double r, double tol) {
    switch (op) {
        case CmpOp::Lt: return l < r + tol;
        case CmpOp::Le: return l <= r + tol;
        case CmpOp::Gt: return l > r - tol;
        case CmpOp::Ge: return l >= r - tol;
        case CmpOp::Eq: return std::fabs(l - r) <= tol;
    }
    return false;
}

namespace {

// Evaluator shared by the public eval_term and the integrator inner loop.
struct Eval {
    const Formula& f;
    const TermEnv* env;
    // members being integrated: current pointwise values and initial values
    const std::unordered_map<VarId, int>* member_idx = nullptr;
    const double* y = nullptr;
    const double* y0 = nullptr;

    double run(TermId tid) const {
        const Term& t = f.term(tid);
        switch (t.kind) {
            case TermKind::Const: return t.cval;
            case TermKind::RealVar:
                if (!env) throw EvalError("unbound variable " + f.var(t.var).name);
                return env->real_value(t.var);
            case TermKind::FunVar: {
                if (member_idx) {
                    auto it = member_idx->find(t.var);
                    if (it != member_idx->end()) return y[it->second];
                }
                throw EvalError("pointwise value of non-member " + f.var(t.var).name);
            }
            case TermKind::Init: {
                if (member_idx) {
                    auto it = member_idx->find(t.var);
                    if (it != member_idx->end()) return y0[it->second];
                }
                if (!env) throw EvalError("unbound init of " + f.var(t.var).name);
                return env->init_value(t.var);
            }
            case TermKind::Final:
                if (!env) throw EvalError("unbound final of " + f.var(t.var).name);
                return env->final_value(t.var);
            case TermKind::Add: return run(t.kids[0]) + run(t.kids[1]);
            case TermKind::Sub: return run(t.kids[0]) - run(t.kids[1]);
            case TermKind::Mul: return run(t.kids[0]) * run(t.kids[1]);
            case TermKind::Div: return run(t.kids[0]) / run(t.kids[1]);
            case TermKind::Neg: return -run(t.kids[0]);
            case TermKind::Min: {
                double m = run(t.kids[0]);
                for (size_t i = 1; i < t.kids.size(); i++) m = std::min(m, run(t.kids[i]));
                return m;
            }
            case TermKind::Max: {
                double m = run(t.kids[0]);
                for (size_t i = 1; i < t.kids.size(); i++) m = std::max(m, run(t.kids[i]));
                return m;
            }
        }
        throw EvalError("bad term");
    }
};

} // namespace

double eval_term(const Formula& f, TermId t, const TermEnv& env) {
    Eval e{f, &env, nullptr, nullptr, nullptr};
    return e.run(t);
}

IntegrationResult integrate(const OdeSystem& sys) {
    if (!sys.formula) throw EvalError("ode system without formula");
    const Formula& F = *sys.formula;
    const size_t n = sys.eqs.size();
    if (sys.init.size() != n) throw EvalError("init values do not match equations");
    if (sys.rho <= 0) throw EvalError("nonpositive timeout");

    std::unordered_map<VarId, int> midx;
    for (size_t i = 0; i < n; i++) midx.emplace(sys.eqs[i].fvar, (int)i);

    std::vector<double> y0(sys.init), y(sys.init);
    Eval ev{F, sys.env, &midx, y.data(), y0.data()};

    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n), ycur(n), ynext(n);
    auto deriv = [&](const std::vector<double>& state, std::vector<double>& out) {
        std::copy(state.begin(), state.end(), y.begin());
        for (size_t i = 0; i < n; i++) out[i] = ev.run(sys.eqs[i].rhs);
    };
    auto rk4 = [&](const std::vector<double>& from, double h, std::vector<double>& to) {
        deriv(from, k1);
        for (size_t i = 0; i < n; i++) tmp[i] = from[i] + 0.5 * h * k1[i];
        deriv(tmp, k2);
        for (size_t i = 0; i < n; i++) tmp[i] = from[i] + 0.5 * h * k2[i];
        deriv(tmp, k3);
        for (size_t i = 0; i < n; i++) tmp[i] = from[i] + h * k3[i];
        deriv(tmp, k4);
        for (size_t i = 0; i < n; i++)
            to[i] = from[i] + h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    };
    auto violated = [&](const std::vector<double>& state, int inv) {
        std::copy(state.begin(), state.end(), y.begin());
        const OdeInvariant& iv = sys.invariants[inv];
        return !cmp_holds(iv.op, ev.run(iv.lhs), ev.run(iv.rhs), kInvariantTol);
    };
    auto any_violated = [&](const std::vector<double>& state) {
        for (size_t i = 0; i < sys.invariants.size(); i++)
            if (violated(state, (int)i)) return (int)i;
        return -1;
    };

    // invariants must hold at the starting point
    {
        int bad = any_violated(y0);
        if (bad >= 0) throw ZeroLengthIntegration(sys.invariants[bad].id);
    }

    IntegrationResult res;
    res.traj.resize(n);
    for (size_t i = 0; i < n; i++) {
        res.traj[i].fvar = sys.eqs[i].fvar;
        res.traj[i].times.push_back(0);
        res.traj[i].values.push_back(y0[i]);
    }
    auto record = [&](double t, const std::vector<double>& state) {
        for (size_t i = 0; i < n; i++) {
            res.traj[i].times.push_back(t);
            res.traj[i].values.push_back(state[i]);
        }
    };

    ycur = y0;
    double tcur = 0;
    for (long step = 1; tcur < sys.rho; step++) {
        double tnext = std::min((double)step * sys.h, sys.rho);
        double hstep = tnext - tcur;
        if (hstep <= 0) break;
        rk4(ycur, hstep, ynext);
        for (size_t i = 0; i < n; i++)
            if (!std::isfinite(ynext[i]))
                throw NumericError("non-finite value for " + F.var(sys.eqs[i].fvar).name);

        // localize the earliest crossing among invariants violated at tnext
        int best = -1;
        double best_hi = 0, best_lo = 0;
        std::vector<double> cand(n);
        for (size_t i = 0; i < sys.invariants.size(); i++) {
            if (!violated(ynext, (int)i)) continue;
            double lo = 0, hi = hstep;
            while (hi - lo > kBisectTol) {
                double mid = 0.5 * (lo + hi);
                rk4(ycur, mid, cand);
                if (violated(cand, (int)i)) hi = mid;
                else lo = mid;
            }
            if (best < 0 || hi < best_hi) {
                best = (int)i;
                best_hi = hi;
                best_lo = lo;
            }
        }
        if (best >= 0) {
            std::vector<double> yfin(n);
            if (best_lo > 0) rk4(ycur, best_lo, yfin);
            else yfin = ycur;
            double tau = tcur + best_lo;
            if (tau <= 0) throw ZeroLengthIntegration(sys.invariants[best].id);
            record(tau, yfin);
            res.tau = tau;
            res.reason = {StopKind::InvariantViolated, sys.invariants[best].id, tcur + best_hi};
            return res;
        }
        record(tnext, ynext);
        ycur = ynext;
        tcur = tnext;
    }
    res.tau = sys.rho;
    res.reason = {StopKind::TimeoutReached, -1, sys.rho};
    return res;
}

std::string trajectories_csv(const Formula& f, const IntegrationResult& r) {
    std::ostringstream out;
    out << "time";
    for (const Trajectory& t : r.traj) out << ',' << f.var(t.fvar).name;
    out << '\n';
    if (r.traj.empty()) return out.str();
    for (size_t row = 0; row < r.traj[0].times.size(); row++) {
        out << format_double(r.traj[0].times[row]);
        for (const Trajectory& t : r.traj) out << ',' << format_double(t.values[row]);
        out << '\n';
    }
    return out.str();
}

} // namespace sode
