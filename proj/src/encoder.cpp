#include "sode/encoder.hpp"

#include <algorithm>
#include <functional>
#include <set>

namespace sode {

namespace {

constexpr double kGuard = 1e-9;
constexpr double kSentinel = 1e18;

struct TrainCtx {
    const TrainDef*                 def = nullptr;
    const SuccessorInfo*            si = nullptr;
    std::vector<int>                segs;         // used segments, sorted
    std::map<int, std::vector<int>> succs, preds;
    std::vector<int>                visit_nodes;

    // per-step variables
    std::vector<VarId> idle, steady, acc, brake, away, enter, finished;
    std::map<int, std::vector<VarId>> back, front, next;
    std::vector<VarId> a, vmax, nvm, bvm, fvm, bdm, fdm, brk_on;
    std::vector<VarId> d, v, brk_d, back_d, back_v;

    // per-step atoms
    std::vector<AtomId> bx, fx, a0;   // back/front exceed, standstill
};

} // namespace

std::string enc_var(const std::string& train, const std::string& field, int step) {
    return train + "." + field + "@" + std::to_string(step);
}

Encoded encode(const Problem& p, bool include_finish) {
    p.validate();
    Encoded out;
    Formula& f = out.formula;
    const int J = p.config.J;
    const int S = J + 1;   // steps 0..J
    const int nt = (int)p.trains.size();

    std::vector<TrainCtx> ts(nt);
    for (int i = 0; i < nt; i++) {
        TrainCtx& c = ts[i];
        c.def = &p.trains[i];
        out.succ.push_back(successor_relation(p.network, p.connection(c.def->id)));
    }
    for (int i = 0; i < nt; i++) {
        TrainCtx& c = ts[i];
        c.si = &out.succ[i];
        for (const std::string& w : c.si->warnings) out.warnings.push_back(w);
        c.segs.assign(c.si->used_segments.begin(), c.si->used_segments.end());
        for (auto [s1, s2] : c.si->seg_pairs) {
            c.succs[s1].push_back(s2);
            c.preds[s2].push_back(s1);
        }
        std::set<int> vn;
        for (auto [n, s] : c.si->node_to_seg) vn.insert(n);
        for (auto [s, n] : c.si->seg_to_node) vn.insert(n);
        if (c.si->start_node >= 0) vn.insert(c.si->start_node);
        c.visit_nodes.assign(vn.begin(), vn.end());
    }

    auto seg_name = [&](int s) { return p.network.segments[s].id; };
    auto seg_len = [&](int s) { return p.network.segments[s].length; };
    auto seg_lim = [&](int s) { return p.network.segments[s].limit; };

    // --- declarations ---
    std::vector<VarId> gt(S), gtau(S);
    for (int j = 0; j < S; j++) {
        gt[j] = f.declare(VarKind::Real, "t@" + std::to_string(j), j);
        gtau[j] = f.declare(VarKind::Real, "tau@" + std::to_string(j), j);
    }
    for (TrainCtx& c : ts) {
        const std::string& T = c.def->id;
        auto dv = [&](std::vector<VarId>& col, const char* fld, VarKind k) {
            col.resize(S);
            for (int j = 0; j < S; j++) col[j] = f.declare(k, enc_var(T, fld, j), j);
        };
        dv(c.enter, "enter", VarKind::Boolean);
        dv(c.idle, "idle", VarKind::Boolean);
        dv(c.steady, "steady", VarKind::Boolean);
        dv(c.acc, "acc", VarKind::Boolean);
        dv(c.brake, "brake", VarKind::Boolean);
        dv(c.away, "away", VarKind::Boolean);
        dv(c.finished, "finished", VarKind::Boolean);
        for (int s : c.segs) {
            auto dpos = [&](std::map<int, std::vector<VarId>>& m, const char* role) {
                std::vector<VarId>& col = m[s];
                col.resize(S);
                for (int j = 0; j < S; j++)
                    col[j] = f.declare(VarKind::Boolean,
                                       enc_var(T, std::string(role) + "_" + seg_name(s), j), j);
            };
            dpos(c.back, "back");
            dpos(c.front, "front");
            dpos(c.next, "next");
        }
        dv(c.a, "a", VarKind::Real);
        dv(c.vmax, "v_max", VarKind::Real);
        dv(c.nvm, "next_v_max", VarKind::Real);
        dv(c.bvm, "back_v_max", VarKind::Real);
        dv(c.fvm, "front_v_max", VarKind::Real);
        dv(c.bdm, "back_d_max", VarKind::Real);
        dv(c.fdm, "front_d_max", VarKind::Real);
        dv(c.brk_on, "brake_on", VarKind::Real);
        dv(c.d, "d", VarKind::Functional);
        dv(c.v, "v", VarKind::Functional);
        dv(c.brk_d, "brake_d", VarKind::Functional);
        dv(c.back_d, "back_d", VarKind::Functional);
        dv(c.back_v, "back_v", VarKind::Functional);
    }

    std::vector<GroupId> gsync(S);
    std::vector<std::vector<GroupId>> gasync(nt, std::vector<GroupId>(S));
    for (int j = 0; j < S; j++) {
        gsync[j] = f.make_group(p.config.rho, true, gtau[j]);
        for (TrainCtx& c : ts) {
            f.add_group_member(gsync[j], c.d[j]);
            f.add_group_member(gsync[j], c.v[j]);
            f.add_group_member(gsync[j], c.brk_d[j]);
        }
    }
    for (int i = 0; i < nt; i++)
        for (int j = 0; j < S; j++) {
            gasync[i][j] = f.make_group(p.config.rho, false);
            f.add_group_member(gasync[i][j], ts[i].back_d[j]);
            f.add_group_member(gasync[i][j], ts[i].back_v[j]);
        }

    // --- helpers ---
    auto AL = [&](AtomId a) { return mkLit(f.abs_var(a)); };
    auto EQ = [&](TermId l, TermId r) { return f.atom_cmp(l, CmpOp::Eq, r); };
    auto unit = [&](AtomId a) { f.add_clause({AL(a)}); };
    auto P = [&](VarId v) { return mkLit(v, false); };
    auto N = [&](VarId v) { return mkLit(v, true); };

    // --- global time chaining ---
    f.set_rule("time");
    unit(EQ(f.t_var(gt[0]), f.t_const(0)));
    for (int j = 0; j + 1 < S; j++)
        unit(EQ(f.t_var(gt[j + 1]), f.t_add(f.t_var(gt[j]), f.t_var(gtau[j]))));

    for (int i = 0; i < nt; i++) {
        TrainCtx& c = ts[i];
        const double A = c.def->accel, B = c.def->decel;
        const double Vmax = c.def->vmax, L = c.def->length;
        c.bx.resize(S);
        c.fx.resize(S);
        c.a0.resize(S);

        for (int j = 0; j < S; j++) {
            // shared comparison atoms
            TermId dmax_t = f.t_min({f.t_var(c.bdm[j]), f.t_var(c.fdm[j])});
            c.bx[j] = f.atom_cmp(f.t_final(c.d[j]), CmpOp::Ge,
                                 f.t_sub(f.t_var(c.bdm[j]), f.t_const(kGuard)));
            c.fx[j] = f.atom_cmp(f.t_final(c.d[j]), CmpOp::Ge,
                                 f.t_sub(f.t_var(c.fdm[j]), f.t_const(kGuard)));
            c.a0[j] = f.atom_cmp(f.t_init(c.v[j]), CmpOp::Le, f.t_const(kGuard));

            f.set_rule("mode.onehot");
            f.add_clause({P(c.idle[j]), P(c.steady[j]), P(c.acc[j]), P(c.brake[j])});
            VarId ms[4] = {c.idle[j], c.steady[j], c.acc[j], c.brake[j]};
            for (int x = 0; x < 4; x++)
                for (int y = x + 1; y < 4; y++) f.add_clause({N(ms[x]), N(ms[y])});

            f.set_rule("mode.accel");
            AtomId a_zero = EQ(f.t_var(c.a[j]), f.t_const(0));
            AtomId a_acc = EQ(f.t_var(c.a[j]), f.t_const(A));
            AtomId a_brk = EQ(f.t_var(c.a[j]), f.t_const(-B));
            f.add_clause({N(c.idle[j]), AL(a_zero)});
            f.add_clause({N(c.steady[j]), AL(a_zero)});
            f.add_clause({P(c.idle[j]), P(c.steady[j]), ~AL(a_zero)});
            f.add_clause({N(c.acc[j]), AL(a_acc)});
            f.add_clause({P(c.acc[j]), ~AL(a_acc)});
            f.add_clause({N(c.brake[j]), AL(a_brk)});
            f.add_clause({P(c.brake[j]), ~AL(a_brk)});

            f.set_rule("mode.guard");
            AtomId acc_room = f.atom_cmp(f.t_init(c.v[j]), CmpOp::Lt,
                                         f.t_sub(f.t_var(c.vmax[j]), f.t_const(kGuard)));
            f.add_clause({N(c.idle[j]), AL(c.a0[j]), P(c.away[j])});
            f.add_clause({N(c.brake[j]), ~AL(c.a0[j])});
            f.add_clause({N(c.acc[j]), AL(acc_room)});
            f.add_clause({N(c.steady[j]), P(c.finished[j]), ~AL(acc_room)});

            if (j + 1 < S) {
                f.set_rule("mode.jump");
                f.add_clause({N(c.idle[j]), P(c.idle[j + 1]), P(c.acc[j + 1])});
                f.add_clause({N(c.steady[j]), N(c.idle[j + 1]), P(c.away[j + 1])});
                f.add_clause({N(c.acc[j]), N(c.idle[j + 1]), P(c.away[j + 1])});
            }

            f.set_rule("dyn");
            unit(f.atom_diff(c.d[j], f.t_fun(c.v[j])));
            unit(f.atom_diff(c.v[j], f.t_var(c.a[j])));
            unit(EQ(f.t_init(c.d[j]), f.t_const(0)));
            if (j + 1 < S) unit(EQ(f.t_init(c.v[j + 1]), f.t_final(c.v[j])));
            unit(f.atom_inv(gsync[j], f.t_fun(c.d[j]), CmpOp::Le, dmax_t));
            unit(f.atom_inv(gsync[j], f.t_fun(c.v[j]), CmpOp::Le, f.t_var(c.vmax[j])));
            unit(f.atom_inv(gsync[j], f.t_fun(c.v[j]), CmpOp::Ge, f.t_const(0)));

            f.set_rule("limits.vmax");
            AtomId cond = f.atom_cmp(f.t_init(c.v[j]), CmpOp::Ge, f.t_var(c.nvm[j]));
            AtomId vm_hi = EQ(f.t_var(c.vmax[j]),
                              f.t_min({f.t_const(Vmax), f.t_var(c.bvm[j]), f.t_var(c.fvm[j])}));
            AtomId vm_lo = EQ(f.t_var(c.vmax[j]),
                              f.t_min({f.t_const(Vmax), f.t_var(c.bvm[j]), f.t_var(c.fvm[j]),
                                       f.t_var(c.nvm[j])}));
            f.add_clause({~AL(cond), AL(vm_hi)});
            f.add_clause({AL(cond), AL(vm_lo)});

            f.set_rule("brake");
            f.add_clause({N(c.acc[j]), AL(EQ(f.t_var(c.brk_on[j]), f.t_const(1)))});
            f.add_clause({P(c.acc[j]), AL(EQ(f.t_var(c.brk_on[j]), f.t_const(0)))});
            unit(f.atom_diff(c.brk_d[j],
                             f.t_mul(f.t_const(-A / B),
                                     f.t_mul(f.t_var(c.brk_on[j]), f.t_fun(c.v[j])))));
            AtomId brk_inv = f.atom_inv(gsync[j], f.t_fun(c.d[j]), CmpOp::Le, f.t_fun(c.brk_d[j]));
            f.add_clause({~AL(brk_inv), N(c.brake[j])});
            f.add_clause({AL(brk_inv), P(c.brake[j])});

            f.set_rule("brake.async");
            unit(f.atom_diff(c.back_d[j], f.t_neg(f.t_fun(c.back_v[j]))));
            unit(f.atom_diff(c.back_v[j], f.t_const(B)));
            unit(f.atom_inv(gasync[i][j], f.t_fun(c.back_d[j]), CmpOp::Ge, f.t_const(0)));
            unit(f.atom_inv(gasync[i][j], f.t_fun(c.back_v[j]), CmpOp::Le, f.t_init(c.v[j])));

            f.set_rule("brake.async.init");
            f.add_clause({~AL(cond), AL(EQ(f.t_init(c.back_d[j]), f.t_var(c.fdm[j])))});
            f.add_clause({~AL(cond), AL(EQ(f.t_init(c.back_v[j]), f.t_var(c.nvm[j])))});
            f.add_clause({AL(cond), AL(EQ(f.t_init(c.back_d[j]), f.t_const(kSentinel)))});
            f.add_clause({AL(cond), AL(EQ(f.t_init(c.back_v[j]), f.t_init(c.v[j])))});

            f.set_rule("brake.async.final");
            unit(EQ(f.t_init(c.brk_d[j]), f.t_final(c.back_d[j])));

            if (j + 1 < S) {
                f.set_rule("brake.mode");
                AtomId dj = f.atom_cmp(f.t_final(c.d[j]), CmpOp::Ge, f.t_final(c.brk_d[j]));
                AtomId cs = f.atom_cmp(f.t_init(c.v[j]), CmpOp::Gt, f.t_var(c.nvm[j]));
                f.add_clause({N(c.acc[j]), N(c.brake[j + 1]), AL(dj)});
                f.add_clause({N(c.acc[j]), ~AL(dj), P(c.brake[j + 1])});
                f.add_clause({N(c.steady[j]), N(c.brake[j + 1]), AL(dj)});
                f.add_clause({N(c.steady[j]), N(c.brake[j + 1]), AL(cs)});
                f.add_clause({N(c.steady[j]), ~AL(dj), ~AL(cs), P(c.brake[j + 1])});

                f.set_rule("brake.keep");
                AtomId fd_end = f.atom_cmp(f.t_final(c.d[j]), CmpOp::Ge,
                                           f.t_sub(dmax_t, f.t_const(kGuard)));
                AtomId bd0 = f.atom_cmp(f.t_final(c.back_d[j + 1]), CmpOp::Le,
                                        f.t_const(kGuard));
                f.add_clause({N(c.brake[j]), AL(fd_end), P(c.brake[j + 1])});
                f.add_clause({N(c.brake[j]), ~AL(fd_end), N(c.brake[j + 1]), AL(bd0)});
                f.add_clause({N(c.brake[j]), ~AL(fd_end), ~AL(bd0), P(c.brake[j + 1])});
            }

            f.set_rule("limits.pos");
            {
                std::vector<Lit> back_any, front_any, next_any;
                for (int s : c.segs) {
                    back_any.push_back(P(c.back[s][j]));
                    front_any.push_back(P(c.front[s][j]));
                    next_any.push_back(P(c.next[s][j]));
                    f.add_clause({N(c.back[s][j]),
                                  AL(EQ(f.t_var(c.bvm[j]), f.t_const(seg_lim(s))))});
                    f.add_clause({N(c.front[s][j]),
                                  AL(EQ(f.t_var(c.fvm[j]), f.t_const(seg_lim(s))))});
                    double nl = c.si->stop_entry_segments.count(s) ? 0.0 : seg_lim(s);
                    f.add_clause({N(c.next[s][j]),
                                  AL(EQ(f.t_var(c.nvm[j]), f.t_const(nl)))});
                }
                auto with_def = [&](std::vector<Lit> any, VarId var) {
                    any.push_back(AL(EQ(f.t_var(var), f.t_const(Vmax))));
                    f.add_clause(std::move(any));
                };
                with_def(back_any, c.bvm[j]);
                with_def(front_any, c.fvm[j]);
                with_def(next_any, c.nvm[j]);
            }

            f.set_rule("limits.bookkeep");
            f.add_clause({N(c.enter[j]), AL(EQ(f.t_var(c.bdm[j]), f.t_const(L)))});
            for (int s : c.si->start_segments)
                f.add_clause({N(c.enter[j]), N(c.front[s][j]),
                              AL(EQ(f.t_var(c.fdm[j]), f.t_const(seg_len(s))))});
            f.add_clause({N(c.away[j]), AL(EQ(f.t_var(c.bdm[j]), f.t_const(kSentinel)))});
            f.add_clause({N(c.away[j]), AL(EQ(f.t_var(c.fdm[j]), f.t_const(kSentinel)))});
            f.add_clause({N(c.finished[j]), AL(EQ(f.t_var(c.fdm[j]), f.t_const(kSentinel)))});
            if (j + 1 < S) {
                TermId fd = f.t_final(c.d[j]);
                TermId bd_move = f.t_sub(f.t_var(c.bdm[j]), fd);
                TermId fd_move = f.t_sub(f.t_var(c.fdm[j]), fd);
                f.add_clause({P(c.away[j]), P(c.idle[j]), AL(c.bx[j]),
                              AL(EQ(f.t_var(c.bdm[j + 1]), bd_move))});
                f.add_clause({P(c.away[j]), P(c.idle[j]), P(c.finished[j]), AL(c.fx[j]),
                              AL(EQ(f.t_var(c.fdm[j + 1]), fd_move))});
                for (int s : c.segs) {
                    f.add_clause({P(c.away[j]), P(c.idle[j]), ~AL(c.bx[j]), N(c.front[s][j]),
                                  AL(EQ(f.t_var(c.bdm[j + 1]),
                                        f.t_add(bd_move, f.t_const(seg_len(s)))))});
                    f.add_clause({P(c.away[j]), P(c.idle[j]), ~AL(c.fx[j]), N(c.next[s][j]),
                                  AL(EQ(f.t_var(c.fdm[j + 1]),
                                        f.t_add(fd_move, f.t_const(seg_len(s)))))});
                }
                f.add_clause({N(c.idle[j]), P(c.enter[j + 1]),
                              AL(EQ(f.t_var(c.bdm[j + 1]), f.t_var(c.bdm[j])))});
                f.add_clause({N(c.idle[j]), P(c.enter[j + 1]),
                              AL(EQ(f.t_var(c.fdm[j + 1]), f.t_var(c.fdm[j])))});
            }

            // positional constraints
            f.set_rule("pos.next");
            for (int s : c.segs) {
                if (c.si->ending_segments.count(s)) continue;
                auto it = c.succs.find(s);
                if (it == c.succs.end()) continue;
                std::vector<Lit> cl{P(c.idle[j]), N(c.front[s][j])};
                for (int s2 : it->second) cl.push_back(P(c.next[s2][j]));
                f.add_clause(std::move(cl));
            }
            f.set_rule("pos.next_adj");
            for (int s : c.segs) {
                std::vector<Lit> cl{N(c.next[s][j])};
                auto it = c.preds.find(s);
                if (it != c.preds.end())
                    for (int s1 : it->second) cl.push_back(P(c.front[s1][j]));
                f.add_clause(std::move(cl));
            }
            f.set_rule("pos.not_next");
            for (int s : c.segs) {
                f.add_clause({N(c.idle[j]), N(c.next[s][j])});
                std::vector<Lit> cl{N(c.next[s][j])};
                for (int s1 : c.segs) cl.push_back(P(c.front[s1][j]));
                f.add_clause(std::move(cl));
            }
            f.set_rule("pos.mutual");
            for (size_t x = 0; x < c.segs.size(); x++)
                for (size_t y = x + 1; y < c.segs.size(); y++) {
                    int s1 = c.segs[x], s2 = c.segs[y];
                    f.add_clause({N(c.back[s1][j]), N(c.back[s2][j])});
                    f.add_clause({N(c.front[s1][j]), N(c.front[s2][j])});
                    f.add_clause({N(c.next[s1][j]), N(c.next[s2][j])});
                }
            f.set_rule("pos.mutual_next");
            for (int s : c.segs) {
                f.add_clause({N(c.back[s][j]), N(c.next[s][j])});
                f.add_clause({N(c.front[s][j]), N(c.next[s][j])});
            }
            f.set_rule("pos.order");
            for (auto [s1, s2] : c.si->seg_pairs) {
                f.add_clause({N(c.front[s1][j]), N(c.back[s2][j])});
                f.add_clause({N(c.next[s1][j]), N(c.back[s2][j])});
                f.add_clause({N(c.next[s1][j]), N(c.front[s2][j])});
            }
            if (j + 1 < S) {
                f.set_rule("pos.progress");
                for (int s : c.segs) {
                    f.add_clause({P(c.idle[j]), N(c.back[s][j + 1]),
                                  P(c.back[s][j]), P(c.front[s][j])});
                    f.add_clause({P(c.idle[j]), N(c.front[s][j]),
                                  P(c.front[s][j + 1]), P(c.back[s][j + 1])});
                    f.add_clause({P(c.idle[j]), N(c.front[s][j + 1]),
                                  P(c.front[s][j]), P(c.next[s][j])});
                    f.add_clause({P(c.idle[j]), N(c.next[s][j]),
                                  P(c.next[s][j + 1]), P(c.front[s][j + 1])});
                }
            }

            // entering / leaving machinery
            f.set_rule("enter");
            {
                std::vector<Lit> cl{N(c.enter[j])};
                for (int s : c.si->start_segments) cl.push_back(P(c.front[s][j]));
                f.add_clause(std::move(cl));
                for (int s : c.segs) f.add_clause({N(c.enter[j]), N(c.back[s][j])});
            }
            f.set_rule("away");
            {
                std::vector<Lit> cl{P(c.away[j])};
                for (int s : c.segs) {
                    f.add_clause({N(c.away[j]), N(c.back[s][j])});
                    f.add_clause({N(c.away[j]), N(c.front[s][j])});
                    cl.push_back(P(c.back[s][j]));
                    cl.push_back(P(c.front[s][j]));
                }
                f.add_clause(std::move(cl));
            }
            f.set_rule("finished");
            for (int s : c.segs) f.add_clause({N(c.finished[j]), N(c.front[s][j])});
            f.set_rule("away.idle");
            f.add_clause({N(c.enter[j]), N(c.idle[j])});
            f.add_clause({N(c.away[j]), P(c.idle[j])});
            f.set_rule("away.mutual");
            f.add_clause({N(c.enter[j]), N(c.finished[j])});
            if (j + 1 < S) {
                f.set_rule("away.jump");
                f.add_clause({N(c.enter[j]), N(c.enter[j + 1])});
                f.add_clause({N(c.finished[j]), P(c.finished[j + 1])});
                f.set_rule("away.mutual");
                f.add_clause({P(c.away[j]), N(c.enter[j + 1])});
                f.add_clause({N(c.away[j]), N(c.finished[j]), P(c.away[j + 1])});
                f.add_clause({N(c.away[j]), P(c.finished[j]), N(c.finished[j + 1])});
                f.add_clause({N(c.away[j]), P(c.finished[j]), P(c.away[j + 1]),
                              P(c.enter[j + 1])});
            }

            if (j + 1 < S) {
                f.set_rule("transfer");
                for (auto [s1, s2] : c.si->seg_pairs) {
                    f.add_clause({P(c.idle[j]), N(c.back[s1][j]), N(c.front[s2][j]),
                                  ~AL(c.bx[j]), P(c.back[s2][j + 1])});
                    f.add_clause({P(c.idle[j]), N(c.back[s1][j]), N(c.front[s2][j]),
                                  AL(c.bx[j]), P(c.back[s1][j + 1])});
                    f.add_clause({P(c.idle[j]), N(c.front[s1][j]), N(c.next[s2][j]),
                                  ~AL(c.fx[j]), P(c.front[s2][j + 1])});
                    f.add_clause({P(c.idle[j]), N(c.front[s1][j]), N(c.next[s2][j]),
                                  AL(c.fx[j]), P(c.front[s1][j + 1])});
                }
                f.set_rule("transfer.start");
                {
                    std::vector<Lit> base{P(c.idle[j])};
                    for (int s : c.segs) base.push_back(P(c.back[s][j]));
                    std::vector<Lit> fwd = base;
                    fwd.push_back(~AL(c.bx[j]));
                    for (int s : c.si->start_segments) fwd.push_back(P(c.back[s][j + 1]));
                    f.add_clause(std::move(fwd));
                    for (int s : c.si->start_segments) {
                        std::vector<Lit> rev = base;
                        rev.push_back(AL(c.bx[j]));
                        rev.push_back(N(c.back[s][j + 1]));
                        f.add_clause(std::move(rev));
                    }
                }
                f.set_rule("transfer.idle");
                for (int s : c.segs) {
                    f.add_clause({N(c.idle[j]), P(c.enter[j + 1]),
                                  N(c.back[s][j]), P(c.back[s][j + 1])});
                    f.add_clause({N(c.idle[j]), P(c.enter[j + 1]),
                                  P(c.back[s][j]), N(c.back[s][j + 1])});
                    f.add_clause({N(c.idle[j]), P(c.enter[j + 1]),
                                  N(c.front[s][j]), P(c.front[s][j + 1])});
                    f.add_clause({N(c.idle[j]), P(c.enter[j + 1]),
                                  P(c.front[s][j]), N(c.front[s][j + 1])});
                }
                f.set_rule("transfer.stay");
                for (int s : c.segs)
                    f.add_clause({N(c.back[s][j]), N(c.front[s][j]), P(c.back[s][j + 1])});
                f.set_rule("transfer.finish");
                for (int s : c.si->ending_segments) {
                    f.add_clause({N(c.front[s][j]), ~AL(c.fx[j]), P(c.finished[j + 1])});
                    f.add_clause({N(c.front[s][j]), AL(c.fx[j]), P(c.front[s][j + 1])});
                }
                f.set_rule("transfer.away");
                for (int s : c.si->ending_segments) {
                    f.add_clause({N(c.back[s][j]), ~AL(c.bx[j]), P(c.away[j + 1])});
                    f.add_clause({N(c.back[s][j]), AL(c.bx[j]), P(c.back[s][j + 1])});
                }
            }
        }
    }

    // inter-train mutual exclusion, one clause set per unordered train pair
    f.set_rule("mutual");
    for (int i1 = 0; i1 < nt; i1++)
        for (int i2 = i1 + 1; i2 < nt; i2++) {
            TrainCtx &ca = ts[i1], &cb = ts[i2];
            for (int s : ca.segs) {
                if (!cb.si->used_segments.count(s)) continue;
                for (int j = 0; j < S; j++) {
                    VarId ra[3] = {ca.back[s][j], ca.front[s][j], ca.next[s][j]};
                    VarId rb[3] = {cb.back[s][j], cb.front[s][j], cb.next[s][j]};
                    for (VarId x : ra)
                        for (VarId y : rb) f.add_clause({N(x), N(y)});
                }
            }
        }

    // initial and final conditions
    f.set_rule("init");
    {
        std::vector<Lit> some_enter;
        for (TrainCtx& c : ts) {
            unit(EQ(f.t_init(c.v[0]), f.t_const(0)));
            f.add_clause({P(c.enter[0]), P(c.away[0])});
            f.add_clause({N(c.finished[0])});
            some_enter.push_back(P(c.enter[0]));
        }
        f.add_clause(std::move(some_enter));
    }
    if (include_finish) {
        f.set_rule("finish");
        for (TrainCtx& c : ts) {
            f.add_clause({P(c.finished[J])});
            f.add_clause({P(c.away[J])});
        }
    }

    // visit events
    f.set_rule("visit");
    for (TrainCtx& c : ts) {
        const std::string& T = c.def->id;
        for (int n : c.visit_nodes) {
            const std::string& nid = p.network.nodes[n].id;
            std::vector<int> in_segs, out_segs;
            for (auto [s, hn] : c.si->seg_to_node)
                if (hn == n) in_segs.push_back(s);
            for (auto [tn, s] : c.si->node_to_seg)
                if (tn == n) out_segs.push_back(s);
            for (int j = 0; j < S; j++) {
                VarId av = f.declare(VarKind::Boolean, enc_var(T, "arrive_" + nid, j), j);
                VarId dv = f.declare(VarKind::Boolean, enc_var(T, "depart_" + nid, j), j);
                // arrivals
                if (j == 0) {
                    f.add_clause({N(av)});
                } else if (c.si->end_nodes.count(n)) {
                    std::vector<BRef> prev;
                    for (int s : in_segs) prev.push_back(b_var(c.front[s][j - 1]));
                    f.assert_expr(b_iff(b_var(av),
                                        b_and({b_or(std::move(prev)),
                                               b_var(c.finished[j])})));
                } else if (out_segs.empty()) {
                    f.add_clause({N(av)});
                } else {
                    std::vector<BRef> fresh;
                    for (int s : out_segs)
                        fresh.push_back(b_and({b_not(b_var(c.front[s][j - 1])),
                                               b_var(c.front[s][j])}));
                    f.assert_expr(b_iff(b_var(av),
                                        b_and({b_or(std::move(fresh)),
                                               b_not(b_var(c.enter[j]))})));
                }
                // departures
                if (n == c.si->start_node) {
                    f.assert_expr(b_iff(b_var(dv), b_var(c.enter[j])));
                } else if (j == 0 || c.si->end_nodes.count(n) || out_segs.empty()) {
                    f.add_clause({N(dv)});
                } else {
                    std::vector<BRef> on_out;
                    for (int s : out_segs) on_out.push_back(b_var(c.front[s][j]));
                    f.assert_expr(b_iff(b_var(dv),
                                        b_and({b_or(std::move(on_out)), b_var(c.acc[j]),
                                               b_atom(c.a0[j])})));
                }
            }
        }
    }

    // schedule constraints
    f.set_rule("sched");
    {
        // pre-create falsified visit vars for unreachable references
        std::function<void(const SchedPtr&)> scan = [&](const SchedPtr& s) {
            auto ensure = [&](const VisitRef& vr) {
                if (vr.train.empty()) return;
                p.train(vr.train);
                if (p.network.node_index(vr.node) < 0)
                    throw SodeError("schedule references unknown node " + vr.node);
                std::string fld = (vr.departure ? "depart_" : "arrive_") + vr.node;
                if (f.find_var(enc_var(vr.train, fld, 0)) != var_Undef) return;
                out.warnings.push_back("schedule visit of node " + vr.node +
                                       " is unreachable for train " + vr.train);
                for (int j = 0; j < S; j++)
                    f.add_clause({N(f.declare(VarKind::Boolean, enc_var(vr.train, fld, j), j))});
            };
            switch (s->kind) {
                case SchedExpr::Ordering:
                case SchedExpr::RelTiming:
                    ensure(s->v1);
                    ensure(s->v2);
                    break;
                case SchedExpr::AbsTiming:
                    ensure(s->v1);
                    break;
                default:
                    for (const SchedPtr& k : s->kids) scan(k);
            }
        };
        for (const SchedPtr& s : p.schedule) scan(s);

        auto vlit = [&](const VisitRef& vr, int k) {
            std::string fld = (vr.departure ? "depart_" : "arrive_") + vr.node;
            VarId v = f.find_var(enc_var(vr.train, fld, k));
            return P(v);
        };
        auto cl = [&](const std::vector<Lit>& prefix, std::vector<Lit> rest) {
            rest.insert(rest.begin(), prefix.begin(), prefix.end());
            f.add_clause(std::move(rest));
        };

        auto emit_order = [&](VisitRef v1, VisitRef v2, CmpOp op,
                              const std::vector<Lit>& prefix) {
            if (op == CmpOp::Gt) { std::swap(v1, v2); op = CmpOp::Lt; }
            else if (op == CmpOp::Ge) { std::swap(v1, v2); op = CmpOp::Le; }
            if (op == CmpOp::Eq) {
                for (int k = 0; k < S; k++) {
                    cl(prefix, {~vlit(v1, k), vlit(v2, k)});
                    cl(prefix, {~vlit(v2, k), vlit(v1, k)});
                }
                return;
            }
            for (int k = 0; k < S; k++) {
                int kk = op == CmpOp::Lt ? k : k - 1;
                for (int l = 0; l <= kk && l < S; l++) cl(prefix, {~vlit(v1, k), ~vlit(v2, l)});
            }
            for (int l = 0; l < S; l++) {
                int ll = op == CmpOp::Lt ? l - 1 : l;
                std::vector<Lit> rest{~vlit(v2, l)};
                for (int k = 0; k <= ll && k < S; k++) rest.push_back(vlit(v1, k));
                cl(prefix, std::move(rest));
            }
        };
        auto emit_abs = [&](const VisitRef& v, CmpOp op, double xi,
                            const std::vector<Lit>& prefix) {
            if (op == CmpOp::Eq) throw SodeError("equality is not supported on timings");
            for (int k = 0; k < S; k++) {
                AtomId at = f.atom_cmp(f.t_var(gt[k]), op, f.t_const(xi));
                cl(prefix, {~vlit(v, k), AL(at)});
                if (op == CmpOp::Lt || op == CmpOp::Le) {
                    std::vector<Lit> rest{AL(at)};
                    for (int l = 0; l < k; l++) rest.push_back(vlit(v, l));
                    cl(prefix, std::move(rest));
                }
            }
        };
        auto emit_rel = [&](const VisitRef& v1, const VisitRef& v2, CmpOp op, double xi,
                            const std::vector<Lit>& prefix) {
            if (op == CmpOp::Eq) throw SodeError("equality is not supported on timings");
            for (int j = 0; j < S; j++)
                for (int k = j; k < S; k++) {
                    AtomId at = f.atom_cmp(f.t_sub(f.t_var(gt[k]), f.t_var(gt[j])), op,
                                           f.t_const(xi));
                    cl(prefix, {~vlit(v1, j), ~vlit(v2, k), AL(at)});
                    if (op == CmpOp::Lt || op == CmpOp::Le) {
                        std::vector<Lit> rest{~vlit(v1, j), AL(at)};
                        for (int l = j; l < k; l++) rest.push_back(vlit(v2, l));
                        cl(prefix, std::move(rest));
                    }
                }
        };

        int nsel = 0;
        std::function<void(const SchedPtr&, bool, std::vector<Lit>)> emit =
            [&](const SchedPtr& s, bool neg, std::vector<Lit> prefix) {
                switch (s->kind) {
                    case SchedExpr::Not:
                        emit(s->kids[0], !neg, std::move(prefix));
                        return;
                    case SchedExpr::And:
                    case SchedExpr::Or: {
                        bool conj = (s->kind == SchedExpr::And) != neg;
                        if (conj) {
                            for (const SchedPtr& k : s->kids) emit(k, neg, prefix);
                        } else {
                            std::vector<Lit> choice = prefix;
                            for (const SchedPtr& k : s->kids) {
                                VarId g = f.declare(VarKind::Boolean,
                                                    "sel" + std::to_string(nsel++));
                                choice.push_back(P(g));
                                emit(k, neg, {N(g)});
                            }
                            f.add_clause(std::move(choice));
                        }
                        return;
                    }
                    case SchedExpr::Ordering: {
                        VisitRef v1 = s->v1, v2 = s->v2;
                        CmpOp op = s->op;
                        if (neg) {
                            switch (op) {
                                case CmpOp::Lt: std::swap(v1, v2); op = CmpOp::Le; break;
                                case CmpOp::Le: std::swap(v1, v2); op = CmpOp::Lt; break;
                                case CmpOp::Gt: op = CmpOp::Le; break;
                                case CmpOp::Ge: op = CmpOp::Lt; break;
                                default:
                                    throw SodeError("cannot negate an equality ordering");
                            }
                        }
                        emit_order(v1, v2, op, prefix);
                        return;
                    }
                    case SchedExpr::AbsTiming:
                        emit_abs(s->v1, neg ? negate_op(s->op) : s->op, s->xi, prefix);
                        return;
                    case SchedExpr::RelTiming:
                        emit_rel(s->v1, s->v2, neg ? negate_op(s->op) : s->op, s->xi, prefix);
                        return;
                }
            };
        for (const SchedPtr& s : p.schedule) emit(s, false, {});
    }

    f.freeze();
    return out;
}

std::map<std::string, RuleStats> encoder_rule_count(const Problem& p) {
    return encode(p).formula.stats().by_rule;
}

} // namespace sode
