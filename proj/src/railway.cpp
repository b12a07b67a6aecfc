#include "sode/railway.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <functional>
#include <sstream>

namespace sode {

using nlohmann::json;

int NetworkDef::node_index(const std::string& id) const {
    for (int i = 0; i < (int)nodes.size(); i++)
        if (nodes[i].id == id) return i;
    return -1;
}

int NetworkDef::seg_index(const std::string& id) const {
    for (int i = 0; i < (int)segments.size(); i++)
        if (segments[i].id == id) return i;
    return -1;
}

const TrainDef& Problem::train(const std::string& id) const {
    for (const TrainDef& t : trains)
        if (t.id == id) return t;
    throw SodeError("unknown train: " + id);
}

const ConnectionDef& Problem::connection(const std::string& train) const {
    for (const ConnectionDef& c : connections)
        if (c.train == train) return c;
    throw SodeError("no connection for train: " + train);
}

// --- schedule expressions ---

namespace {

SchedPtr mk(SchedExpr e) { return std::make_shared<const SchedExpr>(std::move(e)); }

CmpOp parse_op(const std::string& s) {
    if (s == "<") return CmpOp::Lt;
    if (s == "<=") return CmpOp::Le;
    if (s == ">") return CmpOp::Gt;
    if (s == ">=") return CmpOp::Ge;
    if (s == "=") return CmpOp::Eq;
    throw SodeError("bad comparison operator: " + s);
}

struct SexpParser {
    const std::string& s;
    size_t pos = 0;

    explicit SexpParser(const std::string& text) : s(text) {}

    void skip() { while (pos < s.size() && std::isspace((unsigned char)s[pos])) pos++; }

    std::string token() {
        skip();
        if (pos >= s.size()) throw SodeError("unexpected end of schedule expression");
        if (s[pos] == '(' || s[pos] == ')') return std::string(1, s[pos++]);
        size_t b = pos;
        while (pos < s.size() && !std::isspace((unsigned char)s[pos]) &&
               s[pos] != '(' && s[pos] != ')')
            pos++;
        return s.substr(b, pos - b);
    }

    std::string peek() {
        size_t save = pos;
        std::string t = token();
        pos = save;
        return t;
    }

    void expect(const std::string& t) {
        std::string got = token();
        if (got != t) throw SodeError("expected '" + t + "', got '" + got + "'");
    }

    VisitRef visit() {
        expect("(");
        std::string kind = token();
        if (kind != "arrive" && kind != "depart")
            throw SodeError("expected arrive/depart, got '" + kind + "'");
        VisitRef v;
        v.departure = kind == "depart";
        v.train = token();
        v.node = token();
        expect(")");
        return v;
    }

    SchedPtr expr() {
        expect("(");
        std::string head = token();
        SchedExpr e{};
        if (head == "order") {
            e.kind = SchedExpr::Ordering;
            e.v1 = visit();
            e.v2 = visit();
            e.op = parse_op(token());
        } else if (head == "rel") {
            e.kind = SchedExpr::RelTiming;
            e.v1 = visit();
            e.v2 = visit();
            e.op = parse_op(token());
            e.xi = std::stod(token());
        } else if (head == "abs") {
            e.kind = SchedExpr::AbsTiming;
            e.v1 = visit();
            e.op = parse_op(token());
            e.xi = std::stod(token());
        } else if (head == "and" || head == "or") {
            e.kind = head == "and" ? SchedExpr::And : SchedExpr::Or;
            while (peek() != ")") e.kids.push_back(expr());
            if (e.kids.empty()) throw SodeError("empty " + head);
        } else if (head == "not") {
            e.kind = SchedExpr::Not;
            e.kids.push_back(expr());
        } else {
            throw SodeError("unknown schedule form: " + head);
        }
        if (e.kind != SchedExpr::And && e.kind != SchedExpr::Or) { /* no trailing kids */ }
        expect(")");
        return mk(std::move(e));
    }
};

void visit_text(std::ostream& os, const VisitRef& v) {
    os << "(" << (v.departure ? "depart" : "arrive") << " " << v.train << " " << v.node << ")";
}

void sched_text(std::ostream& os, const SchedPtr& s) {
    switch (s->kind) {
        case SchedExpr::Ordering:
            os << "(order ";
            visit_text(os, s->v1);
            os << " ";
            visit_text(os, s->v2);
            os << " " << op_name(s->op) << ")";
            break;
        case SchedExpr::RelTiming:
            os << "(rel ";
            visit_text(os, s->v1);
            os << " ";
            visit_text(os, s->v2);
            os << " " << op_name(s->op) << " " << s->xi << ")";
            break;
        case SchedExpr::AbsTiming:
            os << "(abs ";
            visit_text(os, s->v1);
            os << " " << op_name(s->op) << " " << s->xi << ")";
            break;
        case SchedExpr::And:
        case SchedExpr::Or:
            os << (s->kind == SchedExpr::And ? "(and" : "(or");
            for (const SchedPtr& k : s->kids) {
                os << " ";
                sched_text(os, k);
            }
            os << ")";
            break;
        case SchedExpr::Not:
            os << "(not ";
            sched_text(os, s->kids[0]);
            os << ")";
            break;
    }
}

} // namespace

SchedPtr sched_ordering(VisitRef v1, VisitRef v2, CmpOp op) {
    SchedExpr e{};
    e.kind = SchedExpr::Ordering;
    e.v1 = std::move(v1);
    e.v2 = std::move(v2);
    e.op = op;
    return mk(std::move(e));
}

SchedPtr sched_rel(VisitRef v1, VisitRef v2, CmpOp op, double xi) {
    SchedExpr e{};
    e.kind = SchedExpr::RelTiming;
    e.v1 = std::move(v1);
    e.v2 = std::move(v2);
    e.op = op;
    e.xi = xi;
    return mk(std::move(e));
}

SchedPtr sched_abs(VisitRef v, CmpOp op, double xi) {
    SchedExpr e{};
    e.kind = SchedExpr::AbsTiming;
    e.v1 = std::move(v);
    e.op = op;
    e.xi = xi;
    return mk(std::move(e));
}

SchedPtr sched_and(std::vector<SchedPtr> kids) {
    SchedExpr e{};
    e.kind = SchedExpr::And;
    e.kids = std::move(kids);
    return mk(std::move(e));
}

SchedPtr sched_or(std::vector<SchedPtr> kids) {
    SchedExpr e{};
    e.kind = SchedExpr::Or;
    e.kids = std::move(kids);
    return mk(std::move(e));
}

SchedPtr sched_not(SchedPtr kid) {
    SchedExpr e{};
    e.kind = SchedExpr::Not;
    e.kids.push_back(std::move(kid));
    return mk(std::move(e));
}

std::string sched_to_text(const SchedPtr& s) {
    std::ostringstream os;
    os.precision(17);
    sched_text(os, s);
    return os.str();
}

SchedPtr sched_from_text(const std::string& text) {
    SexpParser p(text);
    SchedPtr e = p.expr();
    p.skip();
    if (p.pos != text.size()) throw SodeError("trailing input in schedule expression");
    return e;
}

// --- problem validation ---

void Problem::validate() const {
    if (config.J < 1) throw SodeError("config.J must be at least 1");
    if (config.rho <= 0) throw SodeError("config.rho must be positive");
    for (const SegmentDef& s : network.segments) {
        for (const SegEnd& e : {s.a, s.b}) {
            if (e.node < 0 || e.node >= (int)network.nodes.size())
                throw SodeError("segment " + s.id + " references unknown node");
            if (e.side != 0 && e.side != 1)
                throw SodeError("segment " + s.id + " has a side outside {0,1}");
        }
        if (s.length <= 0) throw SodeError("segment " + s.id + " needs positive length");
        if (s.limit <= 0) throw SodeError("segment " + s.id + " needs positive limit");
    }
    for (const TrainDef& t : trains)
        if (t.accel <= 0 || t.decel <= 0 || t.vmax <= 0 || t.length <= 0)
            throw SodeError("train " + t.id + " needs positive parameters");
    for (const ConnectionDef& c : connections) {
        train(c.train);
        if (c.nodes.empty()) throw SodeError("empty connection for train " + c.train);
        for (size_t i = 0; i < c.nodes.size(); i++) {
            int n = network.node_index(c.nodes[i]);
            if (n < 0) throw SodeError("connection references unknown node " + c.nodes[i]);
            if (network.nodes[n].boundary && i != 0 && i + 1 != c.nodes.size())
                throw SodeError("boundary node " + c.nodes[i] + " listed mid-connection");
        }
        if (!network.nodes[network.node_index(c.nodes[0])].boundary)
            throw SodeError("connection for " + c.train + " must start at a boundary node");
    }
    for (const TrainDef& t : trains) connection(t.id);
}

// --- json ---

Problem problem_from_json(const std::string& text) {
    json j = json::parse(text);
    Problem p;
    for (const json& jn : j.at("network").at("nodes")) {
        NodeDef n;
        n.id = jn.at("id").get<std::string>();
        n.boundary = jn.value("boundary", false);
        n.stop = jn.value("stop", false);
        p.network.nodes.push_back(std::move(n));
    }
    auto end_of = [&](const json& je) {
        SegEnd e;
        e.node = p.network.node_index(je.at(0).get<std::string>());
        if (e.node < 0) throw SodeError("unknown node: " + je.at(0).get<std::string>());
        e.side = je.at(1).get<int>();
        return e;
    };
    for (const json& js : j.at("network").at("segments")) {
        SegmentDef s;
        s.id = js.at("id").get<std::string>();
        s.a = end_of(js.at("from"));
        s.b = end_of(js.at("to"));
        s.length = js.at("length").get<double>();
        s.limit = js.at("limit").get<double>();
        p.network.segments.push_back(std::move(s));
    }
    for (const json& jt : j.at("trains")) {
        TrainDef t;
        t.id = jt.at("id").get<std::string>();
        t.accel = jt.at("accel").get<double>();
        t.decel = jt.at("decel").get<double>();
        t.vmax = jt.at("v_max").get<double>();
        t.length = jt.at("length").get<double>();
        p.trains.push_back(std::move(t));
    }
    for (const json& jc : j.at("connections")) {
        ConnectionDef c;
        c.train = jc.at("train").get<std::string>();
        for (const json& n : jc.at("nodes")) c.nodes.push_back(n.get<std::string>());
        p.connections.push_back(std::move(c));
    }
    if (j.contains("schedule"))
        for (const json& js : j.at("schedule"))
            p.schedule.push_back(sched_from_text(js.get<std::string>()));
    p.config.J = j.at("config").at("J").get<int>();
    p.config.rho = j.at("config").at("rho").get<double>();
    p.validate();
    return p;
}

std::string problem_to_json(const Problem& p) {
    json j;
    j["network"]["nodes"] = json::array();
    for (const NodeDef& n : p.network.nodes) {
        json jn{{"id", n.id}};
        if (n.boundary) jn["boundary"] = true;
        if (n.stop) jn["stop"] = true;
        j["network"]["nodes"].push_back(std::move(jn));
    }
    j["network"]["segments"] = json::array();
    for (const SegmentDef& s : p.network.segments)
        j["network"]["segments"].push_back(
            {{"id", s.id},
             {"from", {p.network.nodes[s.a.node].id, s.a.side}},
             {"to", {p.network.nodes[s.b.node].id, s.b.side}},
             {"length", s.length},
             {"limit", s.limit}});
    j["trains"] = json::array();
    for (const TrainDef& t : p.trains)
        j["trains"].push_back({{"id", t.id},
                               {"accel", t.accel},
                               {"decel", t.decel},
                               {"v_max", t.vmax},
                               {"length", t.length}});
    j["connections"] = json::array();
    for (const ConnectionDef& c : p.connections)
        j["connections"].push_back({{"train", c.train}, {"nodes", c.nodes}});
    j["schedule"] = json::array();
    for (const SchedPtr& s : p.schedule) j["schedule"].push_back(sched_to_text(s));
    j["config"] = {{"J", p.config.J}, {"rho", p.config.rho}};
    return j.dump(2) + "\n";
}

// --- successor relation ---

namespace {

// directed segment: seg * 2 + dir, dir 0 runs a->b
inline int tail_node(const SegmentDef& s, int dir) { return dir ? s.b.node : s.a.node; }
inline int tail_side(const SegmentDef& s, int dir) { return dir ? s.b.side : s.a.side; }
inline int head_node(const SegmentDef& s, int dir) { return dir ? s.a.node : s.b.node; }
inline int head_side(const SegmentDef& s, int dir) { return dir ? s.a.side : s.b.side; }

} // namespace

SuccessorInfo successor_relation(const NetworkDef& net, const ConnectionDef& conn) {
    SuccessorInfo out;
    int ns = (int)net.segments.size();
    int k = (int)conn.nodes.size();
    std::vector<int> listed(k);
    for (int i = 0; i < k; i++) {
        listed[i] = net.node_index(conn.nodes[i]);
        if (listed[i] < 0) throw SodeError("connection references unknown node " + conn.nodes[i]);
    }
    out.start_node = listed[0];

    auto advance = [&](int p, int node) {
        while (p < k && listed[p] == node) p++;
        return p;
    };
    int nds = ns * 2;
    auto state = [&](int ds, int p) { return ds * (k + 1) + p; };
    int nstates = nds * (k + 1);

    // adjacency over directed segments, transfers must switch node sides
    std::vector<std::vector<int>> adj(nds);
    for (int s1 = 0; s1 < ns; s1++)
        for (int d1 = 0; d1 < 2; d1++)
            for (int s2 = 0; s2 < ns; s2++)
                for (int d2 = 0; d2 < 2; d2++) {
                    const SegmentDef &a = net.segments[s1], &b = net.segments[s2];
                    if (head_node(a, d1) != tail_node(b, d2)) continue;
                    if (head_side(a, d1) == tail_side(b, d2)) continue;
                    adj[s1 * 2 + d1].push_back(s2 * 2 + d2);
                }

    std::vector<char> fwd(nstates, 0), bwd(nstates, 0);
    std::vector<int> queue;
    std::vector<int> starts;
    for (int s = 0; s < ns; s++)
        for (int d = 0; d < 2; d++)
            if (tail_node(net.segments[s], d) == listed[0]) {
                int p = advance(0, listed[0]);
                int st = state(s * 2 + d, p);
                starts.push_back(st);
                if (!fwd[st]) {
                    fwd[st] = 1;
                    queue.push_back(st);
                }
            }
    auto step_of = [&](int st, int& ds, int& p) { ds = st / (k + 1); p = st % (k + 1); };
    while (!queue.empty()) {
        int st = queue.back();
        queue.pop_back();
        int ds, p;
        step_of(st, ds, p);
        int h = head_node(net.segments[ds / 2], ds & 1);
        int p2 = advance(p, h);
        for (int ds2 : adj[ds]) {
            int st2 = state(ds2, p2);
            if (!fwd[st2]) {
                fwd[st2] = 1;
                queue.push_back(st2);
            }
        }
    }

    auto is_goal = [&](int st) {
        int ds, p;
        step_of(st, ds, p);
        int h = head_node(net.segments[ds / 2], ds & 1);
        return net.nodes[h].boundary && advance(p, h) == k;
    };

    // backward reachability restricted to forward-reachable states
    std::vector<std::vector<int>> radj(nstates);
    for (int st = 0; st < nstates; st++) {
        if (!fwd[st]) continue;
        int ds, p;
        step_of(st, ds, p);
        int h = head_node(net.segments[ds / 2], ds & 1);
        int p2 = advance(p, h);
        for (int ds2 : adj[ds]) {
            int st2 = state(ds2, p2);
            if (fwd[st2]) radj[st2].push_back(st);
        }
    }
    for (int st = 0; st < nstates; st++)
        if (fwd[st] && is_goal(st) && !bwd[st]) {
            bwd[st] = 1;
            queue.push_back(st);
        }
    while (!queue.empty()) {
        int st = queue.back();
        queue.pop_back();
        for (int st2 : radj[st])
            if (!bwd[st2]) {
                bwd[st2] = 1;
                queue.push_back(st2);
            }
    }

    auto useful = [&](int st) { return fwd[st] && bwd[st]; };

    std::set<int> listed_stops;
    for (int i = 0; i < k; i++)
        if (!net.nodes[listed[i]].boundary && net.nodes[listed[i]].stop)
            listed_stops.insert(listed[i]);

    for (int st = 0; st < nstates; st++) {
        if (!useful(st)) continue;
        int ds, p;
        step_of(st, ds, p);
        int seg = ds / 2, dir = ds & 1;
        const SegmentDef& sd = net.segments[seg];
        out.used_segments.insert(seg);
        int tn = tail_node(sd, dir), hn = head_node(sd, dir);
        out.node_to_seg.insert({tn, seg});
        out.seg_to_node.insert({seg, hn});
        if (listed_stops.count(tn)) out.stop_entry_segments.insert(seg);
        if (is_goal(st)) {
            out.ending_segments.insert(seg);
            out.end_nodes.insert(hn);
        }
        int p2 = advance(p, hn);
        for (int ds2 : adj[ds]) {
            int st2 = state(ds2, p2);
            if (useful(st2)) out.seg_pairs.insert({seg, ds2 / 2});
        }
    }
    for (int st : starts)
        if (useful(st)) {
            out.feasible = true;
            out.start_segments.insert(st / (k + 1) / 2);
        }
    if (!out.feasible)
        out.warnings.push_back("connection for train " + conn.train +
                               " cannot be completed on this network");

    // route count over useful states, -1 when a cycle makes it unbounded
    std::vector<long long> cnt(nstates, -2);   // -2 unvisited, -3 on stack
    bool cyclic = false;
    std::function<long long(int)> count = [&](int st) -> long long {
        if (cnt[st] == -3) {
            cyclic = true;
            return 0;
        }
        if (cnt[st] >= 0) return cnt[st];
        cnt[st] = -3;
        long long c = is_goal(st) ? 1 : 0;
        int ds, p;
        step_of(st, ds, p);
        int h = head_node(net.segments[ds / 2], ds & 1);
        int p2 = advance(p, h);
        for (int ds2 : adj[ds]) {
            int st2 = state(ds2, p2);
            if (useful(st2)) c += count(st2);
        }
        cnt[st] = c;
        return c;
    };
    long long total = 0;
    {
        std::set<int> seen;
        for (int st : starts)
            if (useful(st) && seen.insert(st).second) total += count(st);
    }
    out.path_count = cyclic ? -1 : total;
    return out;
}

} // namespace sode
