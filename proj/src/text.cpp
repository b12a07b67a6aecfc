#include "sode/text.hpp"

#include <cctype>
#include <charconv>
#include <cstring>
#include <sstream>

namespace sode {

std::string format_double(double d) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), d);
    return std::string(buf, res.ptr);
}

// ----------------------------------------------------------------- dump ----

std::string term_to_text(const Formula& f, TermId tid) {
    const Term& t = f.term(tid);
    switch (t.kind) {
        case TermKind::Const:   return format_double(t.cval);
        case TermKind::RealVar:
        case TermKind::FunVar:  return f.var(t.var).name;
        case TermKind::Init:    return "(init " + f.var(t.var).name + ")";
        case TermKind::Final:   return "(final " + f.var(t.var).name + ")";
        default: break;
    }
    const char* head = nullptr;
    switch (t.kind) {
        case TermKind::Add: head = "+"; break;
        case TermKind::Sub: head = "-"; break;
        case TermKind::Mul: head = "*"; break;
        case TermKind::Div: head = "/"; break;
        case TermKind::Neg: head = "-"; break;
        case TermKind::Min: head = "min"; break;
        case TermKind::Max: head = "max"; break;
        default: throw SodeError("bad term");
    }
    std::string s = "(";
    s += head;
    for (TermId k : t.kids) {
        s += ' ';
        s += term_to_text(f, k);
    }
    s += ')';
    return s;
}

std::string atom_to_text(const Formula& f, AtomId aid) {
    const Atom& a = f.atom(aid);
    switch (a.kind) {
        case AtomKind::Comparison:
            return std::string("(") + op_name(a.op) + " " + term_to_text(f, a.lhs) + " " +
                   term_to_text(f, a.rhs) + ")";
        case AtomKind::Diff:
            return "(ode (= (der " + f.var(a.fvar).name + ") " + term_to_text(f, a.rhs) + "))";
        case AtomKind::Invariant:
            return "(inv " + std::to_string(a.group) + " (" + op_name(a.op) + " " +
                   term_to_text(f, a.lhs) + " " + term_to_text(f, a.rhs) + "))";
    }
    throw SodeError("bad atom");
}

static std::string lit_to_text(const Formula& f, Lit l) {
    const Variable& v = f.var(l.var());
    std::string body;
    if (v.atom >= 0 && f.atom(v.atom).kind == AtomKind::Comparison)
        body = atom_to_text(f, v.atom);
    else
        body = v.name;
    return l.neg() ? "(not " + body + ")" : body;
}

std::string dump_text(const Formula& f) {
    std::ostringstream out;
    std::vector<bool> group_done(f.groups().size(), false);
    auto emit_one = [&](GroupId g) {
        const IntegrationGroup& gr = f.group(g);
        out << "(group " << g;
        if (gr.tau != var_Undef) out << " (tau " << f.var(gr.tau).name << ")";
        out << " (rho " << format_double(gr.rho) << ") (sync " << (gr.sync ? 1 : 0)
            << ") (members";
        for (VarId m : gr.members) out << ' ' << f.var(m).name;
        out << "))\n";
        group_done[g] = true;
    };
    // ids must stay sequential for the parser, so emit up to the referenced one
    auto emit_group = [&](GroupId g) {
        for (GroupId k = 0; k <= g; k++)
            if (!group_done[k]) emit_one(k);
    };
    for (const Variable& v : f.vars()) {
        if (v.atom >= 0) {
            const Atom& a = f.atom(v.atom);
            if (a.kind == AtomKind::Invariant) emit_group(a.group);
            out << "(atom " << v.name << ' ' << atom_to_text(f, v.atom) << ")\n";
            continue;
        }
        out << "(declare " << v.name << ' ';
        switch (v.kind) {
            case VarKind::Boolean:    out << "bool"; break;
            case VarKind::Real:       out << "real"; break;
            case VarKind::Functional: out << "fun"; break;
        }
        if (v.step >= 0) out << " :step " << v.step;
        if (v.kind == VarKind::Boolean && !v.decidable) out << " :aux";
        out << ")\n";
    }
    for (GroupId g = 0; g < (GroupId)f.groups().size(); g++) emit_group(g);
    for (int i = 0; i < f.num_clauses(); i++) {
        const Clause& c = f.clause(i);
        out << "(assert";
        if (c.tag) out << " :rule " << f.rule_name(c.tag);
        if (c.lits.size() == 1) {
            out << ' ' << lit_to_text(f, c.lits[0]);
        } else {
            out << " (or";
            for (Lit l : c.lits) out << ' ' << lit_to_text(f, l);
            out << ')';
        }
        out << ")\n";
    }
    return out.str();
}

// ---------------------------------------------------------------- parse ----

namespace {

struct Token {
    enum Kind { LP, RP, Sym, Num, Key, End } kind;
    std::string text;
    double      num = 0;
    int         line = 1, col = 1;
};

struct Lexer {
    const std::string& s;
    size_t pos = 0;
    int    line = 1, col = 1;
    explicit Lexer(const std::string& str) : s(str) {}

    void advance() {
        if (pos < s.size() && s[pos] == '\n') { line++; col = 1; }
        else col++;
        pos++;
    }
    Token next() {
        while (pos < s.size()) {
            char c = s[pos];
            if (c == ';') {
                while (pos < s.size() && s[pos] != '\n') advance();
                continue;
            }
            if (std::isspace((unsigned char)c)) { advance(); continue; }
            break;
        }
        Token t;
        t.line = line;
        t.col = col;
        if (pos >= s.size()) { t.kind = Token::End; return t; }
        char c = s[pos];
        if (c == '(') { t.kind = Token::LP; advance(); return t; }
        if (c == ')') { t.kind = Token::RP; advance(); return t; }
        size_t start = pos;
        while (pos < s.size() && !std::isspace((unsigned char)s[pos]) && s[pos] != '(' &&
               s[pos] != ')' && s[pos] != ';')
            advance();
        t.text = s.substr(start, pos - start);
        if (t.text[0] == ':') { t.kind = Token::Key; return t; }
        const char* b = t.text.c_str();
        char* endp = nullptr;
        double d = std::strtod(b, &endp);
        if (endp == b + t.text.size() &&
            (std::isdigit((unsigned char)t.text[0]) ||
             ((t.text[0] == '-' || t.text[0] == '+' || t.text[0] == '.') && t.text.size() > 1 &&
              (std::isdigit((unsigned char)t.text[1]) || t.text[1] == '.')))) {
            t.kind = Token::Num;
            t.num = d;
            return t;
        }
        t.kind = Token::Sym;
        return t;
    }
};

struct Parser {
    Lexer lex;
    Token cur;
    Formula f;

    explicit Parser(const std::string& s) : lex(s) { cur = lex.next(); }

    [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, cur.line, cur.col); }
    void bump() { cur = lex.next(); }
    void expect(Token::Kind k, const char* what) {
        if (cur.kind != k) fail(std::string("expected ") + what);
        bump();
    }
    std::string sym(const char* what) {
        if (cur.kind != Token::Sym) fail(std::string("expected ") + what);
        std::string s = cur.text;
        bump();
        return s;
    }
    VarId var_ref(const std::string& name) {
        VarId v = f.find_var(name);
        if (v == var_Undef) fail("unknown symbol " + name);
        return v;
    }

    void run() {
        while (cur.kind != Token::End) {
            expect(Token::LP, "(");
            std::string head = sym("form head");
            if (head == "declare") form_declare();
            else if (head == "group") form_group();
            else if (head == "atom") form_atom();
            else if (head == "assert") form_assert();
            else if (head == "ode") {
                AtomId a = parse_ode_body();
                f.add_clause({mkLit(f.abs_var(a))});
                expect(Token::RP, ")");
            } else if (head == "init") {
                VarId v = var_ref(sym("variable"));
                TermId rhs = parse_term();
                AtomId a = f.atom_cmp(f.t_init(v), CmpOp::Eq, rhs);
                f.add_clause({mkLit(f.abs_var(a))});
                expect(Token::RP, ")");
            } else fail("unknown top-level form " + head);
        }
    }

    void form_declare() {
        std::string name = sym("variable name");
        std::string kind = sym("kind");
        VarKind k;
        if (kind == "bool") k = VarKind::Boolean;
        else if (kind == "real") k = VarKind::Real;
        else if (kind == "fun") k = VarKind::Functional;
        else fail("unknown kind " + kind);
        int step = -1;
        bool decidable = true;
        while (cur.kind == Token::Key) {
            if (cur.text == ":step") {
                bump();
                if (cur.kind != Token::Num) fail("expected step number");
                step = (int)cur.num;
                bump();
            } else if (cur.text == ":aux") {
                decidable = false;
                bump();
            } else fail("unknown keyword " + cur.text);
        }
        f.declare(k, name, step, decidable);
        expect(Token::RP, ")");
    }

    void form_group() {
        if (cur.kind != Token::Num) fail("expected group id");
        GroupId want = (GroupId)cur.num;
        bump();
        VarId tau = var_Undef;
        double rho = -1;
        bool sync = true;
        std::vector<VarId> members;
        while (cur.kind == Token::LP) {
            bump();
            std::string key = sym("group field");
            if (key == "tau") tau = var_ref(sym("tau variable"));
            else if (key == "rho") {
                if (cur.kind != Token::Num) fail("expected rho value");
                rho = cur.num;
                bump();
            } else if (key == "sync") {
                if (cur.kind != Token::Num) fail("expected sync flag");
                sync = cur.num != 0;
                bump();
            } else if (key == "members") {
                while (cur.kind == Token::Sym) members.push_back(var_ref(sym("member")));
            } else fail("unknown group field " + key);
            expect(Token::RP, ")");
        }
        expect(Token::RP, ")");
        if (rho <= 0) fail("group missing rho");
        GroupId g = f.make_group(rho, sync, tau);
        if (g != want) fail("group id out of order");
        for (VarId m : members) f.add_group_member(g, m);
    }

    AtomId parse_ode_body() {
        // after "ode": (= (der f) rhs)
        expect(Token::LP, "(");
        if (sym("=") != "=") fail("expected = in ode");
        expect(Token::LP, "(");
        if (sym("der") != "der") fail("expected der");
        VarId fv = var_ref(sym("functional variable"));
        expect(Token::RP, ")");
        TermId rhs = parse_term();
        expect(Token::RP, ")");
        return f.atom_diff(fv, rhs);
    }

    static CmpOp cmp_op(const std::string& s, bool& ok) {
        ok = true;
        if (s == "<") return CmpOp::Lt;
        if (s == "<=") return CmpOp::Le;
        if (s == ">") return CmpOp::Gt;
        if (s == ">=") return CmpOp::Ge;
        if (s == "=") return CmpOp::Eq;
        ok = false;
        return CmpOp::Eq;
    }

    AtomId parse_atom_body(const std::string& head) {
        if (head == "ode") return parse_ode_body();
        if (head == "inv") {
            if (cur.kind != Token::Num) fail("expected group id");
            GroupId g = (GroupId)cur.num;
            bump();
            expect(Token::LP, "(");
            bool ok;
            CmpOp op = cmp_op(sym("comparison"), ok);
            if (!ok) fail("bad comparison operator");
            TermId l = parse_term();
            TermId r = parse_term();
            expect(Token::RP, ")");
            return f.atom_inv(g, l, op, r);
        }
        bool ok;
        CmpOp op = cmp_op(head, ok);
        if (!ok) fail("unknown atom head " + head);
        TermId l = parse_term();
        TermId r = parse_term();
        return f.atom_cmp(l, op, r);
    }

    void form_atom() {
        std::string name = sym("atom name");
        expect(Token::LP, "(");
        std::string head = sym("atom head");
        AtomId a = parse_atom_body(head);
        expect(Token::RP, ")");
        expect(Token::RP, ")");
        if (f.var(f.abs_var(a)).name != name) fail("atom binding out of order: " + name);
    }

    TermId parse_term() {
        if (cur.kind == Token::Num) {
            double d = cur.num;
            bump();
            return f.t_const(d);
        }
        if (cur.kind == Token::Sym) {
            VarId v = var_ref(sym("variable"));
            if (f.var(v).kind == VarKind::Real) return f.t_var(v);
            if (f.var(v).kind == VarKind::Functional) return f.t_fun(v);
            fail("Boolean variable in arithmetic: " + f.var(v).name);
        }
        expect(Token::LP, "term");
        std::string head = sym("operator");
        std::vector<TermId> kids;
        if (head == "init" || head == "final") {
            VarId v = var_ref(sym("functional variable"));
            expect(Token::RP, ")");
            return head == "init" ? f.t_init(v) : f.t_final(v);
        }
        while (cur.kind != Token::RP) kids.push_back(parse_term());
        bump();
        if (head == "+") {
            if (kids.size() < 2) fail("+ needs two operands");
            TermId t = kids[0];
            for (size_t i = 1; i < kids.size(); i++) t = f.t_add(t, kids[i]);
            return t;
        }
        if (head == "-") {
            if (kids.size() == 1) return f.t_neg(kids[0]);
            if (kids.size() == 2) return f.t_sub(kids[0], kids[1]);
            fail("- needs one or two operands");
        }
        if (head == "*") {
            if (kids.size() < 2) fail("* needs two operands");
            TermId t = kids[0];
            for (size_t i = 1; i < kids.size(); i++) t = f.t_mul(t, kids[i]);
            return t;
        }
        if (head == "/") {
            if (kids.size() != 2) fail("/ needs two operands");
            return f.t_div(kids[0], kids[1]);
        }
        if (head == "min") return f.t_min(std::move(kids));
        if (head == "max") return f.t_max(std::move(kids));
        fail("unknown term operator " + head);
    }

    BRef parse_bexpr() {
        if (cur.kind == Token::Sym) {
            std::string name = cur.text;
            if (name == "true") { bump(); return b_true(); }
            if (name == "false") { bump(); return b_false(); }
            VarId v = var_ref(sym("variable"));
            if (f.var(v).kind != VarKind::Boolean) fail("non-Boolean variable " + name);
            return b_var(v);
        }
        expect(Token::LP, "formula");
        std::string head = sym("connective");
        if (head == "not") {
            BRef e = parse_bexpr();
            expect(Token::RP, ")");
            return b_not(e);
        }
        if (head == "and" || head == "or") {
            std::vector<BRef> kids;
            while (cur.kind != Token::RP) kids.push_back(parse_bexpr());
            bump();
            return head == "and" ? b_and(std::move(kids)) : b_or(std::move(kids));
        }
        if (head == "=>" || head == "implies") {
            BRef a = parse_bexpr();
            BRef b = parse_bexpr();
            expect(Token::RP, ")");
            return b_implies(a, b);
        }
        if (head == "iff" || head == "<->") {
            BRef a = parse_bexpr();
            BRef b = parse_bexpr();
            expect(Token::RP, ")");
            return b_iff(a, b);
        }
        if (head == "ite") {
            BRef c = parse_bexpr();
            BRef a = parse_bexpr();
            BRef b = parse_bexpr();
            expect(Token::RP, ")");
            return b_ite(c, a, b);
        }
        if (head == "init") {
            // (init v c) sugar for (= (init v) c)
            VarId v = var_ref(sym("functional variable"));
            TermId rhs = parse_term();
            expect(Token::RP, ")");
            return b_atom(f.atom_cmp(f.t_init(v), CmpOp::Eq, rhs));
        }
        AtomId a = parse_atom_body(head);
        expect(Token::RP, ")");
        return b_atom(a);
    }

    void form_assert() {
        std::string tag;
        if (cur.kind == Token::Key && cur.text == ":rule") {
            bump();
            tag = sym("rule tag");
        }
        f.set_rule(tag);
        BRef e = parse_bexpr();
        f.assert_expr(e);
        f.set_rule("");
        expect(Token::RP, ")");
    }
};

} // namespace

Formula parse_text(const std::string& text) {
    Parser p(text);
    p.run();
    return std::move(p.f);
}

} // namespace sode
