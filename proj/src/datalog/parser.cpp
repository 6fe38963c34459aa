#include "dlflow/datalog/parser.hpp"

#include <cctype>
#include <map>

#include <fmt/format.h>

#include "dlflow/datalog/analysis.hpp"

namespace dlflow::datalog {

ParseError::ParseError(int line, int column, const std::string& message)
    : std::runtime_error(fmt::format("{}:{}: {}", line, column, message)),
      line_(line),
      column_(column),
      detail_(message) {}

namespace {

enum class Tok {
    end,
    ident,
    integer,
    real,
    string,
    lparen,
    rparen,
    lbrace,
    rbrace,
    comma,
    dot,
    colon,
    implies,  // :-
    bang,
    ne,
    eq,
    lt,
    le,
    gt,
    ge,
    plus,
    minus,
    slash,
    arrow,  // ->
    directive,
};

struct Token {
    Tok kind = Tok::end;
    std::string text;
    int line = 1;
    int column = 1;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            skip_space();
            Token t;
            t.line = line_;
            t.column = col_;
            if (pos_ >= src_.size()) {
                out.push_back(t);
                return out;
            }
            const char c = src_[pos_];
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                t.kind = Tok::ident;
                while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                    t.text.push_back(advance());
            } else if (std::isdigit(static_cast<unsigned char>(c))) {
                lex_number(t);
            } else if (c == '"') {
                lex_string(t);
            } else if (c == '.' && pos_ + 1 < src_.size() && std::isalpha(static_cast<unsigned char>(src_[pos_ + 1])) &&
                       at_line_start()) {
                advance();
                t.kind = Tok::directive;
                while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                    t.text.push_back(advance());
            } else {
                lex_punct(t);
            }
            out.push_back(std::move(t));
        }
    }

private:
    char advance() {
        const char c = src_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }

    bool at_line_start() const {
        for (std::size_t i = pos_; i > 0; --i) {
            const char p = src_[i - 1];
            if (p == '\n') return true;
            if (p != ' ' && p != '\t' && p != '\r') return false;
        }
        return true;
    }

    void skip_space() {
        while (pos_ < src_.size()) {
            const char c = src_[pos_];
            if (c == '%') {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else {
                break;
            }
        }
    }

    void lex_number(Token& t) {
        t.kind = Tok::integer;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) t.text.push_back(advance());
        if (pos_ + 1 < src_.size() && src_[pos_] == '.' && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))) {
            t.kind = Tok::real;
            t.text.push_back(advance());
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) t.text.push_back(advance());
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t look = pos_ + 1;
            if (look < src_.size() && (src_[look] == '+' || src_[look] == '-')) ++look;
            if (look < src_.size() && std::isdigit(static_cast<unsigned char>(src_[look]))) {
                t.kind = Tok::real;
                while (pos_ < look) t.text.push_back(advance());
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
                    t.text.push_back(advance());
            }
        }
    }

    void lex_string(Token& t) {
        t.kind = Tok::string;
        const int line = line_, col = col_;
        advance();
        while (true) {
            if (pos_ >= src_.size()) throw ParseError(line, col, "unterminated string literal");
            char c = advance();
            if (c == '"') return;
            if (c == '\\') {
                if (pos_ >= src_.size()) throw ParseError(line, col, "unterminated string literal");
                c = advance();
                switch (c) {
                    case 'n': t.text.push_back('\n'); break;
                    case 't': t.text.push_back('\t'); break;
                    case '"': t.text.push_back('"'); break;
                    case '\\': t.text.push_back('\\'); break;
                    default: throw ParseError(line_, col_ - 1, fmt::format("unknown escape '\\{}'", c));
                }
                continue;
            }
            t.text.push_back(c);
        }
    }

    void lex_punct(Token& t) {
        const char c = advance();
        const char n = pos_ < src_.size() ? src_[pos_] : '\0';
        auto two = [&](Tok k, const char* s) {
            advance();
            t.kind = k;
            t.text = s;
        };
        t.text = std::string(1, c);
        switch (c) {
            case '(': t.kind = Tok::lparen; return;
            case ')': t.kind = Tok::rparen; return;
            case '{': t.kind = Tok::lbrace; return;
            case '}': t.kind = Tok::rbrace; return;
            case ',': t.kind = Tok::comma; return;
            case '.': t.kind = Tok::dot; return;
            case '+': t.kind = Tok::plus; return;
            case '/': t.kind = Tok::slash; return;
            case ':':
                if (n == '-') return two(Tok::implies, ":-");
                t.kind = Tok::colon;
                return;
            case '!':
                if (n == '=') return two(Tok::ne, "!=");
                t.kind = Tok::bang;
                return;
            case '=':
                if (n == '=') return two(Tok::eq, "==");
                break;
            case '<':
                if (n == '=') return two(Tok::le, "<=");
                t.kind = Tok::lt;
                return;
            case '>':
                if (n == '=') return two(Tok::ge, ">=");
                t.kind = Tok::gt;
                return;
            case '-':
                if (n == '>') return two(Tok::arrow, "->");
                t.kind = Tok::minus;
                return;
            default: break;
        }
        throw ParseError(t.line, t.column, fmt::format("unexpected character '{}'", c));
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

bool is_upper_start(const std::string& s) { return !s.empty() && (std::isupper(static_cast<unsigned char>(s[0])) || s[0] == '_'); }

bool is_comparison_tok(Tok k) {
    return k == Tok::ne || k == Tok::eq || k == Tok::lt || k == Tok::le || k == Tok::gt || k == Tok::ge;
}

struct AtomSite {
    int line;
    int column;
};

class Parser {
public:
    explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    Program run() {
        while (peek().kind != Tok::end) {
            if (peek().kind == Tok::directive) {
                parse_directive();
            } else {
                parse_rule();
            }
        }
        resolve_constants();
        check_program();
        return std::move(prog_);
    }

private:
    const Token& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
    const Token& next() { return toks_[std::min(pos_++, toks_.size() - 1)]; }

    [[noreturn]] void fail(const Token& t, const std::string& msg) const {
        throw ParseError(t.line, t.column, msg);
    }

    std::string describe(const Token& t) const {
        if (t.kind == Tok::end) return "end of input";
        return fmt::format("'{}'", t.text);
    }

    const Token& expect(Tok k, const char* what) {
        if (peek().kind != k) fail(peek(), fmt::format("expected {} but found {}", what, describe(peek())));
        return next();
    }

    std::size_t expect_count() {
        const Token& t = expect(Tok::integer, "a count");
        return static_cast<std::size_t>(std::stoull(t.text));
    }

    void parse_directive() {
        const Token d = next();
        if (d.text == "decl") {
            const Token& name = expect(Tok::ident, "a predicate name");
            expect(Tok::slash, "'/'");
            EdbDecl decl{name.text, expect_count()};
            if (prog_.find_edb(decl.name) || prog_.find_udf(decl.name)) fail(name, fmt::format("'{}' declared twice", decl.name));
            prog_.edb_decls.push_back(decl);
        } else if (d.text == "udf") {
            const Token& name = expect(Tok::ident, "a UDF name");
            expect(Tok::slash, "'/'");
            UdfDecl decl;
            decl.name = name.text;
            decl.input_arity = expect_count();
            expect(Tok::arrow, "'->'");
            decl.output_arity = expect_count();
            if (prog_.find_edb(decl.name) || prog_.find_udf(decl.name)) fail(name, fmt::format("'{}' declared twice", decl.name));
            prog_.udf_decls.push_back(decl);
        } else if (d.text == "aggregate") {
            const Token& name = expect(Tok::ident, "an aggregate name");
            UdfDecl decl;
            decl.name = name.text;
            decl.input_arity = 1;
            decl.output_arity = 1;
            decl.is_aggregate = true;
            if (peek().kind == Tok::ident && peek().text == "commutative") {
                next();
                decl.is_commutative_associative = true;
            }
            if (prog_.find_edb(decl.name) || prog_.find_udf(decl.name)) fail(name, fmt::format("'{}' declared twice", decl.name));
            prog_.udf_decls.push_back(decl);
        } else if (d.text == "const") {
            do {
                const Token& name = expect(Tok::ident, "a constant name");
                prog_.constants.push_back(name.text);
            } while (peek().kind == Tok::comma && (next(), true));
        } else {
            fail(d, fmt::format("unknown directive '.{}'", d.text));
        }
    }

    void parse_rule() {
        Rule r;
        r.line = peek().line;
        if (peek().kind == Tok::ident && peek(1).kind == Tok::colon) {
            r.label = next().text;
            next();
        }
        const Token& head_tok = peek();
        if (head_tok.kind != Tok::ident || is_upper_start(head_tok.text))
            fail(head_tok, fmt::format("expected a head predicate but found {}", describe(head_tok)));
        r.head = parse_atom(&r.aggregate);
        sites_.push_back({head_tok.line, head_tok.column});
        std::vector<AtomSite> body_sites;
        if (peek().kind == Tok::implies) {
            next();
            while (true) {
                body_sites.push_back({peek().line, peek().column});
                r.body.push_back(parse_literal());
                if (peek().kind != Tok::comma) break;
                const Token& comma = next();
                if (peek().kind == Tok::end || peek().kind == Tok::dot) fail(comma, "dangling ',' before end of rule");
            }
        }
        expect(Tok::dot, "',' or '.'");
        prog_.rules.push_back(std::move(r));
        body_sites_.push_back(std::move(body_sites));
    }

    Atom parse_literal() {
        if (peek().kind == Tok::bang) {
            next();
            const Token& t = peek();
            if (t.kind != Tok::ident || is_upper_start(t.text)) fail(t, "expected an atom after '!'");
            Atom a = parse_atom(nullptr);
            a.negated = true;
            return a;
        }
        const Token& t = peek();
        const bool atom_start = t.kind == Tok::ident && !is_upper_start(t.text) && !is_keyword(t.text) &&
                                (peek(1).kind == Tok::lparen || !is_comparison_tok(peek(1).kind));
        if (atom_start) return parse_atom(nullptr);
        Term lhs = parse_term();
        const Token& op = peek();
        if (!is_comparison_tok(op.kind)) fail(op, fmt::format("expected a comparison operator but found {}", describe(op)));
        next();
        Term rhs = parse_term();
        Atom a;
        a.predicate = op.text;
        a.role = AtomRole::comparison;
        a.args = {std::move(lhs), std::move(rhs)};
        return a;
    }

    static bool is_keyword(const std::string& s) { return s == "true" || s == "false" || s == "null"; }

    Atom parse_atom(HeadAggregate* agg) {
        Atom a;
        a.predicate = next().text;
        if (peek().kind != Tok::lparen) return a;
        next();
        if (peek().kind == Tok::rparen) {
            next();
            return a;
        }
        do {
            if (agg && peek().kind == Tok::ident && !is_upper_start(peek().text) && peek(1).kind == Tok::lt) {
                const Token& name = next();
                if (agg->present) fail(name, "at most one aggregate per head");
                next();
                agg->present = true;
                agg->name = name.text;
                agg->over = parse_term();
                agg->position = a.args.size();
                expect(Tok::gt, "'>' closing the aggregate");
                a.args.push_back(agg->over);
            } else {
                a.args.push_back(parse_term());
            }
        } while (peek().kind == Tok::comma && (next(), true));
        expect(Tok::rparen, "',' or ')'");
        return a;
    }

    Term parse_term() {
        const Token& t = peek();
        switch (t.kind) {
            case Tok::ident: {
                next();
                if (t.text == "_") return Term::wildcard();
                if (t.text == "true") return Term::constant(Value(true));
                if (t.text == "false") return Term::constant(Value(false));
                if (t.text == "null") return Term::constant(Value::null());
                if (!is_upper_start(t.text)) {
                    if (peek().kind == Tok::lparen) fail(peek(), "nested atoms are not terms");
                    return Term::constant(Value(t.text), t.text);
                }
                if (peek().kind == Tok::plus) {
                    next();
                    const Token& k = expect(Tok::integer, "'1' after '+'");
                    if (k.text != "1") fail(k, "only the successor form 'J+1' is allowed");
                    return Term::variable(t.text, 1);
                }
                return Term::variable(t.text);
            }
            case Tok::minus: {
                next();
                const Token& n = peek();
                if (n.kind != Tok::integer && n.kind != Tok::real) fail(n, "expected a number after '-'");
                Term term = parse_number();
                if (term.value.is_int()) term.value = Value(-term.value.as_int());
                else term.value = Value(-term.value.as_real());
                return term;
            }
            case Tok::integer:
            case Tok::real: return parse_number();
            case Tok::string: next(); return Term::constant(Value(t.text));
            case Tok::lbrace: {
                next();
                Term inner = parse_term();
                expect(Tok::rbrace, "'}'");
                return Term::set_of(std::move(inner));
            }
            case Tok::lparen: {
                next();
                std::vector<Term> items;
                do items.push_back(parse_term());
                while (peek().kind == Tok::comma && (next(), true));
                expect(Tok::rparen, "')'");
                return Term::tuple_of(std::move(items));
            }
            default: fail(t, fmt::format("expected a term but found {}", describe(t)));
        }
    }

    Term parse_number() {
        const Token& t = next();
        try {
            if (t.kind == Tok::integer) return Term::constant(Value(static_cast<std::int64_t>(std::stoll(t.text))));
            return Term::constant(Value(std::stod(t.text)));
        } catch (const std::out_of_range&) {
            fail(t, fmt::format("number out of range '{}'", t.text));
        }
    }

    void resolve_term(Term& t) {
        if (t.kind == Term::Kind::variable && prog_.is_constant_symbol(t.name)) {
            if (t.offset != 0) throw ParseError(0, 0, fmt::format("constant '{}' cannot take a successor", t.name));
            t = Term::constant(Value(t.name), t.name);
        }
        for (auto& i : t.items) resolve_term(i);
    }

    void resolve_constants() {
        for (auto& r : prog_.rules) {
            for (auto& a : r.head.args) resolve_term(a);
            if (r.aggregate.present) resolve_term(r.aggregate.over);
            for (auto& b : r.body)
                for (auto& a : b.args) resolve_term(a);
        }
    }

    // Arity consistency, role assignment and declaration checks.
    void check_program() {
        std::map<std::string, std::pair<std::size_t, AtomSite>> arity;
        auto check_arity = [&](const Atom& a, AtomSite site) {
            std::size_t expected = 0;
            if (auto* e = prog_.find_edb(a.predicate)) expected = e->arity;
            else if (auto* u = prog_.find_udf(a.predicate); u && !u->is_aggregate)
                expected = u->input_arity + u->output_arity;
            else if (auto it = arity.find(a.predicate); it != arity.end()) expected = it->second.first;
            else {
                arity.emplace(a.predicate, std::make_pair(a.arity(), site));
                return;
            }
            if (a.arity() != expected)
                throw ParseError(site.line, site.column,
                                 fmt::format("arity mismatch for '{}': used with {} arguments, expected {}", a.predicate,
                                             a.arity(), expected));
        };
        std::set<std::string> defined;
        for (std::size_t i = 0; i < prog_.rules.size(); ++i) {
            auto& r = prog_.rules[i];
            if (auto* u = prog_.find_udf(r.head.predicate))
                throw ParseError(sites_[i].line, sites_[i].column,
                                 fmt::format("'{}' is declared as {} and cannot be a rule head", r.head.predicate,
                                             u->is_aggregate ? "an aggregate" : "a UDF"));
            check_arity(r.head, sites_[i]);
            defined.insert(r.head.predicate);
        }
        for (std::size_t i = 0; i < prog_.rules.size(); ++i) {
            auto& r = prog_.rules[i];
            for (std::size_t j = 0; j < r.body.size(); ++j) {
                auto& a = r.body[j];
                const AtomSite site = body_sites_[i][j];
                if (a.role == AtomRole::comparison) continue;
                if (prog_.find_edb(a.predicate)) {
                    a.role = AtomRole::extensional;
                } else if (auto* u = prog_.find_udf(a.predicate)) {
                    if (u->is_aggregate)
                        throw ParseError(site.line, site.column,
                                         fmt::format("aggregate '{}' used as a body predicate", a.predicate));
                    a.role = AtomRole::function;
                } else if (defined.count(a.predicate)) {
                    a.role = AtomRole::intensional;
                } else {
                    throw ParseError(site.line, site.column,
                                     fmt::format("undeclared predicate or UDF '{}'", a.predicate));
                }
                check_arity(a, site);
            }
        }
        annotate_temporal(prog_);
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    Program prog_;
    std::vector<AtomSite> sites_;
    std::vector<std::vector<AtomSite>> body_sites_;
};

}  // namespace

Program parse_program(std::string_view text) {
    Lexer lexer(text);
    Parser parser(lexer.run());
    return parser.run();
}

}  // namespace dlflow::datalog
