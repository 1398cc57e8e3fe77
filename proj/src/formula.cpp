#include "ablrank/formula.hpp"

#include <algorithm>
#include <cctype>

namespace ablrank {

Formula Formula::literal(int var, bool negated) {
    Formula f;
    f.op = Op::Literal;
    f.var = var;
    f.negated = negated;
    return f;
}

namespace {

Formula combine(Formula::Op op, std::vector<Formula> children) {
    if (children.size() == 1) return std::move(children.front());
    Formula f;
    f.op = op;
    for (auto& c : children) {
        if (c.op == op) {
            for (auto& g : c.children) f.children.push_back(std::move(g));
        } else {
            f.children.push_back(std::move(c));
        }
    }
    return f;
}

bool is_clause_of(const Formula& f, Formula::Op inner) {
    if (f.op == Formula::Op::Literal) return true;
    if (f.op != inner) return false;
    return std::all_of(f.children.begin(), f.children.end(),
                       [](const Formula& c) { return c.op == Formula::Op::Literal; });
}

} // namespace

Formula Formula::conjunction(std::vector<Formula> children) {
    return combine(Op::And, std::move(children));
}

Formula Formula::disjunction(std::vector<Formula> children) {
    return combine(Op::Or, std::move(children));
}

bool Formula::eval(LabelView labels) const {
    switch (op) {
    case Op::Literal:
        return (labels[var] != 0) != negated;
    case Op::And:
        return std::all_of(children.begin(), children.end(),
                           [&](const Formula& c) { return c.eval(labels); });
    case Op::Or:
        return std::any_of(children.begin(), children.end(),
                           [&](const Formula& c) { return c.eval(labels); });
    }
    return false;
}

int Formula::max_var() const {
    if (op == Op::Literal) return var;
    int m = -1;
    for (const auto& c : children) m = std::max(m, c.max_var());
    return m;
}

bool Formula::is_dnf() const {
    if (op == Op::Or) {
        return std::all_of(children.begin(), children.end(),
                           [](const Formula& c) { return is_clause_of(c, Op::And); });
    }
    return is_clause_of(*this, Op::And);
}

bool Formula::is_cnf() const {
    if (op == Op::And) {
        return std::all_of(children.begin(), children.end(),
                           [](const Formula& c) { return is_clause_of(c, Op::Or); });
    }
    return is_clause_of(*this, Op::Or);
}

namespace {

class FormulaParser {
public:
    explicit FormulaParser(std::string_view text) : text_(text) {}

    Formula parse() {
        Formula f = expr();
        skip_ws();
        if (pos_ != text_.size()) fail("unexpected character '" + std::string(1, text_[pos_]) + "'");
        return f;
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg) const { throw FormulaParseError(msg, pos_); }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char ch) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ch) {
            ++pos_;
            return true;
        }
        return false;
    }

    Formula expr() {
        std::vector<Formula> terms;
        terms.push_back(term());
        while (accept('|')) terms.push_back(term());
        return Formula::disjunction(std::move(terms));
    }

    Formula term() {
        std::vector<Formula> factors;
        factors.push_back(factor());
        while (accept('&')) factors.push_back(factor());
        return Formula::conjunction(std::move(factors));
    }

    Formula factor() {
        if (accept('(')) {
            Formula f = expr();
            if (!accept(')')) fail("expected ')'");
            return f;
        }
        bool negated = accept('!');
        skip_ws();
        if (pos_ >= text_.size() || text_[pos_] != 'y') fail("expected literal 'y<k>'");
        ++pos_;
        std::size_t start = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        if (start == pos_) fail("expected variable index after 'y'");
        if (pos_ - start > 4) fail("variable index too large");
        int var = std::stoi(std::string(text_.substr(start, pos_ - start)));
        return Formula::literal(var, negated);
    }
};

void render_into(const Formula& f, std::string& out, bool top) {
    if (f.op == Formula::Op::Literal) {
        if (f.negated) out += '!';
        out += 'y';
        out += std::to_string(f.var);
        return;
    }
    const char sep = f.op == Formula::Op::And ? '&' : '|';
    if (!top) out += '(';
    for (std::size_t i = 0; i < f.children.size(); ++i) {
        if (i) out += sep;
        render_into(f.children[i], out, false);
    }
    if (!top) out += ')';
}

} // namespace

Formula parse_formula(std::string_view text) { return FormulaParser(text).parse(); }

std::string render_formula(const Formula& f) {
    std::string out;
    render_into(f, out, true);
    return out;
}

} // namespace ablrank
