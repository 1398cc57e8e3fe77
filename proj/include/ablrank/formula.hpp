#pragma once

#include "ablrank/common.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace ablrank {

// Propositional formula over binary label variables y0..y{m-1}. A literal
// `yk` holds when label k is 1, `!yk` when it is 0.
struct Formula {
    enum class Op { Literal, And, Or };

    Op op = Op::Literal;
    int var = 0;
    bool negated = false;
    std::vector<Formula> children;

    static Formula literal(int var, bool negated);
    static Formula conjunction(std::vector<Formula> children);
    static Formula disjunction(std::vector<Formula> children);

    bool eval(LabelView labels) const;
    int max_var() const;

    // Or-of-(And-of-literals | literal), or a lone literal / conjunction.
    bool is_dnf() const;
    // And-of-(Or-of-literals | literal), or a lone literal / disjunction.
    bool is_cnf() const;

    friend bool operator==(const Formula&, const Formula&) = default;
};

class FormulaParseError : public Error {
public:
    FormulaParseError(const std::string& msg, std::size_t offset)
        : Error(msg), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// Grammar: expr := term ('|' term)* ; term := factor ('&' factor)* ;
// factor := '!'? 'y' INT | '(' expr ')'. Whitespace is ignored. Nested
// operators of the same kind are flattened so rendering round-trips.
Formula parse_formula(std::string_view text);

std::string render_formula(const Formula& f);

} // namespace ablrank
