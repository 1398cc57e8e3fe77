#include "doctest.h"

#include "ablrank/kb.hpp"

#include <algorithm>
#include <set>
#include <string>

using namespace ablrank;

namespace {

using SeqSet = std::set<LabelSeq>;

SeqSet as_set(const CandidateSet& s) {
    auto v = s.sequences();
    return SeqSet(v.begin(), v.end());
}

KnowledgeBase grounded(std::string_view text) { return ground(parse_kb(text)); }

LabelSeq decode(std::uint64_t code, int base, int len) {
    LabelSeq out(static_cast<std::size_t>(len));
    for (int k = len - 1; k >= 0; --k) {
        out[k] = static_cast<Label>(code % base);
        code /= base;
    }
    return out;
}

// Reads a token string as "A + B = C" with canonical numerals and checks the sum.
bool true_equation(const LabelSeq& s, int base) {
    const Label plus = static_cast<Label>(base), eq = static_cast<Label>(base + 1);
    auto p = std::find(s.begin(), s.end(), plus);
    auto e = std::find(s.begin(), s.end(), eq);
    if (p == s.end() || e == s.end() || p > e) return false;
    if (std::count(s.begin(), s.end(), plus) != 1 || std::count(s.begin(), s.end(), eq) != 1) return false;
    auto number = [&](auto first, auto last, long& value) {
        if (first == last) return false;
        if (*first == 0 && last - first > 1) return false;
        value = 0;
        for (auto it = first; it != last; ++it) value = value * base + *it;
        return true;
    };
    long a = 0, b = 0, c = 0;
    return number(s.begin(), p, a) && number(p + 1, e, b) && number(e + 1, s.end(), c) && a + b == c;
}

std::string error_of(std::string_view text) {
    try {
        ground(parse_kb(text));
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_SUITE("kb") {

TEST_CASE("facts concept") {
    auto kb = grounded("classes 2\nconcept conj arity 3 { facts: [0,0,0] [0,1,0] [1,0,0] [1,1,1] }");
    REQUIRE(kb.concepts.size() == 1);
    CHECK(kb.candidates(0).size() == 4);
    CHECK(kb.common_arity() == 3);

    auto all = grounded("classes 2\nconcept all arity 1 { facts: [0] [1] }");
    CHECK(as_set(all.candidates(0)) == SeqSet{{0}, {1}});
}

TEST_CASE("facts are sorted and deduplicated") {
    auto kb = grounded("classes 3\nconcept t arity 2 { facts: [2,1] [0,2] [2,1] [0,0] }");
    CHECK(kb.candidates(0).sequences() == std::vector<LabelSeq>{{0, 0}, {0, 2}, {2, 1}});
}

TEST_CASE("named classes and comments") {
    auto kb = grounded("# header\nclasses 3 names \"a\" \"b\" \"+\"\nconcept t arity 2 { facts: [a,b] [\"+\",a] }\n");
    CHECK(kb.candidates(0).sequences() == std::vector<LabelSeq>{{0, 1}, {2, 0}});
}

TEST_CASE("label out of range is located") {
    try {
        parse_kb("classes 2\nconcept c arity 3 { facts: [0,2,0] }");
        FAIL("expected an error");
    } catch (const KbParseError& e) {
        CHECK(std::string(e.what()).find("label 2 out of range") != std::string::npos);
        CHECK(e.line() == 2);
        CHECK(e.column() == 31);
    }
}

TEST_CASE("malformed inputs") {
    CHECK_THROWS_AS(parse_kb(""), KbParseError);
    CHECK_THROWS_AS(parse_kb("classes 2\n"), KbParseError);
    CHECK_THROWS_AS(parse_kb("classes 2 names \"x\" \"y\"\nconcept c arity 1 { facts: [z] }"), KbParseError);
    CHECK_THROWS_AS(parse_kb("classes 2\nconcept c arity 2 { facts: [0] }"), KbParseError);
    CHECK_THROWS_AS(parse_kb("classes 2\nconcept c arity 2 { complement: d }"), KbParseError);
    CHECK_THROWS_AS(parse_kb("classes 2\nconcept c arity 2 { dnf: y0 & y2 }"), KbParseError);
    CHECK_THROWS_AS(parse_kb("classes 2\nconcept c arity 2 { facts: [0,0] }\nconcept c arity 2 { facts: [1,1] }"),
                    KbParseError);
    CHECK_THROWS_AS(parse_kb("classes 2\nconcept c arity 2 { nonsense: x }"), KbParseError);
}

TEST_CASE("dnf grounding") {
    auto kb = grounded("classes 2\nconcept c arity 3 { dnf: (y0&y1&y2)|(y0&!y1&!y2)|(!y0&y1&!y2)|(!y0&!y1&!y2) }");
    CHECK(as_set(kb.candidates(0)) == SeqSet{{0, 0, 0}, {0, 1, 0}, {1, 0, 0}, {1, 1, 1}});
}

TEST_CASE("cnf grounding matches a truth table") {
    auto kb = grounded("classes 2\nconcept c arity 3 { cnf: (!y0|!y1|!y2)&(!y0|y1|!y2) }");
    SeqSet expected;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) {
                bool clause1 = !a || !b || !c;
                bool clause2 = !a || b || !c;
                if (clause1 && clause2) expected.insert({Label(a), Label(b), Label(c)});
            }
    CHECK(expected.size() == 6);
    CHECK(as_set(kb.candidates(0)) == expected);
}

TEST_CASE("complement of a complete set is empty") {
    auto msg = error_of("classes 2\nconcept all arity 2 { dnf: y0 | !y0 }\nconcept none arity 2 { complement: all }");
    CHECK(msg.find("empty candidate set") != std::string::npos);
}

TEST_CASE("overlapping concepts are rejected") {
    auto msg = error_of("classes 2\nconcept p arity 2 { facts: [0,0] [0,1] }\nconcept q arity 2 { facts: [0,1] }");
    CHECK(msg.find("candidate sets") != std::string::npos);
    // different arities never overlap
    CHECK(error_of("classes 2\nconcept p arity 2 { facts: [0,0] }\nconcept q arity 3 { facts: [0,0,0] }").empty());
}

TEST_CASE("enumeration budget") {
    auto kb = parse_kb("classes 2\nconcept c arity 12 { dnf: y0 }");
    CHECK_THROWS_AS(ground(kb, GroundOptions{1000}), Error);
    CHECK_NOTHROW(ground(kb, GroundOptions{4096}));
}

TEST_CASE("conjunction builtin") {
    auto kb = ground(builtin_kb(BuiltinKind::Conjunction));
    CHECK(kb.concepts[0].id == "conj0");
    CHECK(as_set(kb.candidates(0)) == SeqSet{{0, 0}, {0, 1}, {1, 0}});
    CHECK(as_set(kb.candidates(1)) == SeqSet{{1, 1}});
    CHECK(render_kb(kb).find("concept conj0 arity 2") != std::string::npos);

    auto eq = ground(builtin_kb(BuiltinKind::ConjEq));
    CHECK(eq.concepts.size() == 1);
    CHECK(eq.num_classes() == 2);
    CHECK(eq.candidates(0).size() == 4);
}

TEST_CASE("hed base 2 fact table") {
    auto kb = ground(builtin_kb(BuiltinKind::Hed, 2));
    CHECK(kb.num_classes() == 4);
    REQUIRE(kb.concepts.size() == 3);
    const Label P = 2, E = 3;
    CHECK(kb.concepts[0].id == "equation5");
    CHECK(as_set(kb.candidates(0)) == SeqSet{{0, P, 0, E, 0}, {0, P, 1, E, 1}, {1, P, 0, E, 1}});
    CHECK(as_set(kb.candidates(1)) == SeqSet{{1, P, 1, E, 1, 0}});
    CHECK(as_set(kb.candidates(2)) == SeqSet{{0, P, 1, 0, E, 1, 0},
                                             {0, P, 1, 1, E, 1, 1},
                                             {1, 0, P, 0, E, 1, 0},
                                             {1, 0, P, 1, E, 1, 1},
                                             {1, 1, P, 0, E, 1, 1},
                                             {1, P, 1, 0, E, 1, 1}});
}

TEST_CASE("hed enumeration matches a brute-force checker") {
    for (int base : {2, 3, 4}) {
        for (int len = 5; len <= 7; ++len) {
            SeqSet expected;
            std::uint64_t total = 1;
            for (int k = 0; k < len; ++k) total *= static_cast<std::uint64_t>(base + 2);
            for (std::uint64_t code = 0; code < total; ++code) {
                auto s = decode(code, base + 2, len);
                if (true_equation(s, base)) expected.insert(s);
            }
            auto got = hed_equations(base, len);
            INFO("base " << base << " length " << len);
            CHECK(SeqSet(got.begin(), got.end()) == expected);
            CHECK(std::is_sorted(got.begin(), got.end()));
        }
    }
}

TEST_CASE("addition builtin") {
    auto kb = ground(builtin_kb(BuiltinKind::Addition, 10));
    CHECK(kb.num_classes() == 10);
    CHECK(kb.concepts.size() == 19);
    std::size_t total = 0;
    for (std::size_t t = 0; t < kb.concepts.size(); ++t) total += kb.candidates(t).size();
    CHECK(total == 100);
    CHECK(as_set(kb.candidates(kb.index_of("zero"))) == SeqSet{{0, 0}});
    CHECK(as_set(kb.candidates(kb.index_of("eighteen"))) == SeqSet{{9, 9}});
    for (int k = 0; k <= 18; ++k) {
        SeqSet expected;
        for (int i = 0; i < 10; ++i)
            if (k - i >= 0 && k - i <= 9) expected.insert({Label(i), Label(k - i)});
        CHECK(as_set(kb.candidates(kb.index_of(number_word(k)))) == expected);
    }
    CHECK_THROWS_AS(builtin_kb(BuiltinKind::Addition, 1), Error);
    CHECK_THROWS_AS(builtin_kb(BuiltinKind::Hed, 17), Error);
}

TEST_CASE("random kbs") {
    for (auto form : {NormalForm::Dnf, NormalForm::Cnf}) {
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            for (int m : {3, 4, 5}) {
                auto kb = random_kb(form, m, seed);
                CHECK(kb.same_definition(random_kb(form, m, seed)));
                auto g = ground(kb);
                const auto pos = as_set(g.candidates(0));
                const auto neg = as_set(g.candidates(1));
                CHECK(pos.size() >= 1);
                CHECK(pos.size() <= (1u << m) - 1);
                CHECK(pos.size() + neg.size() == (1u << m));

                // full-width clauses: each DNF clause selects one sequence, each CNF clause excludes one
                const Formula& f = form == NormalForm::Dnf ? std::get<DnfDef>(kb.concepts[0].definition).formula
                                                           : std::get<CnfDef>(kb.concepts[0].definition).formula;
                const auto top = form == NormalForm::Dnf ? Formula::Op::Or : Formula::Op::And;
                std::vector<Formula> clauses = f.op == top ? f.children : std::vector<Formula>{f};
                SeqSet selected;
                for (const auto& clause : clauses) {
                    LabelSeq s(static_cast<std::size_t>(m));
                    const auto& lits = clause.children;
                    REQUIRE(static_cast<int>(lits.size()) == m);
                    for (const auto& lit : lits) {
                        bool one = form == NormalForm::Dnf ? !lit.negated : lit.negated;
                        s[lit.var] = one ? 1 : 0;
                    }
                    selected.insert(s);
                }
                if (form == NormalForm::Dnf) {
                    CHECK(pos == selected);
                } else {
                    CHECK(neg == selected);
                }
                CHECK(parse_kb(render_kb(kb)).same_definition(kb));
            }
        }
    }
    CHECK_THROWS_AS(random_kb(NormalForm::Dnf, 1, 0), Error);
}

TEST_CASE("render round-trips builtins") {
    for (auto kind : {BuiltinKind::ConjEq, BuiltinKind::Conjunction, BuiltinKind::Addition, BuiltinKind::Hed}) {
        for (int base : {2, 10}) {
            auto kb = builtin_kb(kind, base);
            CHECK(parse_kb(render_kb(kb)).same_definition(kb));
        }
    }
    auto kb = random_kb(NormalForm::Dnf, 4, 7);
    CHECK(parse_kb(render_kb(kb)).same_definition(kb));
}

TEST_CASE("select concepts") {
    auto kb = ground(builtin_kb(BuiltinKind::Conjunction));
    auto only = select_concepts(kb, {"conj0"});
    REQUIRE(only.concepts.size() == 1);
    CHECK(ground(only).candidates(0).size() == 3);
    CHECK_THROWS_AS(select_concepts(kb, {"nope"}), Error);

    auto rk = ground(random_kb(NormalForm::Dnf, 3, 1));
    auto neg = select_concepts(rk, {"negative"});
    CHECK(as_set(ground(neg).candidates(0)) == as_set(rk.candidates(1)));
}

TEST_CASE("grounded json export") {
    auto kb = ground(builtin_kb(BuiltinKind::Conjunction));
    auto j = grounded_to_json(kb);
    CHECK(j["classes"] == 2);
    CHECK(j["concepts"][1]["id"] == "conj1");
    CHECK(j["concepts"][1]["candidates"] == nlohmann::json::parse("[[1,1]]"));
}

}
