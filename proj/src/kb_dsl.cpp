#include "ablrank/kb.hpp"

#include <cctype>
#include <charconv>
#include <map>
#include <sstream>

namespace ablrank {

KbParseError::KbParseError(const std::string& msg, int line, int column)
    : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + msg), line_(line), column_(column) {}

namespace {

struct Location {
    int line = 1;
    int column = 1;
};

class KbParser {
public:
    explicit KbParser(std::string_view text) : text_(text) {}

    KnowledgeBase parse() {
        KnowledgeBase kb;
        expect_keyword("classes");
        auto loc = location();
        long long c = integer();
        if (c < 2 || c > 256) fail("class count must be in [2, 256]", loc);
        kb.alphabet.num_classes = static_cast<int>(c);
        skip_ws();
        if (peek_word() == "names") {
            expect_keyword("names");
            while (peek() == '"') kb.alphabet.names.push_back(string_literal());
            if (static_cast<long long>(kb.alphabet.names.size()) != c) {
                fail("expected " + std::to_string(c) + " class names, got " +
                         std::to_string(kb.alphabet.names.size()),
                     loc);
            }
            std::map<std::string, int> seen;
            for (const auto& n : kb.alphabet.names) {
                if (!seen.emplace(n, 0).second) fail("duplicate class name \"" + n + "\"", loc);
            }
        }
        alphabet_ = &kb.alphabet;

        std::vector<Location> concept_locs;
        skip_ws();
        while (!at_end()) {
            concept_locs.push_back(location());
            kb.concepts.push_back(concept_body());
            skip_ws();
        }
        if (kb.concepts.empty()) fail("expected at least one concept", location());

        for (std::size_t i = 0; i < kb.concepts.size(); ++i) {
            const auto& cpt = kb.concepts[i];
            for (std::size_t j = 0; j < i; ++j) {
                if (kb.concepts[j].id == cpt.id) fail("duplicate concept id '" + cpt.id + "'", concept_locs[i]);
            }
            if (const auto* comp = std::get_if<ComplementDef>(&cpt.definition)) {
                auto target = kb.find(comp->of);
                if (!target) fail("complement refers to unknown concept '" + comp->of + "'", concept_locs[i]);
                if (kb.concepts[*target].arity != cpt.arity) {
                    fail("complement of '" + comp->of + "' must have equal arity", concept_locs[i]);
                }
            }
        }
        try {
            kb.validate();
        } catch (const Error& e) {
            fail(e.what(), concept_locs.front());
        }
        return kb;
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int column_ = 1;
    const LabelAlphabet* alphabet_ = nullptr;

    [[noreturn]] void fail(const std::string& msg, Location loc) const {
        throw KbParseError(msg, loc.line, loc.column);
    }
    [[noreturn]] void fail(const std::string& msg) const { fail(msg, location()); }

    Location location() const { return {line_, column_}; }
    bool at_end() const { return pos_ >= text_.size(); }
    char peek() {
        skip_ws();
        return at_end() ? '\0' : text_[pos_];
    }

    void advance() {
        if (text_[pos_] == '\n') {
            ++line_;
            column_ = 1;
        } else {
            ++column_;
        }
        ++pos_;
    }

    void skip_ws() {
        while (!at_end()) {
            char ch = text_[pos_];
            if (ch == '#') {
                while (!at_end() && text_[pos_] != '\n') advance();
            } else if (std::isspace(static_cast<unsigned char>(ch))) {
                advance();
            } else {
                break;
            }
        }
    }

    static bool ident_start(char ch) { return std::isalpha(static_cast<unsigned char>(ch)) || ch == '_'; }
    static bool ident_char(char ch) { return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_'; }

    std::string_view peek_word() {
        skip_ws();
        std::size_t end = pos_;
        while (end < text_.size() && ident_char(text_[end])) ++end;
        return text_.substr(pos_, end - pos_);
    }

    std::string identifier() {
        skip_ws();
        if (at_end() || !ident_start(text_[pos_])) fail("expected identifier");
        std::string out;
        while (!at_end() && ident_char(text_[pos_])) {
            out += text_[pos_];
            advance();
        }
        return out;
    }

    void expect_keyword(std::string_view kw) {
        auto loc = location();
        skip_ws();
        loc = location();
        if (peek_word() != kw) fail("expected '" + std::string(kw) + "'", loc);
        for (std::size_t i = 0; i < kw.size(); ++i) advance();
    }

    void expect(char ch) {
        if (peek() != ch) {
            fail(std::string("expected '") + ch + "'" +
                 (at_end() ? std::string(" at end of input") : std::string(" but found '") + text_[pos_] + "'"));
        }
        advance();
    }

    long long integer() {
        skip_ws();
        auto loc = location();
        std::size_t start = pos_;
        while (!at_end() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) advance();
        if (start == pos_) fail("expected integer", loc);
        long long v = 0;
        auto digits = text_.substr(start, pos_ - start);
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
        if (ec != std::errc()) fail("integer out of range", loc);
        return v;
    }

    std::string string_literal() {
        expect('"');
        std::string out;
        while (!at_end() && text_[pos_] != '"') {
            if (text_[pos_] == '\n') fail("unterminated string");
            out += text_[pos_];
            advance();
        }
        if (at_end()) fail("unterminated string");
        advance();
        return out;
    }

    Concept concept_body() {
        Concept cpt;
        expect_keyword("concept");
        cpt.id = identifier();
        expect_keyword("arity");
        auto loc = location();
        long long arity = integer();
        if (arity < 1 || arity > 64) fail("arity must be in [1, 64]", loc);
        cpt.arity = static_cast<int>(arity);
        expect('{');
        skip_ws();
        auto body_loc = location();
        std::string kind = identifier();
        expect(':');
        if (kind == "facts") {
            FactsDef facts;
            while (peek() == '[') facts.facts.push_back(sequence(cpt.arity));
            if (facts.facts.empty()) fail("expected at least one fact", body_loc);
            cpt.definition = std::move(facts);
        } else if (kind == "dnf" || kind == "cnf") {
            Formula f = formula();
            if (f.max_var() >= cpt.arity) {
                fail("formula references y" + std::to_string(f.max_var()) + " beyond arity " +
                         std::to_string(cpt.arity),
                     body_loc);
            }
            if (kind == "dnf") {
                cpt.definition = DnfDef{std::move(f)};
            } else {
                cpt.definition = CnfDef{std::move(f)};
            }
        } else if (kind == "complement") {
            cpt.definition = ComplementDef{identifier()};
        } else if (kind == "builtin") {
            BuiltinDef def;
            def.kind = identifier();
            if (peek_word() == "base") {
                expect_keyword("base");
                expect('=');
                auto bloc = location();
                long long b = integer();
                if (b < 2 || b > 16) fail("base out of range [2, 16]", bloc);
                def.base = static_cast<int>(b);
            }
            cpt.definition = std::move(def);
        } else {
            fail("unknown concept body '" + kind + "'", body_loc);
        }
        expect('}');
        return cpt;
    }

    LabelSeq sequence(int arity) {
        auto loc = location();
        expect('[');
        LabelSeq seq;
        while (true) {
            skip_ws();
            auto eloc = location();
            std::string token;
            bool quoted = false;
            if (!at_end() && text_[pos_] == '"') {
                token = string_literal();
                quoted = true;
            } else {
                while (!at_end() && text_[pos_] != ',' && text_[pos_] != ']' &&
                       !std::isspace(static_cast<unsigned char>(text_[pos_]))) {
                    token += text_[pos_];
                    advance();
                }
            }
            if (token.empty() && !quoted) fail("expected label", eloc);
            seq.push_back(resolve_label(token, quoted, eloc));
            skip_ws();
            if (peek() == ',') {
                advance();
                continue;
            }
            expect(']');
            break;
        }
        if (static_cast<int>(seq.size()) != arity) {
            fail("fact has " + std::to_string(seq.size()) + " labels but concept arity is " + std::to_string(arity), loc);
        }
        return seq;
    }

    Label resolve_label(const std::string& token, bool quoted, Location loc) {
        const auto& names = alphabet_->names;
        bool numeric = !quoted && std::all_of(token.begin(), token.end(),
                                              [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); });
        if (numeric) {
            if (token.size() > 6) fail("label " + token + " out of range", loc);
            int v = std::stoi(token);
            if (v >= alphabet_->num_classes) fail("label " + token + " out of range", loc);
            return static_cast<Label>(v);
        }
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == token) return static_cast<Label>(i);
        }
        fail("unknown class name '" + token + "'", loc);
    }

    Formula formula() {
        skip_ws();
        auto loc = location();
        std::size_t start = pos_;
        while (!at_end() && text_[pos_] != '}') advance();
        std::string_view raw = text_.substr(start, pos_ - start);
        // Drop trailing comments from multi-line formulas.
        std::string cleaned;
        bool comment = false;
        for (char ch : raw) {
            if (ch == '#') comment = true;
            if (ch == '\n') comment = false;
            cleaned += comment ? ' ' : ch;
        }
        try {
            return parse_formula(cleaned);
        } catch (const FormulaParseError& e) {
            Location at = loc;
            for (std::size_t i = 0; i < e.offset() && i < raw.size(); ++i) {
                if (raw[i] == '\n') {
                    ++at.line;
                    at.column = 1;
                } else {
                    ++at.column;
                }
            }
            fail(e.what(), at);
        }
    }
};

} // namespace

KnowledgeBase parse_kb(std::string_view text) { return KbParser(text).parse(); }

std::string render_kb(const KnowledgeBase& kb) {
    std::ostringstream os;
    os << "classes " << kb.alphabet.num_classes;
    if (!kb.alphabet.names.empty()) {
        os << " names";
        for (const auto& n : kb.alphabet.names) {
            if (n.find('"') != std::string::npos || n.find('\n') != std::string::npos) {
                throw Error("class name cannot be rendered: " + n);
            }
            os << " \"" << n << '"';
        }
    }
    os << '\n';
    for (const auto& cpt : kb.concepts) {
        os << "concept " << cpt.id << " arity " << cpt.arity << " {\n";
        std::visit(
            [&](const auto& def) {
                using T = std::decay_t<decltype(def)>;
                if constexpr (std::is_same_v<T, FactsDef>) {
                    os << "  facts:";
                    for (std::size_t i = 0; i < def.facts.size(); ++i) {
                        os << ((i % 8 == 0) ? "\n    " : " ") << '[';
                        for (std::size_t k = 0; k < def.facts[i].size(); ++k) {
                            if (k) os << ',';
                            os << static_cast<int>(def.facts[i][k]);
                        }
                        os << ']';
                    }
                    os << '\n';
                } else if constexpr (std::is_same_v<T, DnfDef>) {
                    os << "  dnf: " << render_formula(def.formula) << '\n';
                } else if constexpr (std::is_same_v<T, CnfDef>) {
                    os << "  cnf: " << render_formula(def.formula) << '\n';
                } else if constexpr (std::is_same_v<T, ComplementDef>) {
                    os << "  complement: " << def.of << '\n';
                } else if constexpr (std::is_same_v<T, BuiltinDef>) {
                    os << "  builtin: " << def.kind;
                    if (def.base) os << " base=" << *def.base;
                    os << '\n';
                }
            },
            cpt.definition);
        os << "}\n";
    }
    return os.str();
}

} // namespace ablrank
