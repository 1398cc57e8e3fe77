#pragma once

#include "ablrank/common.hpp"
#include "ablrank/formula.hpp"

#include "json.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ablrank {

struct LabelAlphabet {
    int num_classes = 2;
    std::vector<std::string> names;  // empty, or one distinct name per class

    void validate() const;
    std::string name(int label) const;

    friend bool operator==(const LabelAlphabet&, const LabelAlphabet&) = default;
};

struct FactsDef {
    std::vector<LabelSeq> facts;
    friend bool operator==(const FactsDef&, const FactsDef&) = default;
};

struct DnfDef {
    Formula formula;
    friend bool operator==(const DnfDef&, const DnfDef&) = default;
};

struct CnfDef {
    Formula formula;
    friend bool operator==(const CnfDef&, const CnfDef&) = default;
};

struct ComplementDef {
    std::string of;
    friend bool operator==(const ComplementDef&, const ComplementDef&) = default;
};

// Dedicated enumerators: "hed" (true equations "A + B = C" of the concept's
// arity over digits 0..base-1, plus = base, equals = base+1) and "any"
// (every sequence of the concept's arity).
struct BuiltinDef {
    std::string kind;
    std::optional<int> base;
    friend bool operator==(const BuiltinDef&, const BuiltinDef&) = default;
};

using ConceptDef = std::variant<FactsDef, DnfDef, CnfDef, ComplementDef, BuiltinDef>;

struct Concept {
    std::string id;
    int arity = 1;
    ConceptDef definition;

    friend bool operator==(const Concept&, const Concept&) = default;
};

// Lexicographically sorted, duplicate-free list of label sequences stored
// flat (row-major, `arity` labels per sequence).
class CandidateSet {
public:
    CandidateSet() = default;
    CandidateSet(std::string concept_id, int arity, std::vector<Label> flat);

    const std::string& concept_id() const { return concept_id_; }
    int arity() const { return arity_; }
    std::size_t size() const { return arity_ ? flat_.size() / static_cast<std::size_t>(arity_) : 0; }
    bool empty() const { return flat_.empty(); }
    LabelView operator[](std::size_t i) const {
        return LabelView(flat_).subspan(i * static_cast<std::size_t>(arity_), static_cast<std::size_t>(arity_));
    }
    bool contains(LabelView seq) const;
    std::vector<LabelSeq> sequences() const;
    const std::vector<Label>& flat() const { return flat_; }

    friend bool operator==(const CandidateSet&, const CandidateSet&) = default;

private:
    std::string concept_id_;
    int arity_ = 0;
    std::vector<Label> flat_;
};

struct GroundOptions {
    // Upper bound on the number of sequences enumerated across all concepts.
    std::uint64_t budget = 10'000'000;
};

class KnowledgeBase {
public:
    LabelAlphabet alphabet;
    std::vector<Concept> concepts;
    std::vector<CandidateSet> grounded;  // parallel to `concepts` once grounded

    int num_classes() const { return alphabet.num_classes; }
    bool is_grounded() const { return !concepts.empty() && grounded.size() == concepts.size(); }
    std::optional<std::size_t> find(std::string_view id) const;
    std::size_t index_of(std::string_view id) const;  // throws if absent
    const CandidateSet& candidates(std::size_t cpt) const;
    int max_arity() const;
    // All concepts share one arity.
    std::optional<int> common_arity() const;
    std::vector<int> arities() const;  // distinct, ascending

    // Structural validation of the definitions (ids, ranges, references).
    void validate() const;

    // Definitions only; grounded sets are ignored.
    bool same_definition(const KnowledgeBase& other) const {
        return alphabet == other.alphabet && concepts == other.concepts;
    }
};

class KbParseError : public Error {
public:
    KbParseError(const std::string& msg, int line, int column);
    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

KnowledgeBase parse_kb(std::string_view text);
std::string render_kb(const KnowledgeBase& kb);

KnowledgeBase ground(KnowledgeBase kb, const GroundOptions& options = {});

enum class BuiltinKind { ConjEq, Conjunction, Addition, Hed };

std::optional<BuiltinKind> builtin_kind_from_name(std::string_view name);
std::string builtin_name(BuiltinKind kind);

// Ungrounded; base is only consulted for Addition and Hed (range [2, 16]).
KnowledgeBase builtin_kb(BuiltinKind kind, int base = 10);

enum class NormalForm { Dnf, Cnf };

// Two concepts: "positive" (a random formula of full-width clauses) and
// "negative" (its complement). Deterministic in (form, arity, seed).
KnowledgeBase random_kb(NormalForm form, int arity, std::uint64_t seed);

// Keeps the named concepts (in KB order); Complement references to dropped
// concepts are replaced by their grounded sets when available.
KnowledgeBase select_concepts(const KnowledgeBase& kb, const std::vector<std::string>& ids);

// Enumerates every well-formed true equation of total token length `length`
// in the given base; digits use labels 0..base-1, '+' is base, '=' is base+1.
std::vector<LabelSeq> hed_equations(int base, int length);

std::string number_word(int n);

nlohmann::json grounded_to_json(const KnowledgeBase& kb);

} // namespace ablrank
