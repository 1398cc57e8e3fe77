#include "ablrank/kb.hpp"

#include <algorithm>
#include <bit>
#include <map>
#include <numeric>
#include <set>

namespace ablrank {

void LabelAlphabet::validate() const {
    if (num_classes < 2) throw Error("alphabet needs at least 2 classes, got " + std::to_string(num_classes));
    if (num_classes > 256) throw Error("alphabet supports at most 256 classes");
    if (names.empty()) return;
    if (static_cast<int>(names.size()) != num_classes) {
        throw Error("alphabet has " + std::to_string(num_classes) + " classes but " +
                    std::to_string(names.size()) + " names");
    }
    std::set<std::string> seen(names.begin(), names.end());
    if (seen.size() != names.size()) throw Error("class names must be distinct");
}

std::string LabelAlphabet::name(int label) const {
    if (!names.empty()) return names.at(static_cast<std::size_t>(label));
    return std::to_string(label);
}

CandidateSet::CandidateSet(std::string concept_id, int arity, std::vector<Label> flat)
    : concept_id_(std::move(concept_id)), arity_(arity), flat_(std::move(flat)) {}

bool CandidateSet::contains(LabelView seq) const {
    if (static_cast<int>(seq.size()) != arity_) return false;
    std::size_t lo = 0, hi = size();
    while (lo < hi) {
        std::size_t mid = (lo + hi) / 2;
        auto row = (*this)[mid];
        if (std::lexicographical_compare(row.begin(), row.end(), seq.begin(), seq.end())) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    return lo < size() && std::equal(seq.begin(), seq.end(), (*this)[lo].begin());
}

std::vector<LabelSeq> CandidateSet::sequences() const {
    std::vector<LabelSeq> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) {
        auto row = (*this)[i];
        out.emplace_back(row.begin(), row.end());
    }
    return out;
}

std::optional<std::size_t> KnowledgeBase::find(std::string_view id) const {
    for (std::size_t i = 0; i < concepts.size(); ++i) {
        if (concepts[i].id == id) return i;
    }
    return std::nullopt;
}

std::size_t KnowledgeBase::index_of(std::string_view id) const {
    auto idx = find(id);
    if (!idx) throw Error("unknown concept '" + std::string(id) + "'");
    return *idx;
}

const CandidateSet& KnowledgeBase::candidates(std::size_t cpt) const {
    if (!is_grounded()) throw Error("knowledge base is not grounded");
    return grounded.at(cpt);
}

int KnowledgeBase::max_arity() const {
    int m = 0;
    for (const auto& c : concepts) m = std::max(m, c.arity);
    return m;
}

std::optional<int> KnowledgeBase::common_arity() const {
    if (concepts.empty()) return std::nullopt;
    int m = concepts.front().arity;
    for (const auto& c : concepts) {
        if (c.arity != m) return std::nullopt;
    }
    return m;
}

std::vector<int> KnowledgeBase::arities() const {
    std::set<int> s;
    for (const auto& c : concepts) s.insert(c.arity);
    return {s.begin(), s.end()};
}

void KnowledgeBase::validate() const {
    alphabet.validate();
    if (concepts.empty()) throw Error("knowledge base declares no concepts");
    std::set<std::string> ids;
    for (const auto& c : concepts) {
        if (!ids.insert(c.id).second) throw Error("duplicate concept id '" + c.id + "'");
        if (c.arity < 1) throw Error("concept '" + c.id + "' has non-positive arity");
    }
    for (const auto& c : concepts) {
        std::visit(
            [&](const auto& def) {
                using T = std::decay_t<decltype(def)>;
                if constexpr (std::is_same_v<T, FactsDef>) {
                    for (const auto& fact : def.facts) {
                        if (static_cast<int>(fact.size()) != c.arity) {
                            throw Error("fact of length " + std::to_string(fact.size()) + " in concept '" + c.id +
                                        "' of arity " + std::to_string(c.arity));
                        }
                        for (Label l : fact) {
                            if (l >= alphabet.num_classes) {
                                throw Error("label " + std::to_string(l) + " out of range");
                            }
                        }
                    }
                } else if constexpr (std::is_same_v<T, DnfDef> || std::is_same_v<T, CnfDef>) {
                    if (alphabet.num_classes != 2) {
                        throw Error("formula concept '" + c.id + "' requires a binary alphabet");
                    }
                    if (def.formula.max_var() >= c.arity) {
                        throw Error("formula of concept '" + c.id + "' references y" +
                                    std::to_string(def.formula.max_var()) + " beyond arity " +
                                    std::to_string(c.arity));
                    }
                } else if constexpr (std::is_same_v<T, ComplementDef>) {
                    auto target = find(def.of);
                    if (!target) throw Error("concept '" + c.id + "' complements unknown concept '" + def.of + "'");
                    if (concepts[*target].arity != c.arity) {
                        throw Error("concept '" + c.id + "' complements '" + def.of + "' of different arity");
                    }
                } else if constexpr (std::is_same_v<T, BuiltinDef>) {
                    if (def.kind == "hed") {
                        if (!def.base) throw Error("builtin hed in concept '" + c.id + "' needs a base");
                        if (*def.base < 2 || *def.base > 16) throw Error("hed base out of range [2, 16]");
                        if (alphabet.num_classes != *def.base + 2) {
                            throw Error("builtin hed base " + std::to_string(*def.base) + " needs " +
                                        std::to_string(*def.base + 2) + " classes");
                        }
                    } else if (def.kind != "any") {
                        throw Error("unknown builtin '" + def.kind + "'");
                    }
                }
            },
            c.definition);
    }
}

namespace {

std::uint64_t saturating_pow(std::uint64_t base, int exp) {
    std::uint64_t r = 1;
    for (int i = 0; i < exp; ++i) {
        if (r > UINT64_MAX / base) return UINT64_MAX;
        r *= base;
    }
    return r;
}

class Budget {
public:
    explicit Budget(std::uint64_t limit) : limit_(limit) {}
    void spend(std::uint64_t n, const std::string& cpt) {
        if (n > limit_ - used_) {
            throw Error("enumeration budget of " + std::to_string(limit_) + " sequences exceeded while grounding '" +
                        cpt + "'");
        }
        used_ += n;
    }

private:
    std::uint64_t limit_;
    std::uint64_t used_ = 0;
};

std::vector<Label> decode_codes(const std::vector<std::uint64_t>& codes, int arity, int c) {
    std::vector<Label> flat(codes.size() * static_cast<std::size_t>(arity));
    for (std::size_t i = 0; i < codes.size(); ++i) {
        std::uint64_t code = codes[i];
        for (int k = arity - 1; k >= 0; --k) {
            flat[i * arity + k] = static_cast<Label>(code % c);
            code /= c;
        }
    }
    return flat;
}

// Binary codes: y0 is the most significant bit so numeric order is lexicographic.
struct Cube {
    std::uint64_t mask = 0;
    std::uint64_t value = 0;
    bool empty = false;
};

Cube cube_of(const Formula& clause, int arity, bool literal_true) {
    Cube cube;
    auto add = [&](const Formula& lit) {
        std::uint64_t bit = 1ULL << (arity - 1 - lit.var);
        // literal_true: the literal must hold; otherwise it must fail.
        bool wants_one = (!lit.negated) == literal_true;
        std::uint64_t v = wants_one ? bit : 0;
        if ((cube.mask & bit) && (cube.value & bit) != v) cube.empty = true;
        cube.mask |= bit;
        cube.value |= v;
    };
    if (clause.op == Formula::Op::Literal) {
        add(clause);
    } else {
        for (const auto& lit : clause.children) add(lit);
    }
    return cube;
}

std::vector<std::uint64_t> expand_cubes(const std::vector<Cube>& cubes, int arity, Budget& budget,
                                        const std::string& cpt) {
    const std::uint64_t full = arity == 64 ? ~0ULL : ((1ULL << arity) - 1);
    std::vector<std::uint64_t> codes;
    for (const auto& cube : cubes) {
        if (cube.empty) continue;
        std::uint64_t free = full & ~cube.mask;
        budget.spend(1ULL << std::popcount(free), cpt);
        std::uint64_t sub = 0;
        do {
            codes.push_back(cube.value | sub);
            sub = (sub - free) & free;
        } while (sub != 0);
    }
    std::sort(codes.begin(), codes.end());
    codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
    return codes;
}

std::vector<std::uint64_t> complement_codes(const std::vector<std::uint64_t>& sorted, std::uint64_t total) {
    std::vector<std::uint64_t> out;
    out.reserve(total - sorted.size());
    std::size_t j = 0;
    for (std::uint64_t code = 0; code < total; ++code) {
        if (j < sorted.size() && sorted[j] == code) {
            ++j;
        } else {
            out.push_back(code);
        }
    }
    return out;
}

std::vector<Label> ground_formula(const Formula& f, bool cnf_tag, int arity, Budget& budget,
                                  const std::string& cpt) {
    if (arity > 62) throw Error("formula concept '" + cpt + "' arity too large to enumerate");
    const std::uint64_t total = 1ULL << arity;
    std::vector<std::uint64_t> codes;
    // Prefer the shape the author declared when a formula fits both.
    bool use_cnf = cnf_tag ? f.is_cnf() : (!f.is_dnf() && f.is_cnf());
    if (!use_cnf && f.is_dnf()) {
        std::vector<Cube> cubes;
        if (f.op == Formula::Op::Or) {
            for (const auto& clause : f.children) cubes.push_back(cube_of(clause, arity, true));
        } else {
            cubes.push_back(cube_of(f, arity, true));
        }
        codes = expand_cubes(cubes, arity, budget, cpt);
    } else if (use_cnf) {
        // A clause fails exactly on the cube where every literal is false.
        std::vector<Cube> falsifiers;
        if (f.op == Formula::Op::And) {
            for (const auto& clause : f.children) falsifiers.push_back(cube_of(clause, arity, false));
        } else {
            falsifiers.push_back(cube_of(f, arity, false));
        }
        auto bad = expand_cubes(falsifiers, arity, budget, cpt);
        budget.spend(total - bad.size(), cpt);
        codes = complement_codes(bad, total);
    } else {
        budget.spend(total, cpt);
        LabelSeq seq(static_cast<std::size_t>(arity));
        for (std::uint64_t code = 0; code < total; ++code) {
            for (int k = 0; k < arity; ++k) seq[k] = static_cast<Label>((code >> (arity - 1 - k)) & 1ULL);
            if (f.eval(seq)) codes.push_back(code);
        }
    }
    return decode_codes(codes, arity, 2);
}

std::vector<Label> ground_all(int arity, int c, Budget& budget, const std::string& cpt) {
    std::uint64_t total = saturating_pow(static_cast<std::uint64_t>(c), arity);
    budget.spend(total, cpt);
    std::vector<std::uint64_t> codes(total);
    std::iota(codes.begin(), codes.end(), 0ULL);
    return decode_codes(codes, arity, c);
}

std::vector<Label> ground_complement(const CandidateSet& base, int c, Budget& budget, const std::string& cpt) {
    const int arity = base.arity();
    std::uint64_t total = saturating_pow(static_cast<std::uint64_t>(c), arity);
    budget.spend(total, cpt);
    std::vector<Label> out;
    LabelSeq seq(static_cast<std::size_t>(arity), 0);
    std::size_t j = 0;
    for (std::uint64_t n = 0; n < total; ++n) {
        if (j < base.size() && std::equal(seq.begin(), seq.end(), base[j].begin())) {
            ++j;
        } else {
            out.insert(out.end(), seq.begin(), seq.end());
        }
        for (int k = arity - 1; k >= 0; --k) {
            if (++seq[k] < c) break;
            seq[k] = 0;
        }
    }
    return out;
}

std::vector<Label> sorted_unique(std::vector<LabelSeq> seqs) {
    std::sort(seqs.begin(), seqs.end());
    seqs.erase(std::unique(seqs.begin(), seqs.end()), seqs.end());
    std::vector<Label> flat;
    for (const auto& s : seqs) flat.insert(flat.end(), s.begin(), s.end());
    return flat;
}

void check_disjoint(const KnowledgeBase& kb) {
    std::map<int, std::vector<std::pair<LabelView, std::size_t>>> by_arity;
    for (std::size_t t = 0; t < kb.grounded.size(); ++t) {
        const auto& cs = kb.grounded[t];
        auto& bucket = by_arity[cs.arity()];
        for (std::size_t i = 0; i < cs.size(); ++i) bucket.emplace_back(cs[i], t);
    }
    for (auto& [arity, entries] : by_arity) {
        std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
            return std::lexicographical_compare(a.first.begin(), a.first.end(), b.first.begin(), b.first.end());
        });
        for (std::size_t i = 1; i < entries.size(); ++i) {
            const auto& prev = entries[i - 1];
            const auto& cur = entries[i];
            if (std::equal(prev.first.begin(), prev.first.end(), cur.first.begin())) {
                std::string seq;
                for (Label l : cur.first) seq += (seq.empty() ? "" : ",") + std::to_string(l);
                throw Error("candidate sets of concepts '" + kb.concepts[prev.second].id + "' and '" +
                            kb.concepts[cur.second].id + "' overlap at [" + seq + "]");
            }
        }
    }
}

} // namespace

KnowledgeBase ground(KnowledgeBase kb, const GroundOptions& options) {
    kb.validate();
    const int c = kb.num_classes();
    Budget budget(options.budget);
    std::vector<std::optional<CandidateSet>> sets(kb.concepts.size());

    for (std::size_t t = 0; t < kb.concepts.size(); ++t) {
        const auto& cpt = kb.concepts[t];
        std::optional<std::vector<Label>> flat;
        std::visit(
            [&](const auto& def) {
                using T = std::decay_t<decltype(def)>;
                if constexpr (std::is_same_v<T, FactsDef>) {
                    budget.spend(def.facts.size(), cpt.id);
                    flat = sorted_unique(def.facts);
                } else if constexpr (std::is_same_v<T, DnfDef>) {
                    flat = ground_formula(def.formula, false, cpt.arity, budget, cpt.id);
                } else if constexpr (std::is_same_v<T, CnfDef>) {
                    flat = ground_formula(def.formula, true, cpt.arity, budget, cpt.id);
                } else if constexpr (std::is_same_v<T, BuiltinDef>) {
                    if (def.kind == "hed") {
                        auto eqs = hed_equations(*def.base, cpt.arity);
                        budget.spend(eqs.size(), cpt.id);
                        flat = sorted_unique(std::move(eqs));
                    } else {
                        flat = ground_all(cpt.arity, c, budget, cpt.id);
                    }
                }
            },
            cpt.definition);
        if (flat) sets[t] = CandidateSet(cpt.id, cpt.arity, std::move(*flat));
    }

    // Complements may chain; resolve until no progress.
    bool progress = true;
    while (progress) {
        progress = false;
        for (std::size_t t = 0; t < kb.concepts.size(); ++t) {
            if (sets[t]) continue;
            const auto& def = std::get<ComplementDef>(kb.concepts[t].definition);
            const auto& base = sets[kb.index_of(def.of)];
            if (!base) continue;
            sets[t] = CandidateSet(kb.concepts[t].id, kb.concepts[t].arity,
                                   ground_complement(*base, c, budget, kb.concepts[t].id));
            progress = true;
        }
    }

    kb.grounded.clear();
    for (std::size_t t = 0; t < kb.concepts.size(); ++t) {
        if (!sets[t]) throw Error("cyclic complement reference involving concept '" + kb.concepts[t].id + "'");
        if (sets[t]->empty()) throw Error("empty candidate set for concept '" + kb.concepts[t].id + "'");
        kb.grounded.push_back(std::move(*sets[t]));
    }
    check_disjoint(kb);
    return kb;
}

KnowledgeBase select_concepts(const KnowledgeBase& kb, const std::vector<std::string>& ids) {
    KnowledgeBase out;
    out.alphabet = kb.alphabet;
    std::vector<std::size_t> keep;
    for (std::size_t t = 0; t < kb.concepts.size(); ++t) {
        if (std::find(ids.begin(), ids.end(), kb.concepts[t].id) != ids.end()) keep.push_back(t);
    }
    for (const auto& id : ids) kb.index_of(id);
    for (std::size_t t : keep) {
        Concept cpt = kb.concepts[t];
        if (auto* comp = std::get_if<ComplementDef>(&cpt.definition)) {
            bool kept = std::find(ids.begin(), ids.end(), comp->of) != ids.end();
            if (!kept) {
                if (!kb.is_grounded()) {
                    throw Error("cannot drop '" + comp->of + "' referenced by ungrounded complement '" + cpt.id + "'");
                }
                cpt.definition = FactsDef{kb.grounded[t].sequences()};
            }
        }
        out.concepts.push_back(std::move(cpt));
    }
    if (kb.is_grounded()) {
        for (std::size_t t : keep) out.grounded.push_back(kb.grounded[t]);
    }
    return out;
}

nlohmann::json grounded_to_json(const KnowledgeBase& kb) {
    nlohmann::json j;
    j["classes"] = kb.num_classes();
    j["names"] = kb.alphabet.names;
    auto concepts = nlohmann::json::array();
    for (std::size_t t = 0; t < kb.concepts.size(); ++t) {
        nlohmann::json cj;
        cj["id"] = kb.concepts[t].id;
        cj["arity"] = kb.concepts[t].arity;
        auto cands = nlohmann::json::array();
        for (const auto& seq : kb.candidates(t).sequences()) {
            cands.push_back(std::vector<int>(seq.begin(), seq.end()));
        }
        cj["candidates"] = std::move(cands);
        concepts.push_back(std::move(cj));
    }
    j["concepts"] = std::move(concepts);
    return j;
}

} // namespace ablrank
