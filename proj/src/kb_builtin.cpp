#include "ablrank/kb.hpp"

#include <algorithm>
#include <array>
#include <set>

namespace ablrank {

namespace {

std::vector<int> digits_of(long long n, int base) {
    if (n == 0) return {0};
    std::vector<int> d;
    while (n > 0) {
        d.push_back(static_cast<int>(n % base));
        n /= base;
    }
    std::reverse(d.begin(), d.end());
    return d;
}

long long ipow(long long b, int e) {
    long long r = 1;
    for (int i = 0; i < e; ++i) r *= b;
    return r;
}

// Canonical numerals of exactly `len` digits: no leading zero unless the
// numeral is the single digit 0.
std::pair<long long, long long> numeral_range(int base, int len) {
    if (len == 1) return {0, base - 1};
    return {ipow(base, len - 1), ipow(base, len) - 1};
}

void check_base(int base) {
    if (base < 2 || base > 16) throw Error("base " + std::to_string(base) + " out of range [2, 16]");
}

} // namespace

std::vector<LabelSeq> hed_equations(int base, int length) {
    check_base(base);
    const Label plus = static_cast<Label>(base);
    const Label equals = static_cast<Label>(base + 1);
    std::vector<LabelSeq> out;
    const int digits = length - 2;
    for (int la = 1; la <= digits - 2; ++la) {
        for (int lb = 1; la + lb <= digits - 1; ++lb) {
            const int lc = digits - la - lb;
            auto [alo, ahi] = numeral_range(base, la);
            auto [blo, bhi] = numeral_range(base, lb);
            auto [clo, chi] = numeral_range(base, lc);
            for (long long a = alo; a <= ahi; ++a) {
                for (long long b = blo; b <= bhi; ++b) {
                    long long sum = a + b;
                    if (sum < clo) continue;
                    if (sum > chi) break;
                    LabelSeq seq;
                    for (int d : digits_of(a, base)) seq.push_back(static_cast<Label>(d));
                    seq.push_back(plus);
                    for (int d : digits_of(b, base)) seq.push_back(static_cast<Label>(d));
                    seq.push_back(equals);
                    for (int d : digits_of(sum, base)) seq.push_back(static_cast<Label>(d));
                    out.push_back(std::move(seq));
                }
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string number_word(int n) {
    static const std::array<const char*, 20> small = {
        "zero",    "one",     "two",       "three",    "four",     "five",    "six",
        "seven",   "eight",   "nine",      "ten",      "eleven",   "twelve",  "thirteen",
        "fourteen", "fifteen", "sixteen",  "seventeen", "eighteen", "nineteen"};
    static const std::array<const char*, 10> tens = {"", "", "twenty", "thirty", "forty",
                                                     "fifty", "sixty", "seventy", "eighty", "ninety"};
    if (n < 0 || n >= 100) throw Error("number_word supports 0..99");
    if (n < 20) return small[static_cast<std::size_t>(n)];
    std::string w = tens[static_cast<std::size_t>(n / 10)];
    if (n % 10) w += std::string("_") + small[static_cast<std::size_t>(n % 10)];
    return w;
}

std::optional<BuiltinKind> builtin_kind_from_name(std::string_view name) {
    if (name == "conj_eq" || name == "conjeq") return BuiltinKind::ConjEq;
    if (name == "conjunction") return BuiltinKind::Conjunction;
    if (name == "addition") return BuiltinKind::Addition;
    if (name == "hed") return BuiltinKind::Hed;
    return std::nullopt;
}

std::string builtin_name(BuiltinKind kind) {
    switch (kind) {
    case BuiltinKind::ConjEq: return "conj_eq";
    case BuiltinKind::Conjunction: return "conjunction";
    case BuiltinKind::Addition: return "addition";
    case BuiltinKind::Hed: return "hed";
    }
    return "unknown";
}

KnowledgeBase builtin_kb(BuiltinKind kind, int base) {
    KnowledgeBase kb;
    switch (kind) {
    case BuiltinKind::ConjEq:
        kb.alphabet.num_classes = 2;
        kb.concepts.push_back({"conj", 3, FactsDef{{{0, 0, 0}, {0, 1, 0}, {1, 0, 0}, {1, 1, 1}}}});
        break;
    case BuiltinKind::Conjunction:
        kb.alphabet.num_classes = 2;
        kb.concepts.push_back({"conj0", 2, FactsDef{{{0, 0}, {0, 1}, {1, 0}}}});
        kb.concepts.push_back({"conj1", 2, FactsDef{{{1, 1}}}});
        break;
    case BuiltinKind::Addition: {
        check_base(base);
        kb.alphabet.num_classes = base;
        for (int sum = 0; sum <= 2 * (base - 1); ++sum) {
            FactsDef facts;
            for (int a = 0; a < base; ++a) {
                int b = sum - a;
                if (b >= 0 && b < base) facts.facts.push_back({static_cast<Label>(a), static_cast<Label>(b)});
            }
            kb.concepts.push_back({number_word(sum), 2, std::move(facts)});
        }
        break;
    }
    case BuiltinKind::Hed: {
        check_base(base);
        kb.alphabet.num_classes = base + 2;
        for (int d = 0; d < base; ++d) {
            kb.alphabet.names.push_back(std::string(1, "0123456789abcdef"[d]));
        }
        kb.alphabet.names.push_back("+");
        kb.alphabet.names.push_back("=");
        for (int len = 5; len <= 7; ++len) {
            kb.concepts.push_back({"equation" + std::to_string(len), len, BuiltinDef{"hed", base}});
        }
        break;
    }
    }
    return kb;
}

KnowledgeBase random_kb(NormalForm form, int arity, std::uint64_t seed) {
    if (arity < 2 || arity > 20) throw Error("random KB arity must be in [2, 20]");
    Rng rng(derive_seed(seed, 0x72616e646b62ULL, form == NormalForm::Dnf ? 0 : 1, arity));
    std::uniform_int_distribution<std::uint64_t> count_dist(1, 1ULL << (arity - 1));
    std::uniform_int_distribution<int> bit(0, 1);

    constexpr int kMaxAttempts = 64;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        const std::uint64_t k = count_dist(rng);
        std::vector<std::vector<int>> clauses;
        std::set<std::vector<int>> seen;
        for (std::uint64_t i = 0; i < k; ++i) {
            std::vector<int> polarity(static_cast<std::size_t>(arity));
            for (auto& p : polarity) p = bit(rng);
            if (seen.insert(polarity).second) clauses.push_back(std::move(polarity));
        }
        if (clauses.empty()) continue;

        std::vector<Formula> parts;
        for (const auto& polarity : clauses) {
            std::vector<Formula> lits;
            for (int v = 0; v < arity; ++v) lits.push_back(Formula::literal(v, polarity[v] == 0));
            parts.push_back(form == NormalForm::Dnf ? Formula::conjunction(std::move(lits))
                                                    : Formula::disjunction(std::move(lits)));
        }
        KnowledgeBase kb;
        kb.alphabet.num_classes = 2;
        if (form == NormalForm::Dnf) {
            kb.concepts.push_back({"positive", arity, DnfDef{Formula::disjunction(std::move(parts))}});
        } else {
            kb.concepts.push_back({"positive", arity, CnfDef{Formula::conjunction(std::move(parts))}});
        }
        kb.concepts.push_back({"negative", arity, ComplementDef{"positive"}});
        try {
            ground(kb);
        } catch (const Error&) {
            continue;  // tautology or contradiction; draw again
        }
        return kb;
    }
    throw Error("random KB generation exhausted retries");
}

} // namespace ablrank
