#include "ablrank/probmatrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ablrank {

namespace mp = boost::multiprecision;

ClassPrior ClassPrior::uniform(int num_classes) {
    if (num_classes < 1) throw Error("prior needs at least one class");
    ClassPrior p;
    p.probs.assign(static_cast<std::size_t>(num_classes), make_rational(1, num_classes));
    return p;
}

namespace {

// cpp_int reads a leading 0 as an octal prefix.
BigInt decimal(const std::string& digits) {
    auto first = digits.find_first_not_of('0');
    return first == std::string::npos ? BigInt(0) : BigInt(digits.substr(first));
}

Rational parse_rational(const std::string& raw) {
    std::string s;
    for (char ch : raw) {
        if (!std::isspace(static_cast<unsigned char>(ch))) s += ch;
    }
    if (s.empty()) throw Error("empty prior entry");
    auto all_digits = [](const std::string& t) {
        return !t.empty() && std::all_of(t.begin(), t.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); });
    };
    if (auto slash = s.find('/'); slash != std::string::npos) {
        std::string n = s.substr(0, slash), d = s.substr(slash + 1);
        if (!all_digits(n) || !all_digits(d)) throw Error("malformed fraction '" + raw + "'");
        BigInt den = decimal(d);
        if (den == 0) throw Error("zero denominator in '" + raw + "'");
        return Rational(decimal(n), den);
    }
    std::string whole = s, frac;
    if (auto dot = s.find('.'); dot != std::string::npos) {
        whole = s.substr(0, dot);
        frac = s.substr(dot + 1);
        if (whole.empty()) whole = "0";
    }
    if (!all_digits(whole) || (!frac.empty() && !all_digits(frac))) throw Error("malformed prior entry '" + raw + "'");
    BigInt den = mp::pow(BigInt(10), static_cast<unsigned>(frac.size()));
    return Rational(decimal(whole + frac), den);
}

} // namespace

ClassPrior ClassPrior::parse(const std::string& text) {
    ClassPrior p;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) p.probs.push_back(parse_rational(item));
    p.validate();
    return p;
}

bool ClassPrior::is_uniform() const {
    return std::all_of(probs.begin(), probs.end(), [&](const Rational& r) { return r == probs.front(); });
}

void ClassPrior::validate() const {
    if (probs.empty()) throw Error("empty class prior");
    Rational sum = 0;
    for (const auto& p : probs) {
        if (p < 0) throw Error("negative prior entry " + ablrank::to_string(p));
        sum += p;
    }
    if (sum != 1) throw Error("class prior sums to " + ablrank::to_string(sum) + ", not 1");
}

std::vector<double> ClassPrior::to_double() const {
    std::vector<double> out;
    for (const auto& p : probs) out.push_back(ablrank::to_double(p));
    return out;
}

std::vector<double> ProbMatrix::to_double() const {
    std::vector<double> out;
    out.reserve(data.size());
    for (const auto& r : data) out.push_back(ablrank::to_double(r));
    return out;
}

std::vector<int> ProbMatrix::column_offsets(const KnowledgeBase& kb) const {
    std::vector<int> offsets;
    int offset = 0;
    for (const auto& c : kb.concepts) {
        offsets.push_back(offset);
        offset += c.arity;
    }
    if (offset != cols()) throw Error("matrix columns do not match the knowledge base");
    return offsets;
}

Rational sequence_prior(const ClassPrior& prior, LabelView seq) {
    Rational p = 1;
    for (Label y : seq) {
        if (y >= prior.probs.size()) throw Error("label " + std::to_string(y) + " outside prior support");
        p *= prior.probs[y];
    }
    return p;
}

namespace {

// Prior entries over a common denominator D, so p(Y) = prod(num[y_k]) / D^m
// and sums over a candidate set stay in integer arithmetic.
struct IntegerPrior {
    std::vector<BigInt> num;
    BigInt den;

    explicit IntegerPrior(const ClassPrior& prior) {
        den = 1;
        for (const auto& p : prior.probs) den = mp::lcm(den, mp::denominator(p));
        for (const auto& p : prior.probs) num.push_back(mp::numerator(p) * (den / mp::denominator(p)));
    }
};

struct PositionMass {
    std::vector<BigInt> by_class_position;  // c x m, numerators over den^m
    BigInt total;                           // sum of p(Y) numerators
    BigInt scale;                           // den^m
};

PositionMass position_mass(const CandidateSet& cs, const ClassPrior& prior, int c) {
    IntegerPrior ip(prior);
    const int m = cs.arity();
    PositionMass pm;
    pm.by_class_position.assign(static_cast<std::size_t>(c) * m, BigInt(0));
    pm.total = 0;
    pm.scale = mp::pow(ip.den, static_cast<unsigned>(m));

    const bool unit = std::all_of(ip.num.begin(), ip.num.end(), [](const BigInt& n) { return n == 1; });
    if (unit) {
        std::vector<std::uint64_t> counts(static_cast<std::size_t>(c) * m, 0);
        for (std::size_t i = 0; i < cs.size(); ++i) {
            auto seq = cs[i];
            for (int k = 0; k < m; ++k) ++counts[static_cast<std::size_t>(seq[k]) * m + k];
        }
        for (std::size_t i = 0; i < counts.size(); ++i) pm.by_class_position[i] = counts[i];
        pm.total = cs.size();
        return pm;
    }
    for (std::size_t i = 0; i < cs.size(); ++i) {
        auto seq = cs[i];
        BigInt w = 1;
        for (Label y : seq) w *= ip.num[y];
        if (w == 0) continue;
        pm.total += w;
        for (int k = 0; k < m; ++k) pm.by_class_position[static_cast<std::size_t>(seq[k]) * m + k] += w;
    }
    return pm;
}

void check_prior(const KnowledgeBase& kb, const ClassPrior& prior) {
    prior.validate();
    if (prior.num_classes() != kb.num_classes()) {
        throw Error("prior has " + std::to_string(prior.num_classes()) + " entries for " +
                    std::to_string(kb.num_classes()) + " classes");
    }
}

std::vector<Column> columns_of(const KnowledgeBase& kb) {
    std::vector<Column> cols;
    for (const auto& c : kb.concepts) {
        for (int k = 0; k < c.arity; ++k) cols.push_back({c.id, k});
    }
    return cols;
}

std::string unreachable_message(const std::vector<int>& classes, const KnowledgeBase& kb) {
    std::string msg = "unreachable under KB: class";
    msg += classes.size() > 1 ? "es " : " ";
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (i) msg += ", ";
        msg += std::to_string(classes[i]);
        if (!kb.alphabet.names.empty()) msg += " (\"" + kb.alphabet.name(classes[i]) + "\")";
    }
    return msg;
}

} // namespace

Rational concept_prior(const KnowledgeBase& kb, const ClassPrior& prior, std::size_t cpt) {
    check_prior(kb, prior);
    auto pm = position_mass(kb.candidates(cpt), prior, kb.num_classes());
    return Rational(pm.total, pm.scale);
}

Rational concept_prior(const KnowledgeBase& kb, const ClassPrior& prior, std::string_view concept_id) {
    return concept_prior(kb, prior, kb.index_of(concept_id));
}

ProbMatrix location_matrix_uniform(const KnowledgeBase& kb) {
    if (kb.concepts.size() != 1) throw Error("location matrix needs exactly one concept");
    const auto& cs = kb.candidates(0);
    const int c = kb.num_classes();
    const int m = cs.arity();
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(c) * m, 0);
    for (std::size_t i = 0; i < cs.size(); ++i) {
        auto seq = cs[i];
        for (int k = 0; k < m; ++k) ++counts[static_cast<std::size_t>(seq[k]) * m + k];
    }
    std::vector<int> unreachable;
    ProbMatrix q;
    q.kind = MatrixKind::LocationQ;
    q.rows = c;
    q.columns = columns_of(kb);
    q.data.assign(static_cast<std::size_t>(c) * m, Rational(0));
    for (int j = 0; j < c; ++j) {
        std::uint64_t total = 0;
        for (int k = 0; k < m; ++k) total += counts[static_cast<std::size_t>(j) * m + k];
        if (total == 0) {
            unreachable.push_back(j);
            continue;
        }
        for (int k = 0; k < m; ++k) {
            q.at(j, k) = Rational(BigInt(counts[static_cast<std::size_t>(j) * m + k]), BigInt(total));
        }
    }
    if (!unreachable.empty()) throw Error(unreachable_message(unreachable, kb));
    q.prior = ClassPrior::uniform(c);
    q.concept_priors = {concept_prior(kb, q.prior, std::size_t{0})};
    q.a = location_constant(kb);
    q.b = q.concept_priors.front();
    return q;
}

std::vector<Rational> joint_distribution(const KnowledgeBase& kb, const ClassPrior& prior) {
    check_prior(kb, prior);
    const int c = kb.num_classes();
    const auto cols = columns_of(kb);
    const auto lengths = kb.arities();
    const std::size_t n = cols.size();

    std::vector<PositionMass> masses;
    for (std::size_t t = 0; t < kb.concepts.size(); ++t) masses.push_back(position_mass(kb.candidates(t), prior, c));

    // Coverage of each length: the probability that an i.i.d. draw of that
    // length lands in some candidate set.
    std::vector<Rational> coverage(lengths.size(), Rational(0));
    auto length_index = [&](int arity) {
        return static_cast<std::size_t>(std::find(lengths.begin(), lengths.end(), arity) - lengths.begin());
    };
    for (std::size_t t = 0; t < kb.concepts.size(); ++t) {
        coverage[length_index(kb.concepts[t].arity)] += Rational(masses[t].total, masses[t].scale);
    }

    std::vector<Rational> joint(static_cast<std::size_t>(c) * n, Rational(0));
    Rational total = 0;
    std::size_t offset = 0;
    for (std::size_t t = 0; t < kb.concepts.size(); ++t) {
        const int m = kb.concepts[t].arity;
        const Rational& cov = coverage[length_index(m)];
        if (cov != 0) {
            // p(length) / coverage(length) * p(iota = k | tau) / den^m
            Rational weight = Rational(1) / (Rational(static_cast<long long>(lengths.size())) * cov * m);
            weight /= masses[t].scale;
            for (int j = 0; j < c; ++j) {
                for (int k = 0; k < m; ++k) {
                    const auto& w = masses[t].by_class_position[static_cast<std::size_t>(j) * m + k];
                    if (w == 0) continue;
                    Rational v = weight * w;
                    joint[static_cast<std::size_t>(j) * n + offset + k] = v;
                    total += v;
                }
            }
        }
        offset += static_cast<std::size_t>(m);
    }
    if (total == 0) throw Error("knowledge base has zero probability under the prior");
    if (total != 1) {
        for (auto& v : joint) v /= total;
    }
    return joint;
}

ProbMatrix joint_matrix(const KnowledgeBase& kb, const ClassPrior& prior) {
    auto joint = joint_distribution(kb, prior);
    const int c = kb.num_classes();
    ProbMatrix q;
    q.kind = MatrixKind::TargetLocationQtilde;
    q.rows = c;
    q.columns = columns_of(kb);
    const std::size_t n = q.columns.size();
    q.data = std::move(joint);
    std::vector<int> unreachable;
    for (int j = 0; j < c; ++j) {
        Rational row_sum = 0;
        for (std::size_t o = 0; o < n; ++o) row_sum += q.at(j, static_cast<int>(o));
        if (row_sum == 0) {
            unreachable.push_back(j);
            continue;
        }
        for (std::size_t o = 0; o < n; ++o) q.at(j, static_cast<int>(o)) /= row_sum;
    }
    if (!unreachable.empty()) throw Error(unreachable_message(unreachable, kb));
    q.prior = prior;
    for (std::size_t t = 0; t < kb.concepts.size(); ++t) q.concept_priors.push_back(concept_prior(kb, prior, t));
    if (kb.concepts.size() == 1) q.a = location_constant(kb);
    q.b = *std::min_element(q.concept_priors.begin(), q.concept_priors.end());
    return q;
}

int rank_exact(const std::vector<Rational>& data, int rows, int cols) {
    if (data.size() != static_cast<std::size_t>(rows) * cols) throw Error("matrix shape mismatch");
    // Clearing denominators row by row keeps the rank and lets the
    // elimination run on integers.
    std::vector<std::vector<BigInt>> m(static_cast<std::size_t>(rows), std::vector<BigInt>(static_cast<std::size_t>(cols)));
    for (int i = 0; i < rows; ++i) {
        BigInt l = 1;
        for (int j = 0; j < cols; ++j) l = mp::lcm(l, mp::denominator(data[static_cast<std::size_t>(i) * cols + j]));
        for (int j = 0; j < cols; ++j) {
            const auto& r = data[static_cast<std::size_t>(i) * cols + j];
            m[i][j] = mp::numerator(r) * (l / mp::denominator(r));
        }
    }
    // Fraction-free (Bareiss) elimination; every division below is exact.
    int rank = 0;
    BigInt prev = 1;
    for (int col = 0; col < cols && rank < rows; ++col) {
        int pivot = -1;
        for (int r = rank; r < rows; ++r) {
            if (m[r][col] != 0) {
                pivot = r;
                break;
            }
        }
        if (pivot < 0) continue;
        std::swap(m[rank], m[pivot]);
        for (int r = rank + 1; r < rows; ++r) {
            for (int j = col + 1; j < cols; ++j) {
                m[r][j] = (m[rank][col] * m[r][j] - m[r][col] * m[rank][j]) / prev;
            }
            m[r][col] = 0;
        }
        prev = m[rank][col];
        ++rank;
    }
    return rank;
}

int rank_exact(const ProbMatrix& mat) { return rank_exact(mat.data, mat.rows, mat.cols()); }

int rank_numeric(const std::vector<double>& data, int rows, int cols, double tol) {
    if (data.size() != static_cast<std::size_t>(rows) * cols) throw Error("matrix shape mismatch");
    if (!(tol > 0)) throw Error("rank tolerance must be positive");
    std::vector<double> m = data;
    double scale = 0.0;
    for (double v : m) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) return 0;
    const double threshold = tol * scale;
    auto at = [&](int r, int c) -> double& { return m[static_cast<std::size_t>(r) * cols + c]; };
    int rank = 0;
    for (int col = 0; col < cols && rank < rows; ++col) {
        int pivot = rank;
        for (int r = rank + 1; r < rows; ++r) {
            if (std::abs(at(r, col)) > std::abs(at(pivot, col))) pivot = r;
        }
        if (std::abs(at(pivot, col)) <= threshold) continue;
        if (pivot != rank) {
            for (int j = 0; j < cols; ++j) std::swap(at(rank, j), at(pivot, j));
        }
        for (int r = rank + 1; r < rows; ++r) {
            double f = at(r, col) / at(rank, col);
            if (f == 0.0) continue;
            for (int j = col; j < cols; ++j) at(r, j) -= f * at(rank, j);
        }
        ++rank;
    }
    return rank;
}

int rank_numeric(const ProbMatrix& mat, double tol) { return rank_numeric(mat.to_double(), mat.rows, mat.cols(), tol); }

Rational location_constant(const KnowledgeBase& kb) {
    if (kb.concepts.size() != 1) throw Error("constant a is defined for single-concept knowledge bases only");
    const auto& cs = kb.candidates(0);
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(kb.num_classes()), 0);
    for (Label y : cs.flat()) ++counts[y];
    std::uint64_t best = *std::max_element(counts.begin(), counts.end());
    Rational a(BigInt(best), BigInt(cs.size()));
    if (a > cs.arity()) throw Error("internal: constant a exceeds the sequence length");
    return a;
}

BoundConstants bound_constants(const KnowledgeBase& kb, const ClassPrior& prior) {
    BoundConstants bc;
    bc.m = kb.max_arity();
    if (kb.concepts.size() == 1) {
        bc.a = location_constant(kb);
        bc.c_thm1 = std::log(to_double(*bc.a));
    }
    bool first = true;
    for (std::size_t t = 0; t < kb.concepts.size(); ++t) {
        Rational p = concept_prior(kb, prior, t);
        if (first || p < bc.b) bc.b = p;
        first = false;
    }
    if (bc.b == 0) throw Error("some concept has zero prior probability");
    bc.c_thm2 = std::log(static_cast<double>(bc.m)) - std::log(to_double(bc.b));
    return bc;
}

DiagnosisReport diagnose(const KnowledgeBase& kb, const ClassPrior& prior, std::string kb_id) {
    check_prior(kb, prior);
    DiagnosisReport report;
    report.kb_id = std::move(kb_id);
    report.classes = kb.num_classes();
    if (kb.concepts.size() == 1 && prior.is_uniform()) {
        report.matrix = location_matrix_uniform(kb);
    } else {
        report.matrix = joint_matrix(kb, prior);
    }
    report.rank = rank_exact(report.matrix);
    report.full_row_rank = report.rank == report.classes;
    report.verdict = report.full_row_rank ? Verdict::Learnable : Verdict::Insufficient;
    report.constants = bound_constants(kb, prior);
    return report;
}

std::string verdict_name(Verdict v) { return v == Verdict::Learnable ? "Learnable" : "Insufficient"; }

nlohmann::json rational_to_json(const Rational& r) {
    auto big = [](const BigInt& v) -> nlohmann::json {
        if (v >= std::numeric_limits<std::int64_t>::min() && v <= std::numeric_limits<std::int64_t>::max()) {
            return v.convert_to<std::int64_t>();
        }
        return v.str();
    };
    return nlohmann::json::array({big(mp::numerator(r)), big(mp::denominator(r))});
}

nlohmann::json to_json(const DiagnosisReport& report) {
    nlohmann::json j;
    j["kb_id"] = report.kb_id;
    j["classes"] = report.classes;
    j["matrix_kind"] = report.matrix.kind == MatrixKind::LocationQ ? "Q" : "Q_tilde";
    auto cols = nlohmann::json::array();
    for (const auto& c : report.matrix.columns) cols.push_back(nlohmann::json::array({c.concept_id, c.position}));
    j["columns"] = std::move(cols);
    auto rows = nlohmann::json::array();
    for (int r = 0; r < report.matrix.rows; ++r) {
        auto row = nlohmann::json::array();
        for (int c = 0; c < report.matrix.cols(); ++c) row.push_back(rational_to_json(report.matrix.at(r, c)));
        rows.push_back(std::move(row));
    }
    j["matrix"] = std::move(rows);
    j["rank"] = report.rank;
    j["full_row_rank"] = report.full_row_rank;
    j["verdict"] = verdict_name(report.verdict);
    j["a"] = report.constants.a ? rational_to_json(*report.constants.a) : nlohmann::json(nullptr);
    j["b"] = rational_to_json(report.constants.b);
    j["C_thm1"] = report.constants.c_thm1 ? nlohmann::json(*report.constants.c_thm1) : nlohmann::json(nullptr);
    j["C_thm2"] = report.constants.c_thm2;
    return j;
}

std::string to_text(const DiagnosisReport& report) {
    std::ostringstream os;
    os << "kb: " << report.kb_id << "\n";
    os << "matrix: " << (report.matrix.kind == MatrixKind::LocationQ ? "Q" : "Q~") << " (" << report.matrix.rows
       << " x " << report.matrix.cols() << ")\n";
    for (int r = 0; r < report.matrix.rows; ++r) {
        os << "  ";
        for (int c = 0; c < report.matrix.cols(); ++c) {
            if (c) os << ' ';
            os << to_string(report.matrix.at(r, c));
        }
        os << '\n';
    }
    os << "rank: " << report.rank << " / " << report.classes << "\n";
    os << "verdict: " << verdict_name(report.verdict) << "\n";
    if (report.constants.a) os << "a: " << to_string(*report.constants.a) << "\n";
    os << "b: " << to_string(report.constants.b) << "\n";
    os << "C_thm2: " << report.constants.c_thm2 << "\n";
    return os.str();
}

} // namespace ablrank
