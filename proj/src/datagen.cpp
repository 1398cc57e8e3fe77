#include "ablrank/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace ablrank {

namespace {

constexpr std::uint64_t kDataStream = 0x64617461ULL;
constexpr double kMinCoverage = 1e-6;
constexpr std::uint64_t kMaxBitsetCodes = std::uint64_t{1} << 27;

std::uint64_t encode(LabelView seq, int c) {
    std::uint64_t code = 0;
    for (Label y : seq) code = code * static_cast<std::uint64_t>(c) + y;
    return code;
}

} // namespace

FeatureModel FeatureModel::standard(int num_classes, double sep, double sigma, std::uint64_t seed, int dim) {
    if (dim == 0) dim = num_classes;
    if (dim < num_classes) throw Error("feature dimension must be at least the class count");
    FeatureModel m;
    m.dim = dim;
    m.noise_sigma = sigma;
    m.seed = seed;
    for (int j = 0; j < num_classes; ++j) {
        std::vector<double> mean(static_cast<std::size_t>(dim), 0.0);
        mean[static_cast<std::size_t>(j)] = sep;
        m.class_means.push_back(std::move(mean));
    }
    m.validate();
    return m;
}

void FeatureModel::validate() const {
    if (dim < 1) throw Error("feature dimension must be positive");
    if (class_means.size() < 2) throw Error("feature model needs at least two classes");
    if (!(noise_sigma > 0) || !std::isfinite(noise_sigma)) throw Error("noise sigma must be positive");
    for (std::size_t i = 0; i < class_means.size(); ++i) {
        if (class_means[i].size() != static_cast<std::size_t>(dim)) throw Error("class mean has wrong dimension");
        for (std::size_t j = 0; j < i; ++j) {
            if (class_means[i] == class_means[j]) throw Error("class means must be pairwise distinct");
        }
    }
}

void sample_instance(const FeatureModel& model, Label y, Rng& rng, std::span<double> out) {
    if (y >= model.class_means.size()) throw Error("label " + std::to_string(y) + " outside feature model");
    std::normal_distribution<double> noise(0.0, 1.0);
    const auto& mean = model.class_means[y];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = mean[i] + model.noise_sigma * noise(rng);
}

std::vector<double> sample_instance(const FeatureModel& model, Label y, Rng& rng) {
    std::vector<double> x(static_cast<std::size_t>(model.dim));
    sample_instance(model, y, rng, x);
    return x;
}

std::string mode_name(SamplingMode mode) { return mode == SamplingMode::Uniform ? "uniform" : "generative"; }

SamplingMode mode_from_name(std::string_view name) {
    if (name == "uniform") return SamplingMode::Uniform;
    if (name == "generative") return SamplingMode::Generative;
    throw Error("unknown sampling mode '" + std::string(name) + "'");
}

std::size_t SequenceDataset::num_instances() const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.y_true.size();
    return n;
}

namespace {

SequenceRecord with_features(std::size_t concept_index, LabelSeq labels, const FeatureModel& model, Rng& rng) {
    SequenceRecord rec;
    rec.concept_index = concept_index;
    rec.x.resize(labels.size() * static_cast<std::size_t>(model.dim));
    for (std::size_t k = 0; k < labels.size(); ++k) {
        sample_instance(model, labels[k], rng,
                        std::span<double>(rec.x).subspan(k * model.dim, static_cast<std::size_t>(model.dim)));
    }
    rec.y_true = std::move(labels);
    return rec;
}

} // namespace

SequenceRecord sample_uniform(const KnowledgeBase& kb, std::size_t concept_index, const FeatureModel& model,
                              Rng& rng) {
    const auto& cs = kb.candidates(concept_index);
    if (cs.empty()) throw Error("empty candidate set for '" + cs.concept_id() + "'");
    std::uniform_int_distribution<std::size_t> pick(0, cs.size() - 1);
    auto seq = cs[pick(rng)];
    return with_features(concept_index, LabelSeq(seq.begin(), seq.end()), model, rng);
}

GenerativeSampler::GenerativeSampler(const KnowledgeBase& kb, const ClassPrior& prior)
    : kb_(kb), classes_(kb.num_classes()) {
    if (!kb.is_grounded()) throw Error("knowledge base is not grounded");
    if (prior.num_classes() != classes_) throw Error("prior size does not match the class count");
    prior.validate();
    {
        auto p = prior.to_double();
        label_dist_ = std::discrete_distribution<int>(p.begin(), p.end());
    }
    uniform_prior_ = prior.is_uniform();
    for (int arity : kb.arities()) {
        if (std::pow(static_cast<double>(classes_), arity) >= 1.8e19) {
            throw Error("sequence length " + std::to_string(arity) + " too long for the generative sampler");
        }
        LengthTable table;
        table.arity = arity;
        table.codes = 1;
        for (int k = 0; k < arity; ++k) table.codes *= static_cast<std::uint64_t>(classes_);
        const bool bitset = table.codes <= kMaxBitsetCodes;
        if (bitset) table.member_bits.assign((table.codes + 63) / 64, 0);
        table.prefixes.resize(static_cast<std::size_t>(arity));
        Rational cov = 0;
        for (std::size_t t = 0; t < kb.concepts.size(); ++t) {
            const auto& cs = kb.candidates(t);
            if (cs.arity() != arity) continue;
            cov += concept_prior(kb, prior, t);
            for (std::size_t i = 0; i < cs.size(); ++i) {
                auto seq = cs[i];
                for (int len = 1; len < arity; ++len) table.prefixes[len].insert(encode(seq.first(len), classes_));
                const auto code = encode(seq, classes_);
                table.owner.emplace(code, t);
                if (bitset) table.member_bits[code / 64] |= std::uint64_t{1} << (code % 64);
            }
        }
        double c = to_double(cov);
        if (c < kMinCoverage) throw Error("KB coverage too sparse for generative mode");
        coverage_.push_back(c);
        tables_.push_back(std::move(table));
    }
}

std::size_t GenerativeSampler::draw_labels(Rng& rng, LabelSeq& out) {
    std::uniform_int_distribution<std::size_t> length_pick(0, tables_.size() - 1);
    const auto& table = tables_[length_pick(rng)];
    out.resize(static_cast<std::size_t>(table.arity));
    if (uniform_prior_ && !table.member_bits.empty()) {
        // i.i.d. uniform labels are a uniform code in [0, c^arity).
        std::uniform_int_distribution<std::uint64_t> code_pick(0, table.codes - 1);
        while (true) {
            ++attempts_;
            const std::uint64_t code = code_pick(rng);
            if (!(table.member_bits[code / 64] >> (code % 64) & 1)) continue;
            ++accepted_;
            std::uint64_t rest = code;
            for (int k = table.arity - 1; k >= 0; --k) {
                out[k] = static_cast<Label>(rest % static_cast<std::uint64_t>(classes_));
                rest /= static_cast<std::uint64_t>(classes_);
            }
            return table.owner.at(code);
        }
    }
    while (true) {
        ++attempts_;
        std::uint64_t code = 0;
        bool alive = true;
        for (int k = 0; k < table.arity; ++k) {
            out[k] = static_cast<Label>(label_dist_(rng));
            code = code * static_cast<std::uint64_t>(classes_) + out[k];
            if (k + 1 < table.arity && !table.prefixes[k + 1].count(code)) {
                alive = false;
                break;
            }
        }
        if (!alive) continue;
        auto it = table.owner.find(code);
        if (it == table.owner.end()) continue;
        ++accepted_;
        return it->second;
    }
}

SequenceRecord GenerativeSampler::sample(const FeatureModel& model, Rng& rng) {
    LabelSeq labels;
    std::size_t t = draw_labels(rng, labels);
    return with_features(t, std::move(labels), model, rng);
}

SequenceRecord sample_generative(const KnowledgeBase& kb, const ClassPrior& prior, const FeatureModel& model,
                                 Rng& rng) {
    GenerativeSampler sampler(kb, prior);
    return sampler.sample(model, rng);
}

SequenceDataset make_dataset(const KnowledgeBase& kb, SamplingMode mode, const ClassPrior& prior,
                             const FeatureModel& model, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw Error("dataset size must be at least 1");
    if (!kb.is_grounded()) throw Error("knowledge base is not grounded");
    model.validate();
    if (model.num_classes() != kb.num_classes()) throw Error("feature model class count does not match the KB");
    SequenceDataset data;
    data.classes = kb.num_classes();
    data.dim = model.dim;
    data.mode = mode;
    data.prior = prior;
    data.seed = seed;
    for (const auto& c : kb.concepts) data.concept_ids.push_back(c.id);
    data.records.reserve(n);

    Rng rng(derive_seed(seed, kDataStream));
    if (mode == SamplingMode::Uniform) {
        std::uniform_int_distribution<std::size_t> concept_pick(0, kb.concepts.size() - 1);
        for (std::size_t i = 0; i < n; ++i) data.records.push_back(sample_uniform(kb, concept_pick(rng), model, rng));
    } else {
        GenerativeSampler sampler(kb, prior);
        for (std::size_t i = 0; i < n; ++i) data.records.push_back(sampler.sample(model, rng));
    }
    return data;
}

namespace {

constexpr const char* kSchema = "abl-rank/v1";

Rational rational_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 2) throw Error("prior entry must be [num, den]");
    auto big = [](const nlohmann::json& v) -> BigInt {
        if (v.is_number_integer()) return BigInt(v.get<std::int64_t>());
        if (v.is_string()) return BigInt(v.get<std::string>());
        throw Error("prior entry must hold integers");
    };
    BigInt den = big(j[1]);
    if (den == 0) throw Error("zero denominator in prior");
    return Rational(big(j[0]), den);
}

[[noreturn]] void schema_error(std::size_t line, const std::string& msg) {
    throw Error("dataset line " + std::to_string(line) + ": " + msg);
}

} // namespace

void write_dataset(std::ostream& os, const SequenceDataset& data, const KnowledgeBase& kb) {
    nlohmann::json header;
    header["schema"] = kSchema;
    header["classes"] = data.classes;
    header["dim"] = data.dim;
    header["mode"] = mode_name(data.mode);
    header["seed"] = data.seed;
    auto prior = nlohmann::json::array();
    for (const auto& p : data.prior.probs) prior.push_back(rational_to_json(p));
    header["prior"] = std::move(prior);
    header["n"] = data.records.size();
    os << header.dump() << '\n';
    for (const auto& rec : data.records) {
        nlohmann::json j;
        j["concept"] = kb.concepts.at(rec.concept_index).id;
        auto xs = nlohmann::json::array();
        for (std::size_t k = 0; k < rec.y_true.size(); ++k) {
            auto row = nlohmann::json::array();
            for (int d = 0; d < data.dim; ++d) row.push_back(rec.x[k * data.dim + d]);
            xs.push_back(std::move(row));
        }
        j["x"] = std::move(xs);
        auto ys = nlohmann::json::array();
        for (Label y : rec.y_true) ys.push_back(static_cast<int>(y));
        j["y_true"] = std::move(ys);
        os << j.dump() << '\n';
    }
    if (!os) throw Error("failed to write dataset");
}

SequenceDataset read_dataset(std::istream& is, const KnowledgeBase& kb) {
    SequenceDataset data;
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(is, line)) throw Error("dataset is empty");
    ++lineno;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
        if (header.value("schema", std::string()) != kSchema) schema_error(lineno, "unknown schema");
        data.classes = header.at("classes").get<int>();
        data.dim = header.at("dim").get<int>();
        data.mode = mode_from_name(header.at("mode").get<std::string>());
        data.seed = header.at("seed").get<std::uint64_t>();
        if (header.contains("prior")) {
            for (const auto& p : header["prior"]) data.prior.probs.push_back(rational_from_json(p));
            data.prior.validate();
        } else {
            data.prior = ClassPrior::uniform(data.classes);
        }
    } catch (const nlohmann::json::exception& e) {
        schema_error(lineno, std::string("bad header: ") + e.what());
    }
    if (data.classes != kb.num_classes()) schema_error(lineno, "class count does not match the knowledge base");
    if (data.dim < 1) schema_error(lineno, "dimension must be positive");
    if (data.prior.num_classes() != data.classes) schema_error(lineno, "prior size does not match class count");
    for (const auto& c : kb.concepts) data.concept_ids.push_back(c.id);

    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        SequenceRecord rec;
        try {
            auto j = nlohmann::json::parse(line);
            auto id = j.at("concept").get<std::string>();
            auto idx = kb.find(id);
            if (!idx) schema_error(lineno, "unknown concept '" + id + "'");
            rec.concept_index = *idx;
            const int arity = kb.concepts[*idx].arity;
            const auto& xs = j.at("x");
            const auto& ys = j.at("y_true");
            if (xs.size() != static_cast<std::size_t>(arity) || ys.size() != static_cast<std::size_t>(arity)) {
                schema_error(lineno, "sequence length does not match the arity of '" + id + "'");
            }
            for (const auto& row : xs) {
                if (row.size() != static_cast<std::size_t>(data.dim)) schema_error(lineno, "feature row has wrong dimension");
                for (const auto& v : row) rec.x.push_back(v.get<double>());
            }
            for (const auto& y : ys) {
                int v = y.get<int>();
                if (v < 0 || v >= data.classes) schema_error(lineno, "label " + std::to_string(v) + " out of range");
                rec.y_true.push_back(static_cast<Label>(v));
            }
        } catch (const nlohmann::json::exception& e) {
            schema_error(lineno, e.what());
        }
        if (kb.is_grounded() && !kb.candidates(rec.concept_index).contains(rec.y_true)) {
            schema_error(lineno, "y_true is not a candidate of its concept");
        }
        data.records.push_back(std::move(rec));
    }
    if (data.records.empty()) throw Error("dataset has no records");
    if (header.contains("n") && header["n"].get<std::size_t>() != data.records.size()) {
        throw Error("dataset header announces " + std::to_string(header["n"].get<std::size_t>()) + " records, found " +
                    std::to_string(data.records.size()));
    }
    return data;
}

void write_dataset_file(const std::string& path, const SequenceDataset& data, const KnowledgeBase& kb) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    write_dataset(os, data, kb);
}

SequenceDataset read_dataset_file(const std::string& path, const KnowledgeBase& kb) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open '" + path + "'");
    return read_dataset(is, kb);
}

LabeledInstances labeled_instances(const SequenceDataset& data) {
    LabeledInstances out;
    out.dim = data.dim;
    out.classes = data.classes;
    for (const auto& rec : data.records) {
        out.x.insert(out.x.end(), rec.x.begin(), rec.x.end());
        out.y.insert(out.y.end(), rec.y_true.begin(), rec.y_true.end());
    }
    return out;
}

} // namespace ablrank
