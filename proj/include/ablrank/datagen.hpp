#pragma once

#include "ablrank/kb.hpp"
#include "ablrank/probmatrix.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace ablrank {

struct FeatureModel {
    int dim = 2;
    std::vector<std::vector<double>> class_means;
    double noise_sigma = 1.0;
    std::uint64_t seed = 0;

    // Means sep * e_j in R^dim; dim defaults to the class count.
    static FeatureModel standard(int num_classes, double sep = 3.0, double sigma = 1.0, std::uint64_t seed = 0,
                                 int dim = 0);

    int num_classes() const { return static_cast<int>(class_means.size()); }
    void validate() const;
};

// mean[y] + N(0, sigma^2 I), written into `out` (size dim).
void sample_instance(const FeatureModel& model, Label y, Rng& rng, std::span<double> out);
std::vector<double> sample_instance(const FeatureModel& model, Label y, Rng& rng);

enum class SamplingMode { Uniform, Generative };

std::string mode_name(SamplingMode mode);
SamplingMode mode_from_name(std::string_view name);

struct SequenceRecord {
    std::size_t concept_index = 0;
    std::vector<double> x;  // arity * dim, row-major
    LabelSeq y_true;        // hidden from training code

    friend bool operator==(const SequenceRecord&, const SequenceRecord&) = default;
};

struct SequenceDataset {
    int classes = 0;
    int dim = 0;
    SamplingMode mode = SamplingMode::Uniform;
    ClassPrior prior;
    std::uint64_t seed = 0;
    std::vector<std::string> concept_ids;  // KB order
    std::vector<SequenceRecord> records;

    std::size_t size() const { return records.size(); }
    std::size_t num_instances() const;
};

// One draw: concept uniform over the KB, labels uniform over its candidate set.
SequenceRecord sample_uniform(const KnowledgeBase& kb, std::size_t concept_index, const FeatureModel& model,
                              Rng& rng);

// Rejection sampler for the generative process: a length drawn uniformly
// from the KB's arities, labels i.i.d. from the prior, kept only when the
// sequence lies in some candidate set. Prefixes that cannot complete to a
// candidate are rejected early, which leaves the accepted distribution
// unchanged.
class GenerativeSampler {
public:
    GenerativeSampler(const KnowledgeBase& kb, const ClassPrior& prior);

    // Labels only; returns the concept index.
    std::size_t draw_labels(Rng& rng, LabelSeq& out);
    SequenceRecord sample(const FeatureModel& model, Rng& rng);

    std::uint64_t attempts() const { return attempts_; }
    std::uint64_t accepted() const { return accepted_; }
    // Exact probability that a draw at each length is accepted.
    const std::vector<double>& coverage() const { return coverage_; }

private:
    struct LengthTable {
        int arity = 0;
        std::vector<std::unordered_set<std::uint64_t>> prefixes;  // by prefix length
        std::unordered_map<std::uint64_t, std::size_t> owner;     // full code -> concept
        std::uint64_t codes = 0;                                  // c^arity
        std::vector<std::uint64_t> member_bits;                   // empty when too large
    };

    const KnowledgeBase& kb_;
    int classes_;
    std::discrete_distribution<int> label_dist_;
    bool uniform_prior_ = false;
    std::vector<LengthTable> tables_;
    std::vector<double> coverage_;
    std::uint64_t attempts_ = 0;
    std::uint64_t accepted_ = 0;
};

SequenceRecord sample_generative(const KnowledgeBase& kb, const ClassPrior& prior, const FeatureModel& model, Rng& rng);

SequenceDataset make_dataset(const KnowledgeBase& kb, SamplingMode mode, const ClassPrior& prior,
                             const FeatureModel& model, std::size_t n, std::uint64_t seed);

void write_dataset(std::ostream& os, const SequenceDataset& data, const KnowledgeBase& kb);
SequenceDataset read_dataset(std::istream& is, const KnowledgeBase& kb);
void write_dataset_file(const std::string& path, const SequenceDataset& data, const KnowledgeBase& kb);
SequenceDataset read_dataset_file(const std::string& path, const KnowledgeBase& kb);

// Label-free view handed to the training code.
class TrainingView {
public:
    explicit TrainingView(const SequenceDataset& data) : data_(&data) {}

    std::size_t size() const { return data_->records.size(); }
    int classes() const { return data_->classes; }
    int dim() const { return data_->dim; }
    std::size_t concept_index(std::size_t i) const { return data_->records[i].concept_index; }
    int arity(std::size_t i) const { return static_cast<int>(data_->records[i].y_true.size()); }
    std::span<const double> x(std::size_t i) const { return data_->records[i].x; }
    std::span<const double> x(std::size_t i, int position) const {
        return x(i).subspan(static_cast<std::size_t>(position) * data_->dim, static_cast<std::size_t>(data_->dim));
    }
    std::size_t num_instances() const { return data_->num_instances(); }

private:
    const SequenceDataset* data_;
};

// Flattened labelled instances for evaluation.
struct LabeledInstances {
    int dim = 0;
    int classes = 0;
    std::vector<double> x;  // n * dim
    std::vector<Label> y;

    std::size_t size() const { return y.size(); }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(x).subspan(i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
    }
};

LabeledInstances labeled_instances(const SequenceDataset& data);

} // namespace ablrank
