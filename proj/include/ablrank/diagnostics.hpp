#pragma once

#include "ablrank/datagen.hpp"
#include "ablrank/learner.hpp"
#include "ablrank/probmatrix.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace ablrank {

struct FeatureParams {
    double sep = 3.0;
    double sigma = 1.0;

    FeatureModel model_for(int classes, std::uint64_t seed = 0) const {
        return FeatureModel::standard(classes, sep, sigma, seed);
    }
};

enum class BoundMode {
    Location,        // single concept, uniform prior: L-risk through Q, C = log a
    TargetLocation,  // TL-risk through Q-tilde, C = log m - log b
};

struct BoundRecord {
    double r_nesy = 0.0;  // exact candidate average
    double r_risk = 0.0;  // L-risk or TL-risk
    double bound_rhs = 0.0;
    double slack = 0.0;   // bound_rhs - r_risk
};

struct TightnessCheck {
    double r_l = 0.0;
    double r_nesy = 0.0;
    double c = 0.0;
    double slack = 0.0;
    bool within_tolerance = false;
};

struct BoundCheckResult {
    std::string kb_id;
    BoundMode mode = BoundMode::TargetLocation;
    std::size_t n = 0;
    double c = 0.0;
    double tolerance = 0.02;
    std::vector<BoundRecord> records;
    int violations = 0;
    TightnessCheck tightness;

    nlohmann::json to_json() const;
};

// Empirical risks of one classifier on a dataset: the NeSy objective averaged
// exactly over p(Y | tau), and the L/TL risk through `matrix`. Each sequence
// contributes the mean over its positions.
std::pair<double, double> empirical_risks(const Classifier& h, const KnowledgeBase& kb, const ProbMatrix& matrix,
                                          const SequenceDataset& data);

// The two-element candidate set {[0,1],[1,0]} with the uniform classifier.
TightnessCheck tightness_check(std::size_t n, std::uint64_t seed, const FeatureParams& features = {},
                               double tolerance = 0.02);

BoundCheckResult verify_bound(const KnowledgeBase& kb, const ClassPrior& prior, std::size_t n, int num_classifiers,
                              std::uint64_t seed, std::string kb_id = "kb", const FeatureParams& features = {},
                              double tolerance = 0.02);

struct RecoveryResult {
    DiagnosisReport diagnosis;
    TrainReport train;

    nlohmann::json to_json(bool timing = true) const;
};

// Diagnoses the KB, trains on fresh generative data and evaluates on held-out
// instances drawn from the same process. Every stream derives from cfg.seed.
RecoveryResult recovery_experiment(const KnowledgeBase& kb, const ClassPrior& prior, const TrainConfig& cfg,
                                   std::size_t n_train, std::size_t n_test, const FeatureParams& features = {},
                                   std::string kb_id = "kb");

struct SweepRow {
    std::string kb_id;
    std::string form;
    int arity = 0;
    int classes = 0;
    int rank = 0;
    bool full_row_rank = false;
    std::string method;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    std::optional<double> perm_max_accuracy;
    double wall_ms = 0.0;
};

struct GroupSummary {
    std::string method;
    bool full_row_rank = false;
    std::size_t count = 0;
    double mean_accuracy = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;

    std::vector<GroupSummary> groups() const;
    std::string to_csv(bool timing = true) const;
    nlohmann::json to_json(bool timing = true) const;
};

struct SweepOptions {
    TrainConfig train;
    std::size_t n_train = 10'000;
    std::size_t n_test = 2'000;
    FeatureParams features;
    unsigned threads = 1;  // 0: hardware concurrency
};

// Runs fn(0..count-1) over a worker pool; each index runs exactly once.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn);

SweepResult hed_base_sweep(const std::vector<int>& bases, const SweepOptions& options, std::uint64_t seed);

SweepResult random_kb_sweep(NormalForm form, int arity, int num_kbs, const std::vector<Method>& methods,
                            const SweepOptions& options, std::uint64_t seed);

} // namespace ablrank
