#pragma once

#include "ablrank/classifier.hpp"
#include "ablrank/datagen.hpp"
#include "ablrank/kb.hpp"
#include "ablrank/probmatrix.hpp"

#include "json.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ablrank {

// Floor applied to probabilities before taking logarithms.
inline constexpr double kProbFloor = 1e-12;

enum class Method { Rand, MaxP, MinD, Avg, TL };

std::string method_name(Method m);
Method method_from_name(std::string_view name);
bool is_abductive(Method m);

// ---- losses ---------------------------------------------------------------
//
// Each *_step takes softmax outputs g, returns the loss and writes
// d(loss)/d(logits). Values are clamped at kProbFloor; gradients are those of
// the unclamped expressions, which stay finite.

double ce_loss(std::span<const double> g, Label y);
double ce_step(std::span<const double> g, Label y, std::span<double> dlogits);

// sum_j target_j * ce(g, j) for a probability vector `target`.
double soft_ce_step(std::span<const double> g, std::span<const double> target, std::span<double> dlogits);

// -log(sum_j q_j g_j) for the column q of a mixing matrix.
double tl_loss(std::span<const double> g, std::span<const double> column);
double tl_step(std::span<const double> g, std::span<const double> column, std::span<double> dlogits);

// Mean of ce over the positions of one sequence; x is arity * dim.
double seq_loss(const Classifier& h, std::span<const double> x, LabelView labels);

// Exact average of seq_loss over every candidate.
double avg_loss(const Classifier& h, std::span<const double> x, const CandidateSet& candidates);

// Column-major-friendly copy of a Q / Q-tilde matrix in doubles.
struct MixingMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> by_column;  // cols x rows

    static MixingMatrix from(const ProbMatrix& m);
    static MixingMatrix identity(int c);
    std::span<const double> column(int o) const {
        return std::span<const double>(by_column).subspan(static_cast<std::size_t>(o) * rows,
                                                          static_cast<std::size_t>(rows));
    }
};

// ---- optimisation ---------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long long t = 0;
};

void adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg);

// ---- abduction ------------------------------------------------------------

// probs: arity x c softmax rows; preds: per-position argmax. Returns the index
// of the chosen candidate. MaxP and MinD break ties towards the smallest index,
// which is the lexicographically smallest sequence.
std::size_t abduce_index(Method strategy, const CandidateSet& candidates, std::span<const double> probs,
                         LabelView preds, Rng& rng);
LabelSeq abduce(Method strategy, const CandidateSet& candidates, std::span<const double> probs, LabelView preds,
                Rng& rng);

// ---- training -------------------------------------------------------------

struct TrainConfig {
    Method method = Method::TL;
    int epochs = 100;
    int batch_size = 256;
    AdamConfig adam;
    std::uint64_t seed = 0;
    ArchSpec arch;

    void validate() const;
    nlohmann::json to_json() const;
};

struct TrainContext {
    Classifier& h;
    AdamState& adam;
    const TrainConfig& cfg;
    Rng& rng;
};

// One pass of Algorithm-1 style training: labels are abduced for every
// sequence with the current classifier, then minibatches of sequences take
// Adam steps against them. Avg uses the exact candidate average instead.
double nesy_epoch(TrainContext ctx, const TrainingView& data, const KnowledgeBase& kb);

// (record, position, column) triples, expanded once per dataset.
struct TlPair {
    std::uint32_t record;
    std::uint16_t position;
    std::uint32_t column;
};

std::vector<TlPair> expand_pairs(const TrainingView& data, const std::vector<int>& column_offsets);
void check_columns(const MixingMatrix& q, const std::vector<TlPair>& pairs, const std::vector<std::string>& names);

// One pass over shuffled instance pairs, minibatches of pairs.
double tl_epoch(TrainContext ctx, const TrainingView& data, const std::vector<TlPair>& pairs, const MixingMatrix& q);

// Ordinary supervised cross-entropy on labelled instances, same batching and
// shuffling as tl_epoch.
double supervised_epoch(TrainContext ctx, const LabeledInstances& data);

struct Evaluation {
    double accuracy = 0.0;
    std::optional<double> perm_max_accuracy;  // exact, c <= 16
    std::vector<std::uint64_t> confusion;     // true x predicted
};

// Best accuracy over relabelings of the predictions (bijections of classes).
double permutation_max_accuracy(const std::vector<std::uint64_t>& confusion, int classes);

Evaluation evaluate(const Classifier& h, const LabeledInstances& test);

struct TrainReport {
    TrainConfig config;
    std::vector<double> loss_curve;
    double final_accuracy = 0.0;
    std::optional<double> perm_max_accuracy;
    double wall_ms = 0.0;
    std::size_t n_train = 0;
    std::size_t n_test = 0;

    nlohmann::json to_json(bool timing = true) const;
};

// Trains a fresh classifier. `matrix` is required for TL and ignored
// otherwise; `test` may be null.
TrainReport train(const KnowledgeBase& kb, const TrainingView& data, const ProbMatrix* matrix,
                  const TrainConfig& cfg, const LabeledInstances* test, Classifier* out = nullptr);

// ---- gradient checking ----------------------------------------------------

// Returns the loss at h; when `grad` is non-null also adds its gradient.
using LossFn = std::function<double(const Classifier& h, std::vector<double>* grad)>;

LossFn ce_objective(std::vector<double> x, Label y);
LossFn seq_objective(std::vector<double> x, LabelSeq labels);
LossFn avg_objective(std::vector<double> x, CandidateSet candidates);
LossFn tl_objective(std::vector<double> x, int column, MixingMatrix q);

// max |a - n| / (|a| + |n| + 1e-12) over all parameters, with n the central
// finite difference at step epsilon.
double grad_check(const Classifier& h, const LossFn& loss, double epsilon);

} // namespace ablrank
