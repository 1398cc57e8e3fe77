#pragma once

#include "ablrank/kb.hpp"
#include "ablrank/rational.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ablrank {

struct ClassPrior {
    std::vector<Rational> probs;

    static ClassPrior uniform(int num_classes);
    // Parses "p0,p1,..." where each entry is an integer, a fraction "n/d" or a
    // finite decimal ("0.25"); the entries must sum to exactly 1.
    static ClassPrior parse(const std::string& text);

    int num_classes() const { return static_cast<int>(probs.size()); }
    bool is_uniform() const;
    void validate() const;
    std::vector<double> to_double() const;
};

struct Column {
    std::string concept_id;
    int position = 0;
    friend bool operator==(const Column&, const Column&) = default;
};

enum class MatrixKind { LocationQ, TargetLocationQtilde };

// Row-stochastic c x N matrix; row j holds p(column | y = j).
struct ProbMatrix {
    MatrixKind kind = MatrixKind::TargetLocationQtilde;
    int rows = 0;
    std::vector<Column> columns;
    std::vector<Rational> data;  // row-major
    ClassPrior prior;
    std::vector<Rational> concept_priors;  // p(tau), KB order
    std::optional<Rational> a;
    std::optional<Rational> b;

    int cols() const { return static_cast<int>(columns.size()); }
    const Rational& at(int row, int col) const { return data[static_cast<std::size_t>(row) * columns.size() + col]; }
    Rational& at(int row, int col) { return data[static_cast<std::size_t>(row) * columns.size() + col]; }
    std::vector<double> to_double() const;  // row-major
    // Offset of each concept's first column (KB order).
    std::vector<int> column_offsets(const KnowledgeBase& kb) const;
};

Rational sequence_prior(const ClassPrior& prior, LabelView seq);
Rational concept_prior(const KnowledgeBase& kb, const ClassPrior& prior, std::size_t cpt);
Rational concept_prior(const KnowledgeBase& kb, const ClassPrior& prior, std::string_view concept_id);

// Q for a single-concept KB under the uniform assumption:
// Q_jk = #(class j at position k) / #(class j anywhere), counted over S(tau).
ProbMatrix location_matrix_uniform(const KnowledgeBase& kb);

// Joint p(y = j, tau = t, iota = k) under the generative process, as a c x N
// matrix summing to 1. Sequences are drawn i.i.d. from the prior, lengths
// uniformly over the KB's distinct arities, and uncovered sequences rejected.
std::vector<Rational> joint_distribution(const KnowledgeBase& kb, const ClassPrior& prior);

// Q-tilde: the joint distribution normalised per row.
ProbMatrix joint_matrix(const KnowledgeBase& kb, const ClassPrior& prior);

int rank_exact(const ProbMatrix& mat);
int rank_exact(const std::vector<Rational>& data, int rows, int cols);
int rank_numeric(const ProbMatrix& mat, double tol = 1e-9);
int rank_numeric(const std::vector<double>& data, int rows, int cols, double tol = 1e-9);

struct BoundConstants {
    std::optional<Rational> a;  // single-concept KBs only
    Rational b;
    std::optional<double> c_thm1;  // log a
    double c_thm2 = 0.0;           // log m - log b
    int m = 0;                     // max arity
};

// a = max_i sum_{Y in S} sum_k 1(y_k = i) / |S|; throws for multi-concept KBs.
Rational location_constant(const KnowledgeBase& kb);
BoundConstants bound_constants(const KnowledgeBase& kb, const ClassPrior& prior);

enum class Verdict { Learnable, Insufficient };

struct DiagnosisReport {
    std::string kb_id;
    int classes = 0;
    ProbMatrix matrix;
    int rank = 0;
    bool full_row_rank = false;
    Verdict verdict = Verdict::Insufficient;
    BoundConstants constants;
};

// Q for a single concept under a uniform prior, Q-tilde otherwise.
DiagnosisReport diagnose(const KnowledgeBase& kb, const ClassPrior& prior, std::string kb_id = "kb");

nlohmann::json rational_to_json(const Rational& r);
nlohmann::json to_json(const DiagnosisReport& report);
std::string to_text(const DiagnosisReport& report);
std::string verdict_name(Verdict v);

} // namespace ablrank
