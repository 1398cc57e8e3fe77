#include "doctest.h"

#include "ablrank/diagnostics.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

using namespace ablrank;

TEST_SUITE("diagnostics") {

TEST_CASE("empirical risks against a direct computation") {
    auto kb = ground(builtin_kb(BuiltinKind::Conjunction));
    auto prior = ClassPrior::parse("1/3,2/3");
    auto qt = joint_matrix(kb, prior);
    auto q = MixingMatrix::from(qt);
    auto offsets = qt.column_offsets(kb);
    auto data = make_dataset(kb, SamplingMode::Generative, prior, FeatureModel::standard(2), 400, 3);
    Classifier h(2, 2, ArchSpec::linear(), 5, Init::Normal);

    double nesy = 0.0, risk = 0.0;
    for (const auto& r : data.records) {
        const auto& S = kb.candidates(r.concept_index);
        Rational total = concept_prior(kb, prior, r.concept_index);
        for (std::size_t i = 0; i < S.size(); ++i) {
            double w = to_double(sequence_prior(prior, S[i]) / total);
            nesy += w * seq_loss(h, r.x, S[i]);
        }
        double tl = 0.0;
        for (int k = 0; k < 2; ++k) {
            auto g = h.probabilities(std::span<const double>(r.x).subspan(static_cast<std::size_t>(k) * 2, 2));
            tl += tl_loss(g, q.column(offsets[r.concept_index] + k));
        }
        risk += tl / 2;
    }
    nesy /= static_cast<double>(data.size());
    risk /= static_cast<double>(data.size());

    auto [got_nesy, got_risk] = empirical_risks(h, kb, qt, data);
    CHECK(got_nesy == doctest::Approx(nesy).epsilon(1e-12));
    CHECK(got_risk == doctest::Approx(risk).epsilon(1e-12));
}

TEST_CASE("tightness example") {
    auto tc = tightness_check(20000, 0);
    CHECK(tc.r_l == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(tc.r_nesy == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(tc.c == doctest::Approx(0.0));
    CHECK(std::abs(tc.slack) <= 0.02);
    CHECK(tc.within_tolerance);
}

TEST_CASE("bound holds on small instances") {
    auto eq = ground(builtin_kb(BuiltinKind::ConjEq));
    auto r1 = verify_bound(eq, ClassPrior::uniform(2), 5000, 20, 1, "conj_eq");
    CHECK(r1.mode == BoundMode::Location);
    CHECK(r1.c == doctest::Approx(std::log(7.0 / 4.0)));
    CHECK(r1.records.size() == 20);
    CHECK(r1.violations == 0);
    for (const auto& rec : r1.records) CHECK(rec.slack == doctest::Approx(rec.bound_rhs - rec.r_risk));

    auto conj = ground(builtin_kb(BuiltinKind::Conjunction));
    auto r2 = verify_bound(conj, ClassPrior::uniform(2), 5000, 20, 1, "conjunction");
    CHECK(r2.mode == BoundMode::TargetLocation);
    CHECK(r2.c == doctest::Approx(std::log(8.0)));
    CHECK(r2.violations == 0);

    auto j = r2.to_json();
    CHECK(j["mode"] == "TL");
    CHECK(j["violations"] == 0);
    CHECK(j["records"].size() == 20);
    CHECK(verify_bound(conj, ClassPrior::uniform(2), 5000, 20, 1, "conjunction").to_json().dump() == j.dump());
    CHECK_THROWS_AS(verify_bound(conj, ClassPrior::uniform(2), 100, 0, 1), Error);
}

TEST_CASE("recovery experiment") {
    auto kb = ground(builtin_kb(BuiltinKind::Conjunction));
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 64;
    cfg.adam.lr = 0.01;
    auto res = recovery_experiment(kb, ClassPrior::uniform(2), cfg, 2000, 1000, {}, "conjunction");
    CHECK(res.diagnosis.verdict == Verdict::Learnable);
    CHECK(res.train.final_accuracy > 0.9);
    CHECK(res.train.n_test > 0);
    auto again = recovery_experiment(kb, ClassPrior::uniform(2), cfg, 2000, 1000, {}, "conjunction");
    CHECK(res.to_json(false).dump() == again.to_json(false).dump());
}

TEST_CASE("parallel_for visits each index once") {
    for (unsigned threads : {0u, 1u, 3u, 8u}) {
        std::vector<std::atomic<int>> hits(97);
        parallel_for(hits.size(), threads, [&](std::size_t i) { ++hits[i]; });
        for (const auto& h : hits) CHECK(h.load() == 1);
    }
}

TEST_CASE("random kb sweep") {
    SweepOptions opt;
    opt.train.epochs = 2;
    opt.train.batch_size = 64;
    opt.n_train = 300;
    opt.n_test = 200;
    opt.threads = 1;
    auto res = random_kb_sweep(NormalForm::Dnf, 3, 5, {Method::TL, Method::MaxP}, opt, 11);
    REQUIRE(res.rows.size() == 10);
    for (const auto& row : res.rows) {
        CHECK(row.classes == 2);
        CHECK((row.rank == 1 || row.rank == 2));
        CHECK(row.full_row_rank == (row.rank == 2));
        CHECK(row.arity == 3);
    }
    // ranks come straight from the exact diagnosis of the regenerated KB
    for (std::size_t i = 0; i < res.rows.size(); i += 2) {
        auto kb = ground(random_kb(NormalForm::Dnf, 3, derive_seed(11, i / 2)));
        CHECK(res.rows[i].rank == rank_exact(joint_matrix(kb, ClassPrior::uniform(2))));
    }

    std::istringstream csv(res.to_csv(false));
    std::string header;
    std::getline(csv, header);
    CHECK(header == "kb_id,form,arity,rank,full_row_rank,method,seed,accuracy,perm_max_accuracy,wall_ms");
    std::size_t lines = 0;
    for (std::string l; std::getline(csv, l);) ++lines;
    CHECK(lines == 10);

    std::size_t grouped = 0;
    for (const auto& g : res.groups()) grouped += g.count;
    CHECK(grouped == 10);

    opt.threads = 4;
    auto parallel = random_kb_sweep(NormalForm::Dnf, 3, 5, {Method::TL, Method::MaxP}, opt, 11);
    CHECK(parallel.to_csv(false) == res.to_csv(false));
    CHECK(parallel.to_json(false) == res.to_json(false));
}

TEST_CASE("hed sweep ranks") {
    SweepOptions opt;
    opt.train.epochs = 1;
    opt.n_train = 200;
    opt.n_test = 100;
    auto res = hed_base_sweep({2, 3}, opt, 0);
    REQUIRE(res.rows.size() == 2);
    CHECK(res.rows[0].kb_id == "hed2");
    CHECK(res.rows[0].rank == 4);
    CHECK(res.rows[0].full_row_rank);
    auto h3 = ground(builtin_kb(BuiltinKind::Hed, 3));
    CHECK(res.rows[1].rank == rank_exact(joint_matrix(h3, ClassPrior::uniform(5))));
    CHECK(res.rows[1].classes == 5);
}

}
