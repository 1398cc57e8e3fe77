#include "doctest.h"

#include "ablrank/learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace ablrank;

namespace {

KnowledgeBase conj_eq() { return ground(builtin_kb(BuiltinKind::ConjEq)); }

std::vector<double> gaussian_vector(std::size_t n, Rng& rng, double sd = 1.5) {
    std::normal_distribution<double> nd(0.0, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = nd(rng);
    return v;
}

// Every hidden pre-activation for every instance in x stays clear of the ReLU kink.
bool clear_of_kinks(const Classifier& h, const std::vector<double>& x, double margin) {
    if (h.arch().arch != Arch::Mlp) return true;
    Workspace ws;
    std::vector<double> logits(static_cast<std::size_t>(h.classes()));
    for (std::size_t off = 0; off < x.size(); off += static_cast<std::size_t>(h.dim())) {
        h.forward(std::span<const double>(x).subspan(off, static_cast<std::size_t>(h.dim())), logits, ws);
        for (double p : ws.pre)
            if (std::abs(p) < margin) return false;
    }
    return true;
}

double brute_force_perm_max(const std::vector<std::uint64_t>& confusion, int c) {
    std::vector<int> perm(static_cast<std::size_t>(c));
    std::iota(perm.begin(), perm.end(), 0);
    std::uint64_t total = std::accumulate(confusion.begin(), confusion.end(), std::uint64_t{0});
    std::uint64_t best = 0;
    do {
        std::uint64_t hit = 0;
        for (int t = 0; t < c; ++t) hit += confusion[static_cast<std::size_t>(t) * c + perm[t]];
        best = std::max(best, hit);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(best) / static_cast<double>(total);
}

// Two-class instances sitting exactly on the means (3,0) and (0,3).
LabeledInstances on_means(int per_class) {
    LabeledInstances d;
    d.dim = 2;
    d.classes = 2;
    for (int i = 0; i < per_class; ++i) {
        d.x.insert(d.x.end(), {3.0, 0.0, 0.0, 3.0});
        d.y.insert(d.y.end(), {0, 1});
    }
    return d;
}

} // namespace

TEST_SUITE("learner") {

TEST_CASE("softmax") {
    auto g = softmax(std::vector<double>{10.0, 0.0});
    CHECK(g[0] == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))).epsilon(1e-14));
    CHECK(g[1] == doctest::Approx(std::exp(-10.0) / (1.0 + std::exp(-10.0))).epsilon(1e-12));
    CHECK(g[0] == doctest::Approx(0.99995).epsilon(1e-5));
    CHECK(argmax(g) == 0);

    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        auto logits = gaussian_vector(5, rng, 20.0);
        auto p = softmax(logits);
        double s = std::accumulate(p.begin(), p.end(), 0.0);
        CHECK(std::abs(s - 1.0) <= 1e-12);
        for (double v : p) CHECK(v >= 0.0);
        auto shifted = logits;
        for (auto& v : shifted) v += 123.0;
        auto q = softmax(shifted);
        for (std::size_t j = 0; j < p.size(); ++j) CHECK(std::abs(p[j] - q[j]) <= 1e-12);
    }
    CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
    CHECK(softmax(std::vector<double>{1000.0, 0.0})[0] == 1.0);
}

TEST_CASE("classifier basics") {
    Classifier zero(3, 4, ArchSpec::linear(), 0, Init::Zero);
    for (double v : zero.probabilities(std::vector<double>{1.0, -2.0, 5.0})) CHECK(v == doctest::Approx(0.25));
    CHECK(zero.predict(std::vector<double>{1.0, 2.0, 3.0}) == 0);

    Classifier a(2, 2, ArchSpec::mlp(8), 5), b(2, 2, ArchSpec::mlp(8), 5);
    CHECK(a.params() == b.params());
    CHECK(a.num_params() == 8 * 2 + 8 + 2 * 8 + 2);
    CHECK(ArchSpec::mlp(64).name() == "mlp64-relu");
    CHECK(ArchSpec::linear().name() == "linear");

    std::vector<double> bad = {1.0, std::nan("")};
    CHECK_THROWS_AS(a.logits(bad), Error);
}

TEST_CASE("cross-entropy values") {
    CHECK(ce_loss(std::vector<double>{1.0, 0.0}, 0) == 0.0);
    CHECK(ce_loss(std::vector<double>{0.25, 0.25, 0.25, 0.25}, 2) == doctest::Approx(std::log(4.0)));
    CHECK(ce_loss(std::vector<double>{1.0, 0.0}, 1) == doctest::Approx(-std::log(kProbFloor)));
    std::vector<double> d(2);
    ce_step(std::vector<double>{0.7, 0.3}, 1, d);
    CHECK(d[0] == doctest::Approx(0.7));
    CHECK(d[1] == doctest::Approx(-0.7));
}

TEST_CASE("sequence loss at the tightness example") {
    auto kb = ground(parse_kb("classes 2\nconcept t arity 2 { facts: [0,1] [1,0] }"));
    Classifier h(2, 2, ArchSpec::linear(), 0, Init::Zero);
    std::vector<double> x = {0.3, -1.0, 2.0, 0.5};
    for (const auto& y : kb.candidates(0).sequences()) CHECK(seq_loss(h, x, y) == doctest::Approx(std::log(2.0)));
    CHECK(avg_loss(h, x, kb.candidates(0)) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("tl loss values") {
    auto conj = ground(builtin_kb(BuiltinKind::Conjunction));
    auto q = MixingMatrix::from(joint_matrix(conj, ClassPrior::uniform(2)));
    CHECK(tl_loss(std::vector<double>{0.0, 1.0}, q.column(2)) == doctest::Approx(std::log(4.0)));

    auto qe = MixingMatrix::from(location_matrix_uniform(conj_eq()));
    CHECK(tl_loss(std::vector<double>{0.5, 0.5}, qe.column(2)) == doctest::Approx(-std::log((3.0 / 7 + 1.0 / 5) / 2)));

    auto id = MixingMatrix::identity(3);
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
        auto g = softmax(gaussian_vector(3, rng, 3.0));
        for (int y = 0; y < 3; ++y) {
            std::vector<double> d1(3), d2(3);
            CHECK(tl_step(g, id.column(y), d1) == ce_step(g, static_cast<Label>(y), d2));
            CHECK(d1 == d2);
        }
    }
    std::vector<double> d(2);
    double loss = tl_step(std::vector<double>{1.0, 0.0}, q.column(2), d);
    CHECK(loss == doctest::Approx(-std::log(kProbFloor)));
    CHECK(std::isfinite(d[0]));
    CHECK(std::isfinite(d[1]));
}

TEST_CASE("abduction examples") {
    auto kb = conj_eq();
    const auto& S = kb.candidates(0);
    Rng rng(0);
    std::vector<double> probs = {0.9, 0.1, 0.2, 0.8, 0.7, 0.3};
    std::vector<Label> preds = {0, 1, 0};
    CHECK(abduce(Method::MaxP, S, probs, preds, rng) == LabelSeq{0, 1, 0});

    std::vector<Label> far = {1, 1, 0};
    CHECK(abduce(Method::MinD, S, probs, far, rng) == LabelSeq{0, 1, 0});
    for (int i = 0; i < 10; ++i) {
        CHECK(abduce(Method::MinD, S, probs, far, rng) == LabelSeq{0, 1, 0});
        CHECK(abduce(Method::MaxP, S, probs, preds, rng) == LabelSeq{0, 1, 0});
    }

    // exact ties in likelihood resolve to the first candidate
    std::vector<double> flat = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
    CHECK(abduce_index(Method::MaxP, S, flat, preds, rng) == 0);

    CandidateSet single("s", 3, {1, 1, 1});
    for (auto m : {Method::Rand, Method::MaxP, Method::MinD}) CHECK(abduce(m, single, probs, preds, rng) == LabelSeq{1, 1, 1});

    std::vector<int> counts(4, 0);
    const int n = 40000;
    for (int i = 0; i < n; ++i) ++counts[abduce_index(Method::Rand, S, probs, preds, rng)];
    for (int k : counts) CHECK(std::abs(static_cast<double>(k) / n - 0.25) < 3 * std::sqrt(0.25 * 0.75 / n));
}

TEST_CASE("maxp stays finite on long sequences") {
    std::vector<Label> flat(400, 0);
    for (std::size_t i = 200; i < 400; ++i) flat[i] = 1;
    CandidateSet cs("long", 200, flat);
    std::vector<double> probs;
    std::vector<Label> preds;
    for (int k = 0; k < 200; ++k) {
        probs.insert(probs.end(), {0.01, 0.99});
        preds.push_back(1);
    }
    Rng rng(0);
    CHECK(abduce_index(Method::MaxP, cs, probs, preds, rng) == 1);
}

TEST_CASE("adam") {
    AdamConfig cfg;
    std::vector<double> p = {1.0, -2.0, 3.0};
    AdamState st;
    adam_step(p, std::vector<double>{0.0, 0.0, 0.0}, st, cfg);
    CHECK(p == std::vector<double>{1.0, -2.0, 3.0});

    AdamState first;
    std::vector<double> q = {0.0, 0.0};
    adam_step(q, std::vector<double>{5.0, -0.01}, first, cfg);
    CHECK(q[0] == doctest::Approx(-cfg.lr).epsilon(1e-6));
    CHECK(q[1] == doctest::Approx(cfg.lr).epsilon(1e-4));

    AdamState steady;
    std::vector<double> r = {0.0};
    for (int i = 0; i < 2000; ++i) {
        double before = r[0];
        adam_step(r, std::vector<double>{0.3}, steady, cfg);
        CHECK(before - r[0] == doctest::Approx(cfg.lr).epsilon(1e-4));
    }

    CHECK_THROWS_AS(adam_step(r, std::vector<double>{std::nan("")}, steady, cfg), Error);
}

TEST_CASE("gradients match finite differences") {
    auto eq = conj_eq();
    auto conj = ground(builtin_kb(BuiltinKind::Conjunction));
    auto qc = MixingMatrix::from(joint_matrix(conj, ClassPrior::uniform(2)));
    auto hed = ground(builtin_kb(BuiltinKind::Hed, 2));
    auto qh = MixingMatrix::from(joint_matrix(hed, ClassPrior::uniform(4)));

    struct Case {
        ArchSpec arch;
        double tolerance;
    };
    for (const auto& [arch, tol] : {Case{ArchSpec::linear(), 1e-5}, Case{ArchSpec::mlp(64), 1e-4},
                                    Case{ArchSpec::mlp(16, Activation::Tanh), 1e-4}}) {
        double worst[5] = {0, 0, 0, 0, 0};
        Rng rng(31);
        for (int point = 0; point < 50; ++point) {
            Classifier h2(2, 2, arch, 1000 + point);
            Classifier h4(4, 4, arch, 2000 + point);
            auto x1 = gaussian_vector(2, rng), x3 = gaussian_vector(6, rng), x4 = gaussian_vector(4, rng);
            while (!clear_of_kinks(h2, x1, 1e-3)) x1 = gaussian_vector(2, rng);
            while (!clear_of_kinks(h2, x3, 1e-3)) x3 = gaussian_vector(6, rng);
            while (!clear_of_kinks(h4, x4, 1e-3)) x4 = gaussian_vector(4, rng);
            const auto& S = eq.candidates(0);
            LabelSeq labels = S.sequences()[static_cast<std::size_t>(point) % S.size()];

            worst[0] = std::max(worst[0], grad_check(h2, ce_objective(x1, static_cast<Label>(point % 2)), 1e-5));
            worst[1] = std::max(worst[1], grad_check(h2, seq_objective(x3, labels), 1e-5));
            worst[2] = std::max(worst[2], grad_check(h2, avg_objective(x3, S), 1e-5));
            worst[3] = std::max(worst[3], grad_check(h2, tl_objective(x1, point % qc.cols, qc), 1e-5));
            worst[4] = std::max(worst[4], grad_check(h4, tl_objective(x4, point % qh.cols, qh), 1e-5));
        }
        INFO(arch.name() << " ce " << worst[0] << " seq " << worst[1] << " avg " << worst[2] << " tl " << worst[3]
                         << " tl4 " << worst[4]);
        for (double w : worst) CHECK(w < tol);
    }
    Classifier h(2, 2, ArchSpec::linear(), 0);
    CHECK_THROWS_AS(grad_check(h, ce_objective({1.0, 1.0}, 0), 1e-2), Error);
}

TEST_CASE("identity mixing reproduces supervised training bit for bit") {
    auto kb = conj_eq();
    auto data = make_dataset(kb, SamplingMode::Uniform, ClassPrior::uniform(2), FeatureModel::standard(2), 700, 3);
    TrainingView view(data);
    std::vector<TlPair> pairs;
    for (std::size_t i = 0; i < data.size(); ++i)
        for (int k = 0; k < 3; ++k)
            pairs.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint16_t>(k), data.records[i].y_true[k]});
    auto inst = labeled_instances(data);

    for (auto arch : {ArchSpec::linear(), ArchSpec::mlp(16)}) {
        TrainConfig cfg;
        cfg.batch_size = 64;
        cfg.adam.lr = 0.01;
        Classifier a(2, 2, arch, 9), b(2, 2, arch, 9);
        AdamState sa, sb;
        Rng ra(77), rb(77);
        auto id = MixingMatrix::identity(2);
        for (int e = 0; e < 4; ++e) {
            double la = tl_epoch({a, sa, cfg, ra}, view, pairs, id);
            double lb = supervised_epoch({b, sb, cfg, rb}, inst);
            CHECK(la == lb);
            CHECK(a.params() == b.params());
        }
    }
}

TEST_CASE("rand abduction matches the candidate average in expectation") {
    auto kb = conj_eq();
    const auto& S = kb.candidates(0);
    auto data = make_dataset(kb, SamplingMode::Uniform, ClassPrior::uniform(2), FeatureModel::standard(2), 64, 5);
    Classifier h(2, 2, ArchSpec::linear(), 12, Init::Normal);

    double avg = 0.0;
    for (const auto& r : data.records) avg += avg_loss(h, r.x, S);
    avg /= static_cast<double>(data.size());

    Rng rng(6);
    std::vector<double> probs(6, 0.5);
    std::vector<Label> preds(3, 0);
    const int draws = 500;
    std::vector<double> batch(draws);
    for (auto& b : batch) {
        double s = 0.0;
        for (const auto& r : data.records) s += seq_loss(h, r.x, abduce(Method::Rand, S, probs, preds, rng));
        b = s / static_cast<double>(data.size());
    }
    double mean = std::accumulate(batch.begin(), batch.end(), 0.0) / draws;
    double var = 0.0;
    for (double b : batch) var += (b - mean) * (b - mean);
    double se = std::sqrt(var / (draws - 1) / draws);
    CHECK(std::abs(mean - avg) <= 3 * se);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    auto kb = conj_eq();
    auto data = make_dataset(kb, SamplingMode::Uniform, ClassPrior::uniform(2), FeatureModel::standard(2), 300, 1);
    TrainingView view(data);
    for (auto m : {Method::Rand, Method::MaxP, Method::MinD, Method::Avg}) {
        TrainConfig cfg;
        cfg.method = m;
        cfg.adam.lr = 0.0;
        cfg.batch_size = 32;
        Classifier h(2, 2, ArchSpec::linear(), 4);
        auto before = h.params();
        AdamState st;
        Rng rng(0);
        double loss = nesy_epoch({h, st, cfg, rng}, view, kb);
        CHECK(std::isfinite(loss));
        CHECK(h.params() == before);
    }
}

TEST_CASE("maxp fits separable conj data") {
    auto kb = conj_eq();
    auto data = make_dataset(kb, SamplingMode::Uniform, ClassPrior::uniform(2), FeatureModel::standard(2, 6.0), 2000, 0);
    TrainConfig cfg;
    cfg.method = Method::MaxP;
    cfg.epochs = 30;
    cfg.batch_size = 32;
    cfg.adam.lr = 0.01;
    auto report = train(kb, TrainingView(data), nullptr, cfg, nullptr);
    REQUIRE(report.loss_curve.size() == 30);
    CHECK(report.loss_curve.back() < 0.1);
}

TEST_CASE("tl training on conjunction") {
    auto kb = ground(builtin_kb(BuiltinKind::Conjunction));
    auto prior = ClassPrior::uniform(2);
    auto train_data = make_dataset(kb, SamplingMode::Generative, prior, FeatureModel::standard(2), 3000, 1);
    auto test_data = make_dataset(kb, SamplingMode::Generative, prior, FeatureModel::standard(2), 1000, 2);
    auto test = labeled_instances(test_data);
    auto qt = joint_matrix(kb, prior);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 64;
    cfg.adam.lr = 0.01;
    auto report = train(kb, TrainingView(train_data), &qt, cfg, &test);
    CHECK(report.final_accuracy > 0.9);
    auto again = train(kb, TrainingView(train_data), &qt, cfg, &test);
    CHECK(report.loss_curve == again.loss_curve);
    CHECK(report.to_json(false) == again.to_json(false));
    CHECK_THROWS_AS(train(kb, TrainingView(train_data), nullptr, cfg, &test), Error);
}

TEST_CASE("empty mixing column is reported") {
    MixingMatrix q;
    q.rows = 2;
    q.cols = 2;
    q.by_column = {0.5, 0.5, 0.0, 0.0};
    std::vector<TlPair> pairs = {{0, 0, 0}, {0, 1, 1}};
    try {
        check_columns(q, pairs, {"(a, 0)", "(a, 1)"});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("(a, 1)") != std::string::npos);
    }
    CHECK_NOTHROW(check_columns(q, {{0, 0, 0}}, {"(a, 0)", "(a, 1)"}));
}

TEST_CASE("evaluation") {
    auto test = on_means(50);
    Classifier h(2, 2, ArchSpec::linear(), 0, Init::Zero);
    h.params() = {1.0, 0.0, 0.0, 1.0, 0.0, 0.0};
    auto ev = evaluate(h, test);
    CHECK(ev.accuracy == 1.0);
    CHECK(*ev.perm_max_accuracy == 1.0);

    h.params() = {0.0, 1.0, 1.0, 0.0, 0.0, 0.0};
    ev = evaluate(h, test);
    CHECK(ev.accuracy == 0.0);
    CHECK(*ev.perm_max_accuracy == 1.0);
    CHECK(ev.confusion == std::vector<std::uint64_t>{0, 50, 50, 0});

    Classifier constant(2, 2, ArchSpec::linear(), 0, Init::Zero);
    CHECK(evaluate(constant, on_means(5000)).accuracy == 0.5);
}

TEST_CASE("permutation maximum against brute force") {
    Rng rng(8);
    std::uniform_int_distribution<int> cell(0, 30);
    for (int c = 1; c <= 7; ++c) {
        for (int trial = 0; trial < 30; ++trial) {
            std::vector<std::uint64_t> conf(static_cast<std::size_t>(c * c));
            for (auto& v : conf) v = static_cast<std::uint64_t>(cell(rng));
            conf[0] += 1;
            CHECK(permutation_max_accuracy(conf, c) == doctest::Approx(brute_force_perm_max(conf, c)));
        }
    }
}

TEST_CASE("method names and config validation") {
    for (auto m : {Method::Rand, Method::MaxP, Method::MinD, Method::Avg, Method::TL})
        CHECK(method_from_name(method_name(m)) == m);
    CHECK(method_name(Method::MaxP) == "maxp");
    CHECK_THROWS_AS(method_from_name("best"), Error);
    CHECK(is_abductive(Method::MinD));
    CHECK_FALSE(is_abductive(Method::Avg));

    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.adam.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);

    TrainReport r;
    r.wall_ms = 12.5;
    auto j = r.to_json(false);
    for (const char* key : {"method", "seed", "epochs", "final_accuracy", "perm_max_accuracy", "loss_curve", "wall_ms"})
        CHECK(j.contains(key));
    CHECK(j["wall_ms"] == 0);
}

}
