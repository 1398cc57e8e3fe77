#include "ablrank/diagnostics.hpp"

#include <atomic>
#include <cmath>
#include <iomanip>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace ablrank {

namespace {

constexpr std::uint64_t kBoundData = 0x626f756e64ULL;
constexpr std::uint64_t kBoundModel = 0x6d6f64656cULL;
constexpr std::uint64_t kTrainData = 0x747261696eULL;
constexpr std::uint64_t kTestData = 0x74657374ULL;

// w[t][k * c + j] = p(y_k = j | tau = t).
std::vector<std::vector<double>> position_targets(const KnowledgeBase& kb, const ClassPrior& prior) {
    const std::size_t c = static_cast<std::size_t>(kb.num_classes());
    std::vector<std::vector<double>> out;
    for (std::size_t t = 0; t < kb.concepts.size(); ++t) {
        const auto& cs = kb.candidates(t);
        const std::size_t m = static_cast<std::size_t>(cs.arity());
        std::vector<Rational> mass(m * c, Rational(0));
        Rational total = 0;
        for (std::size_t i = 0; i < cs.size(); ++i) {
            auto seq = cs[i];
            Rational p = sequence_prior(prior, seq);
            total += p;
            for (std::size_t k = 0; k < m; ++k) mass[k * c + seq[k]] += p;
        }
        std::vector<double> w(m * c, 0.0);
        if (total != 0) {
            for (std::size_t i = 0; i < w.size(); ++i) w[i] = to_double(mass[i] / total);
        }
        out.push_back(std::move(w));
    }
    return out;
}

double neg_log(double p) { return -std::log(std::max(p, kProbFloor)); }

} // namespace

std::pair<double, double> empirical_risks(const Classifier& h, const KnowledgeBase& kb, const ProbMatrix& matrix,
                                          const SequenceDataset& data) {
    const auto targets = position_targets(kb, matrix.prior);
    const auto offsets = matrix.column_offsets(kb);
    const auto q = MixingMatrix::from(matrix);
    const std::size_t c = static_cast<std::size_t>(kb.num_classes()), d = static_cast<std::size_t>(data.dim);
    std::vector<double> g(c);
    Workspace ws;
    double nesy = 0.0, risk = 0.0;
    for (const auto& rec : data.records) {
        const auto& w = targets[rec.concept_index];
        const std::size_t m = rec.y_true.size();
        double seq_nesy = 0.0, seq_risk = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            h.forward(std::span<const double>(rec.x).subspan(k * d, d), g, ws);
            softmax(g, g);
            for (std::size_t j = 0; j < c; ++j) {
                if (w[k * c + j] != 0.0) seq_nesy += w[k * c + j] * neg_log(g[j]);
            }
            seq_risk += tl_loss(g, q.column(offsets[rec.concept_index] + static_cast<int>(k)));
        }
        nesy += seq_nesy / static_cast<double>(m);
        risk += seq_risk / static_cast<double>(m);
    }
    const double n = static_cast<double>(data.records.size());
    return {nesy / n, risk / n};
}

TightnessCheck tightness_check(std::size_t n, std::uint64_t seed, const FeatureParams& features, double tolerance) {
    KnowledgeBase kb;
    kb.alphabet.num_classes = 2;
    kb.concepts.push_back({"swap", 2, FactsDef{{{0, 1}, {1, 0}}}});
    kb = ground(std::move(kb));
    auto prior = ClassPrior::uniform(2);
    auto q = location_matrix_uniform(kb);
    auto data = make_dataset(kb, SamplingMode::Uniform, prior, features.model_for(2), n, derive_seed(seed, kBoundData));
    Classifier uniform(2, 2, ArchSpec::linear(), 0, Init::Zero);
    auto [nesy, risk] = empirical_risks(uniform, kb, q, data);
    TightnessCheck tc;
    tc.r_l = risk;
    tc.r_nesy = nesy;
    tc.c = std::log(to_double(*q.a));
    tc.slack = tc.r_nesy + tc.c - tc.r_l;
    tc.within_tolerance = std::abs(tc.slack) <= tolerance;
    return tc;
}

BoundCheckResult verify_bound(const KnowledgeBase& kb, const ClassPrior& prior, std::size_t n, int num_classifiers,
                              std::uint64_t seed, std::string kb_id, const FeatureParams& features, double tolerance) {
    if (num_classifiers < 1) throw Error("need at least one classifier");
    BoundCheckResult res;
    res.kb_id = std::move(kb_id);
    res.n = n;
    res.tolerance = tolerance;
    const bool location = kb.concepts.size() == 1 && prior.is_uniform();
    res.mode = location ? BoundMode::Location : BoundMode::TargetLocation;

    ProbMatrix matrix = location ? location_matrix_uniform(kb) : joint_matrix(kb, prior);
    auto constants = bound_constants(kb, prior);
    res.c = location ? *constants.c_thm1 : constants.c_thm2;

    auto model = features.model_for(kb.num_classes());
    auto data = make_dataset(kb, location ? SamplingMode::Uniform : SamplingMode::Generative, prior, model, n,
                             derive_seed(seed, kBoundData));
    for (int i = 0; i < num_classifiers; ++i) {
        Classifier h(model.dim, kb.num_classes(), ArchSpec::linear(), derive_seed(seed, kBoundModel, i), Init::Normal);
        auto [nesy, risk] = empirical_risks(h, kb, matrix, data);
        BoundRecord r;
        r.r_nesy = nesy;
        r.r_risk = risk;
        r.bound_rhs = nesy + res.c;
        r.slack = r.bound_rhs - risk;
        if (r.slack < -tolerance) ++res.violations;
        res.records.push_back(r);
    }
    res.tightness = tightness_check(n, seed, features, tolerance);
    return res;
}

nlohmann::json BoundCheckResult::to_json() const {
    nlohmann::json j;
    j["kb_id"] = kb_id;
    j["mode"] = mode == BoundMode::Location ? "L" : "TL";
    j["n"] = n;
    j["num_classifiers"] = records.size();
    j["C"] = c;
    j["tolerance"] = tolerance;
    j["violations"] = violations;
    double min_slack = records.empty() ? 0.0 : records.front().slack;
    auto recs = nlohmann::json::array();
    for (const auto& r : records) {
        min_slack = std::min(min_slack, r.slack);
        recs.push_back({{"r_nesy_avg", r.r_nesy}, {mode == BoundMode::Location ? "r_l" : "r_tl", r.r_risk},
                        {"bound_rhs", r.bound_rhs}, {"slack", r.slack}});
    }
    j["min_slack"] = min_slack;
    j["records"] = std::move(recs);
    j["tightness"] = {{"r_l", tightness.r_l},
                      {"r_nesy_avg", tightness.r_nesy},
                      {"C", tightness.c},
                      {"slack", tightness.slack},
                      {"within_tolerance", tightness.within_tolerance}};
    return j;
}

nlohmann::json RecoveryResult::to_json(bool timing) const {
    return {{"diagnosis", ablrank::to_json(diagnosis)}, {"train", train.to_json(timing)}};
}

RecoveryResult recovery_experiment(const KnowledgeBase& kb, const ClassPrior& prior, const TrainConfig& cfg,
                                   std::size_t n_train, std::size_t n_test, const FeatureParams& features,
                                   std::string kb_id) {
    RecoveryResult res;
    res.diagnosis = diagnose(kb, prior, std::move(kb_id));
    auto model = features.model_for(kb.num_classes());
    auto train_set = make_dataset(kb, SamplingMode::Generative, prior, model, n_train, derive_seed(cfg.seed, kTrainData));
    auto test_set = make_dataset(kb, SamplingMode::Generative, prior, model, n_test, derive_seed(cfg.seed, kTestData));
    auto test = labeled_instances(test_set);
    res.train = train(kb, TrainingView(train_set), &res.diagnosis.matrix, cfg, &test);
    return res;
}

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

namespace {

SweepRow row_from(const RecoveryResult& r, std::string form, int arity) {
    SweepRow row;
    row.kb_id = r.diagnosis.kb_id;
    row.form = std::move(form);
    row.arity = arity;
    row.classes = r.diagnosis.classes;
    row.rank = r.diagnosis.rank;
    row.full_row_rank = r.diagnosis.full_row_rank;
    row.method = method_name(r.train.config.method);
    row.seed = r.train.config.seed;
    row.accuracy = r.train.final_accuracy;
    row.perm_max_accuracy = r.train.perm_max_accuracy;
    row.wall_ms = r.train.wall_ms;
    return row;
}

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

} // namespace

std::vector<GroupSummary> SweepResult::groups() const {
    std::map<std::pair<std::string, bool>, std::pair<std::size_t, double>> acc;
    std::vector<std::pair<std::string, bool>> order;
    for (const auto& r : rows) {
        auto key = std::make_pair(r.method, r.full_row_rank);
        auto [it, fresh] = acc.try_emplace(key, 0, 0.0);
        if (fresh) order.push_back(key);
        ++it->second.first;
        it->second.second += r.accuracy;
    }
    std::vector<GroupSummary> out;
    for (const auto& key : order) {
        const auto& [count, sum] = acc[key];
        out.push_back({key.first, key.second, count, sum / static_cast<double>(count)});
    }
    return out;
}

std::string SweepResult::to_csv(bool timing) const {
    std::ostringstream os;
    os << "kb_id,form,arity,rank,full_row_rank,method,seed,accuracy,perm_max_accuracy,wall_ms\n";
    for (const auto& r : rows) {
        os << r.kb_id << ',' << r.form << ',' << r.arity << ',' << r.rank << ',' << (r.full_row_rank ? "true" : "false")
           << ',' << r.method << ',' << r.seed << ',' << fixed(r.accuracy, 6) << ','
           << (r.perm_max_accuracy ? fixed(*r.perm_max_accuracy, 6) : std::string()) << ','
           << (timing ? fixed(r.wall_ms, 1) : std::string("0")) << '\n';
    }
    return os.str();
}

nlohmann::json SweepResult::to_json(bool timing) const {
    auto rs = nlohmann::json::array();
    for (const auto& r : rows) {
        rs.push_back({{"kb_id", r.kb_id},
                      {"form", r.form},
                      {"arity", r.arity},
                      {"classes", r.classes},
                      {"rank", r.rank},
                      {"full_row_rank", r.full_row_rank},
                      {"method", r.method},
                      {"seed", r.seed},
                      {"accuracy", r.accuracy},
                      {"perm_max_accuracy", r.perm_max_accuracy ? nlohmann::json(*r.perm_max_accuracy) : nlohmann::json()},
                      {"wall_ms", timing ? r.wall_ms : 0.0}});
    }
    auto gs = nlohmann::json::array();
    for (const auto& g : groups()) {
        gs.push_back({{"method", g.method}, {"full_row_rank", g.full_row_rank}, {"count", g.count},
                      {"mean_accuracy", g.mean_accuracy}});
    }
    return {{"rows", std::move(rs)}, {"groups", std::move(gs)}};
}

SweepResult hed_base_sweep(const std::vector<int>& bases, const SweepOptions& options, std::uint64_t seed) {
    std::vector<SweepRow> rows(bases.size());
    parallel_for(bases.size(), options.threads, [&](std::size_t i) {
        const int base = bases[i];
        auto kb = ground(builtin_kb(BuiltinKind::Hed, base));
        auto cfg = options.train;
        cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(base));
        auto r = recovery_experiment(kb, ClassPrior::uniform(kb.num_classes()), cfg, options.n_train, options.n_test,
                                     options.features, "hed" + std::to_string(base));
        rows[i] = row_from(r, "hed", kb.max_arity());
    });
    return {std::move(rows)};
}

SweepResult random_kb_sweep(NormalForm form, int arity, int num_kbs, const std::vector<Method>& methods,
                            const SweepOptions& options, std::uint64_t seed) {
    if (num_kbs < 1) throw Error("need at least one knowledge base");
    if (methods.empty()) throw Error("need at least one method");
    const std::string form_name = form == NormalForm::Dnf ? "dnf" : "cnf";
    std::vector<KnowledgeBase> kbs;
    for (int i = 0; i < num_kbs; ++i) kbs.push_back(ground(random_kb(form, arity, derive_seed(seed, static_cast<std::uint64_t>(i)))));
    const std::size_t cells = kbs.size() * methods.size();
    std::vector<SweepRow> rows(cells);
    parallel_for(cells, options.threads, [&](std::size_t cell) {
        const std::size_t i = cell / methods.size();
        const Method method = methods[cell % methods.size()];
        auto cfg = options.train;
        cfg.method = method;
        cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(i), 0x63656c6cULL);
        std::ostringstream id;
        id << form_name << arity << '-' << std::setw(3) << std::setfill('0') << i;
        auto r = recovery_experiment(kbs[i], ClassPrior::uniform(2), cfg, options.n_train, options.n_test,
                                     options.features, id.str());
        rows[cell] = row_from(r, form_name, arity);
    });
    return {std::move(rows)};
}

} // namespace ablrank
