#include "ablrank/learner.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace ablrank {

std::string method_name(Method m) {
    switch (m) {
    case Method::Rand: return "rand";
    case Method::MaxP: return "maxp";
    case Method::MinD: return "mind";
    case Method::Avg: return "avg";
    case Method::TL: return "tl";
    }
    return "unknown";
}

Method method_from_name(std::string_view name) {
    std::string n(name);
    std::transform(n.begin(), n.end(), n.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (n == "rand") return Method::Rand;
    if (n == "maxp") return Method::MaxP;
    if (n == "mind") return Method::MinD;
    if (n == "avg") return Method::Avg;
    if (n == "tl") return Method::TL;
    throw Error("unknown method '" + std::string(name) + "' (expected rand, maxp, mind, avg or tl)");
}

bool is_abductive(Method m) { return m == Method::Rand || m == Method::MaxP || m == Method::MinD; }

double ce_loss(std::span<const double> g, Label y) { return -std::log(std::max(g[y], kProbFloor)); }

double ce_step(std::span<const double> g, Label y, std::span<double> dlogits) {
    for (std::size_t j = 0; j < g.size(); ++j) dlogits[j] = g[j];
    dlogits[y] -= 1.0;
    return ce_loss(g, y);
}

double soft_ce_step(std::span<const double> g, std::span<const double> target, std::span<double> dlogits) {
    double loss = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        if (target[j] != 0.0) loss -= target[j] * std::log(std::max(g[j], kProbFloor));
        dlogits[j] = g[j] - target[j];
    }
    return loss;
}

double tl_loss(std::span<const double> g, std::span<const double> column) {
    double s = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) s += column[j] * g[j];
    return -std::log(std::max(s, kProbFloor));
}

double tl_step(std::span<const double> g, std::span<const double> column, std::span<double> dlogits) {
    double s = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) s += column[j] * g[j];
    if (s > 0.0) {
        // d/dh_i of -log(sum_j q_j g_j) = g_i - q_i g_i / s
        for (std::size_t i = 0; i < g.size(); ++i) dlogits[i] = g[i] - column[i] * g[i] / s;
    } else {
        double total = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) total += column[j];
        for (std::size_t i = 0; i < g.size(); ++i) dlogits[i] = g[i] - (total > 0.0 ? column[i] / total : 0.0);
    }
    return -std::log(std::max(s, kProbFloor));
}

namespace {

// Softmax rows for every position of a sequence.
void sequence_probs(const Classifier& h, std::span<const double> x, int arity, std::vector<double>& probs,
                    Workspace& ws) {
    const std::size_t d = static_cast<std::size_t>(h.dim()), c = static_cast<std::size_t>(h.classes());
    probs.resize(static_cast<std::size_t>(arity) * c);
    for (int k = 0; k < arity; ++k) {
        std::span<double> row(probs.data() + k * c, c);
        h.forward(x.subspan(k * d, d), row, ws);
        softmax(row, row);
    }
}

} // namespace

double seq_loss(const Classifier& h, std::span<const double> x, LabelView labels) {
    std::vector<double> probs;
    Workspace ws;
    const int m = static_cast<int>(labels.size());
    sequence_probs(h, x, m, probs, ws);
    const std::size_t c = static_cast<std::size_t>(h.classes());
    double loss = 0.0;
    for (int k = 0; k < m; ++k) loss += ce_loss(std::span<const double>(probs).subspan(k * c, c), labels[k]);
    return loss / m;
}

double avg_loss(const Classifier& h, std::span<const double> x, const CandidateSet& candidates) {
    std::vector<double> probs;
    Workspace ws;
    const int m = candidates.arity();
    sequence_probs(h, x, m, probs, ws);
    const std::size_t c = static_cast<std::size_t>(h.classes());
    double total = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        auto seq = candidates[i];
        double loss = 0.0;
        for (int k = 0; k < m; ++k) loss += ce_loss(std::span<const double>(probs).subspan(k * c, c), seq[k]);
        total += loss / m;
    }
    return total / static_cast<double>(candidates.size());
}

MixingMatrix MixingMatrix::from(const ProbMatrix& m) {
    MixingMatrix q;
    q.rows = m.rows;
    q.cols = m.cols();
    q.by_column.resize(static_cast<std::size_t>(q.rows) * q.cols);
    for (int o = 0; o < q.cols; ++o) {
        for (int j = 0; j < q.rows; ++j) q.by_column[static_cast<std::size_t>(o) * q.rows + j] = to_double(m.at(j, o));
    }
    return q;
}

MixingMatrix MixingMatrix::identity(int c) {
    MixingMatrix q;
    q.rows = c;
    q.cols = c;
    q.by_column.assign(static_cast<std::size_t>(c) * c, 0.0);
    for (int j = 0; j < c; ++j) q.by_column[static_cast<std::size_t>(j) * c + j] = 1.0;
    return q;
}

void adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg) {
    if (grads.size() != params.size()) throw Error("gradient size does not match parameters");
    for (double g : grads) {
        if (!std::isfinite(g)) throw Error("non-finite gradient");
    }
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
        state.t = 0;
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

std::size_t abduce_index(Method strategy, const CandidateSet& candidates, std::span<const double> probs,
                         LabelView preds, Rng& rng) {
    if (candidates.empty()) throw Error("cannot abduce from an empty candidate set");
    const std::size_t n = candidates.size();
    if (n == 1) return 0;
    const int m = candidates.arity();
    switch (strategy) {
    case Method::Rand: {
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        return pick(rng);
    }
    case Method::MaxP: {
        const std::size_t c = probs.size() / static_cast<std::size_t>(m);
        std::vector<double> logp(probs.size());
        for (std::size_t i = 0; i < probs.size(); ++i) {
            logp[i] = probs[i] > 0.0 ? std::log(probs[i]) : -std::numeric_limits<double>::infinity();
        }
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            auto seq = candidates[i];
            double s = 0.0;
            for (int k = 0; k < m; ++k) s += logp[k * c + seq[k]];
            if (i == 0 || s > best_score) {
                best = i;
                best_score = s;
            }
        }
        return best;
    }
    case Method::MinD: {
        std::size_t best = 0;
        int best_dist = m + 1;
        for (std::size_t i = 0; i < n; ++i) {
            auto seq = candidates[i];
            int dist = 0;
            for (int k = 0; k < m; ++k) dist += seq[k] != preds[k];
            if (dist < best_dist) {
                best = i;
                best_dist = dist;
            }
        }
        return best;
    }
    default:
        throw Error("strategy " + method_name(strategy) + " does not abduce");
    }
}

LabelSeq abduce(Method strategy, const CandidateSet& candidates, std::span<const double> probs, LabelView preds,
                Rng& rng) {
    auto seq = candidates[abduce_index(strategy, candidates, probs, preds, rng)];
    return LabelSeq(seq.begin(), seq.end());
}

void TrainConfig::validate() const {
    if (epochs < 1) throw Error("epochs must be at least 1");
    if (batch_size < 1) throw Error("batch size must be at least 1");
    if (!(adam.lr > 0) || !std::isfinite(adam.lr)) throw Error("learning rate must be positive");
    if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1)) throw Error("Adam betas must be in [0, 1)");
    if (!(adam.eps > 0)) throw Error("Adam eps must be positive");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"method", method_name(method)},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"lr", adam.lr},
            {"betas", {adam.beta1, adam.beta2}},
            {"eps", adam.eps},
            {"seed", seed},
            {"arch", arch.name()}};
}

namespace {

void check_finite_loss(double loss, const char* what, std::size_t batch) {
    if (!std::isfinite(loss)) {
        throw Error(std::string("non-finite ") + what + " loss in minibatch " + std::to_string(batch));
    }
}

std::vector<std::uint32_t> shuffled(std::size_t n, Rng& rng) {
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

void scale(std::vector<double>& v, double s) {
    for (double& x : v) x *= s;
}

} // namespace

double nesy_epoch(TrainContext ctx, const TrainingView& data, const KnowledgeBase& kb) {
    const Method method = ctx.cfg.method;
    if (!is_abductive(method) && method != Method::Avg) throw Error("nesy_epoch needs rand, maxp, mind or avg");
    auto& h = ctx.h;
    const std::size_t c = static_cast<std::size_t>(h.classes()), d = static_cast<std::size_t>(h.dim());
    const std::size_t n = data.size();
    Workspace ws;
    std::vector<double> probs, logits(c), dlogits(c);

    // Targets per record, flattened: one c-vector per position.
    std::vector<std::size_t> offset(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) offset[i + 1] = offset[i] + static_cast<std::size_t>(data.arity(i));
    std::vector<double> targets(offset[n] * c, 0.0);

    if (method == Method::Avg) {
        std::vector<std::vector<double>> per_concept(kb.concepts.size());
        for (std::size_t t = 0; t < kb.concepts.size(); ++t) {
            const auto& cs = kb.candidates(t);
            auto& w = per_concept[t];
            w.assign(static_cast<std::size_t>(cs.arity()) * c, 0.0);
            for (std::size_t s = 0; s < cs.size(); ++s) {
                auto seq = cs[s];
                for (int k = 0; k < cs.arity(); ++k) w[k * c + seq[k]] += 1.0;
            }
            for (double& v : w) v /= static_cast<double>(cs.size());
        }
        for (std::size_t i = 0; i < n; ++i) {
            const auto& w = per_concept[data.concept_index(i)];
            std::copy(w.begin(), w.end(), targets.begin() + static_cast<std::ptrdiff_t>(offset[i] * c));
        }
    } else {
        LabelSeq preds;
        for (std::size_t i = 0; i < n; ++i) {
            const int m = data.arity(i);
            sequence_probs(h, data.x(i), m, probs, ws);
            preds.resize(static_cast<std::size_t>(m));
            for (int k = 0; k < m; ++k) {
                preds[k] = static_cast<Label>(argmax(std::span<const double>(probs).subspan(k * c, c)));
            }
            const auto& cs = kb.candidates(data.concept_index(i));
            auto seq = cs[abduce_index(method, cs, probs, preds, ctx.rng)];
            for (int k = 0; k < m; ++k) targets[(offset[i] + k) * c + seq[k]] = 1.0;
        }
    }

    auto order = shuffled(n, ctx.rng);
    std::vector<double> grad(h.num_params());
    double epoch_loss = 0.0;
    const std::size_t bs = static_cast<std::size_t>(ctx.cfg.batch_size);
    for (std::size_t start = 0, batch = 0; start < n; start += bs, ++batch) {
        const std::size_t end = std::min(n, start + bs);
        std::fill(grad.begin(), grad.end(), 0.0);
        double batch_loss = 0.0;
        for (std::size_t b = start; b < end; ++b) {
            const std::size_t i = order[b];
            const int m = data.arity(i);
            double loss = 0.0;
            for (int k = 0; k < m; ++k) {
                auto x = data.x(i).subspan(k * d, d);
                h.forward(x, logits, ws);
                softmax(logits, logits);
                loss += soft_ce_step(logits, std::span<const double>(targets).subspan((offset[i] + k) * c, c), dlogits);
                for (double& v : dlogits) v /= m;
                h.backward(x, dlogits, ws, grad);
            }
            batch_loss += loss / m;
        }
        check_finite_loss(batch_loss, "NeSy", batch);
        epoch_loss += batch_loss;
        scale(grad, 1.0 / static_cast<double>(end - start));
        adam_step(h.params(), grad, ctx.adam, ctx.cfg.adam);
    }
    return epoch_loss / static_cast<double>(n);
}

std::vector<TlPair> expand_pairs(const TrainingView& data, const std::vector<int>& column_offsets) {
    std::vector<TlPair> pairs;
    pairs.reserve(data.num_instances());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto t = data.concept_index(i);
        if (t >= column_offsets.size()) throw Error("record refers to a concept outside the matrix");
        for (int k = 0; k < data.arity(i); ++k) {
            pairs.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint16_t>(k),
                             static_cast<std::uint32_t>(column_offsets[t] + k)});
        }
    }
    return pairs;
}

void check_columns(const MixingMatrix& q, const std::vector<TlPair>& pairs, const std::vector<std::string>& names) {
    std::vector<char> used(static_cast<std::size_t>(q.cols), 0);
    for (const auto& p : pairs) {
        if (p.column >= static_cast<std::uint32_t>(q.cols)) throw Error("instance pair refers to a missing column");
        used[p.column] = 1;
    }
    for (int o = 0; o < q.cols; ++o) {
        if (!used[static_cast<std::size_t>(o)]) continue;
        auto col = q.column(o);
        if (std::all_of(col.begin(), col.end(), [](double v) { return v == 0.0; })) {
            std::string name = o < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(o)] : std::to_string(o);
            throw Error("column " + name + " has no mass in the mixing matrix but carries training instances");
        }
    }
}

double tl_epoch(TrainContext ctx, const TrainingView& data, const std::vector<TlPair>& pairs, const MixingMatrix& q) {
    auto& h = ctx.h;
    if (q.rows != h.classes()) throw Error("mixing matrix rows do not match the class count");
    const std::size_t c = static_cast<std::size_t>(h.classes());
    const std::size_t n = pairs.size();
    Workspace ws;
    std::vector<double> g(c), dlogits(c);
    auto order = shuffled(n, ctx.rng);
    std::vector<double> grad(h.num_params());
    double epoch_loss = 0.0;
    const std::size_t bs = static_cast<std::size_t>(ctx.cfg.batch_size);
    for (std::size_t start = 0, batch = 0; start < n; start += bs, ++batch) {
        const std::size_t end = std::min(n, start + bs);
        std::fill(grad.begin(), grad.end(), 0.0);
        double batch_loss = 0.0;
        for (std::size_t b = start; b < end; ++b) {
            const auto& p = pairs[order[b]];
            auto x = data.x(p.record, p.position);
            h.forward(x, g, ws);
            softmax(g, g);
            batch_loss += tl_step(g, q.column(static_cast<int>(p.column)), dlogits);
            h.backward(x, dlogits, ws, grad);
        }
        check_finite_loss(batch_loss, "TL", batch);
        epoch_loss += batch_loss;
        scale(grad, 1.0 / static_cast<double>(end - start));
        adam_step(h.params(), grad, ctx.adam, ctx.cfg.adam);
    }
    return epoch_loss / static_cast<double>(n);
}

double supervised_epoch(TrainContext ctx, const LabeledInstances& data) {
    auto& h = ctx.h;
    const std::size_t c = static_cast<std::size_t>(h.classes());
    const std::size_t n = data.size();
    Workspace ws;
    std::vector<double> g(c), dlogits(c);
    auto order = shuffled(n, ctx.rng);
    std::vector<double> grad(h.num_params());
    double epoch_loss = 0.0;
    const std::size_t bs = static_cast<std::size_t>(ctx.cfg.batch_size);
    for (std::size_t start = 0, batch = 0; start < n; start += bs, ++batch) {
        const std::size_t end = std::min(n, start + bs);
        std::fill(grad.begin(), grad.end(), 0.0);
        double batch_loss = 0.0;
        for (std::size_t b = start; b < end; ++b) {
            const std::size_t i = order[b];
            auto x = data.row(i);
            h.forward(x, g, ws);
            softmax(g, g);
            batch_loss += ce_step(g, data.y[i], dlogits);
            h.backward(x, dlogits, ws, grad);
        }
        check_finite_loss(batch_loss, "supervised", batch);
        epoch_loss += batch_loss;
        scale(grad, 1.0 / static_cast<double>(end - start));
        adam_step(h.params(), grad, ctx.adam, ctx.cfg.adam);
    }
    return epoch_loss / static_cast<double>(n);
}

double permutation_max_accuracy(const std::vector<std::uint64_t>& confusion, int classes) {
    if (classes > 20) throw Error("permutation search limited to 20 classes");
    const std::size_t c = static_cast<std::size_t>(classes);
    std::uint64_t total = std::accumulate(confusion.begin(), confusion.end(), std::uint64_t{0});
    if (total == 0) return 0.0;
    // dp[mask]: best count assigning true classes 0..popcount(mask)-1 to the
    // predicted labels in mask.
    std::vector<std::int64_t> dp(std::size_t{1} << c, -1);
    dp[0] = 0;
    for (std::size_t mask = 0; mask < dp.size(); ++mask) {
        if (dp[mask] < 0) continue;
        const std::size_t j = static_cast<std::size_t>(std::popcount(mask));
        if (j == c) continue;
        for (std::size_t p = 0; p < c; ++p) {
            if (mask & (std::size_t{1} << p)) continue;
            auto next = mask | (std::size_t{1} << p);
            dp[next] = std::max(dp[next], dp[mask] + static_cast<std::int64_t>(confusion[j * c + p]));
        }
    }
    return static_cast<double>(dp.back()) / static_cast<double>(total);
}

Evaluation evaluate(const Classifier& h, const LabeledInstances& test) {
    Evaluation ev;
    const std::size_t c = static_cast<std::size_t>(h.classes());
    ev.confusion.assign(c * c, 0);
    if (test.size() == 0) return ev;
    std::vector<double> logits(c);
    Workspace ws;
    std::uint64_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        h.forward(test.row(i), logits, ws);
        const auto pred = static_cast<std::size_t>(argmax(logits));
        ++ev.confusion[test.y[i] * c + pred];
        correct += pred == test.y[i];
    }
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
    if (c <= 16) ev.perm_max_accuracy = permutation_max_accuracy(ev.confusion, static_cast<int>(c));
    return ev;
}

nlohmann::json TrainReport::to_json(bool timing) const {
    nlohmann::json j;
    j["method"] = method_name(config.method);
    j["seed"] = config.seed;
    j["epochs"] = config.epochs;
    j["final_accuracy"] = final_accuracy;
    j["perm_max_accuracy"] = perm_max_accuracy ? nlohmann::json(*perm_max_accuracy) : nlohmann::json(nullptr);
    j["loss_curve"] = loss_curve;
    j["wall_ms"] = timing ? wall_ms : 0.0;
    j["n_train"] = n_train;
    j["n_test"] = n_test;
    j["config"] = config.to_json();
    return j;
}

TrainReport train(const KnowledgeBase& kb, const TrainingView& data, const ProbMatrix* matrix,
                  const TrainConfig& cfg, const LabeledInstances* test, Classifier* out) {
    cfg.validate();
    if (data.size() == 0) throw Error("training set is empty");
    if (data.classes() != kb.num_classes()) throw Error("dataset class count does not match the KB");
    const auto t0 = std::chrono::steady_clock::now();

    Classifier h(data.dim(), data.classes(), cfg.arch, derive_seed(cfg.seed, 0x68ULL));
    Rng rng(derive_seed(cfg.seed, 0x74726169ULL));
    AdamState adam;
    TrainContext ctx{h, adam, cfg, rng};

    TrainReport report;
    report.config = cfg;
    report.n_train = data.size();

    if (cfg.method == Method::TL) {
        if (!matrix) throw Error("TL training needs a probability matrix");
        if (matrix->rows != kb.num_classes()) throw Error("matrix rows do not match the class count");
        auto q = MixingMatrix::from(*matrix);
        auto pairs = expand_pairs(data, matrix->column_offsets(kb));
        std::vector<std::string> names;
        for (const auto& col : matrix->columns) names.push_back("(" + col.concept_id + ", " + std::to_string(col.position) + ")");
        check_columns(q, pairs, names);
        for (int e = 0; e < cfg.epochs; ++e) report.loss_curve.push_back(tl_epoch(ctx, data, pairs, q));
    } else {
        for (int e = 0; e < cfg.epochs; ++e) report.loss_curve.push_back(nesy_epoch(ctx, data, kb));
    }

    if (test) {
        auto ev = evaluate(h, *test);
        report.final_accuracy = ev.accuracy;
        report.perm_max_accuracy = ev.perm_max_accuracy;
        report.n_test = test->size();
    }
    report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (out) *out = std::move(h);
    return report;
}

namespace {

double sequence_objective(const Classifier& h, const std::vector<double>& x, int m,
                          const std::vector<std::vector<double>>& targets, std::vector<double>* grad) {
    const std::size_t c = static_cast<std::size_t>(h.classes()), d = static_cast<std::size_t>(h.dim());
    std::vector<double> g(c), dlogits(c);
    Workspace ws;
    double loss = 0.0;
    for (int k = 0; k < m; ++k) {
        std::span<const double> xk(x.data() + k * d, d);
        h.forward(xk, g, ws);
        softmax(g, g);
        loss += soft_ce_step(g, targets[static_cast<std::size_t>(k)], dlogits);
        if (grad) {
            for (double& v : dlogits) v /= m;
            h.backward(xk, dlogits, ws, *grad);
        }
    }
    return loss / m;
}

} // namespace

LossFn ce_objective(std::vector<double> x, Label y) {
    return [x = std::move(x), y](const Classifier& h, std::vector<double>* grad) {
        std::vector<double> g(static_cast<std::size_t>(h.classes())), dlogits(g.size());
        Workspace ws;
        h.forward(x, g, ws);
        softmax(g, g);
        double loss = ce_step(g, y, dlogits);
        if (grad) h.backward(x, dlogits, ws, *grad);
        return loss;
    };
}

LossFn seq_objective(std::vector<double> x, LabelSeq labels) {
    return [x = std::move(x), labels = std::move(labels)](const Classifier& h, std::vector<double>* grad) {
        std::vector<std::vector<double>> targets;
        for (Label y : labels) {
            std::vector<double> t(static_cast<std::size_t>(h.classes()), 0.0);
            t[y] = 1.0;
            targets.push_back(std::move(t));
        }
        return sequence_objective(h, x, static_cast<int>(labels.size()), targets, grad);
    };
}

LossFn avg_objective(std::vector<double> x, CandidateSet candidates) {
    return [x = std::move(x), cs = std::move(candidates)](const Classifier& h, std::vector<double>* grad) {
        const int m = cs.arity();
        std::vector<std::vector<double>> targets(static_cast<std::size_t>(m),
                                                 std::vector<double>(static_cast<std::size_t>(h.classes()), 0.0));
        for (std::size_t i = 0; i < cs.size(); ++i) {
            auto seq = cs[i];
            for (int k = 0; k < m; ++k) targets[k][seq[k]] += 1.0 / static_cast<double>(cs.size());
        }
        return sequence_objective(h, x, m, targets, grad);
    };
}

LossFn tl_objective(std::vector<double> x, int column, MixingMatrix q) {
    return [x = std::move(x), column, q = std::move(q)](const Classifier& h, std::vector<double>* grad) {
        std::vector<double> g(static_cast<std::size_t>(h.classes())), dlogits(g.size());
        Workspace ws;
        h.forward(x, g, ws);
        softmax(g, g);
        double loss = tl_step(g, q.column(column), dlogits);
        if (grad) h.backward(x, dlogits, ws, *grad);
        return loss;
    };
}

double grad_check(const Classifier& h, const LossFn& loss, double epsilon) {
    if (epsilon < 1e-7 || epsilon > 1e-3) throw Error("grad_check epsilon must be in [1e-7, 1e-3]");
    std::vector<double> analytic(h.num_params(), 0.0);
    loss(h, &analytic);
    Classifier probe = h;
    double worst = 0.0;
    for (std::size_t i = 0; i < h.num_params(); ++i) {
        const double orig = h.params()[i];
        probe.params()[i] = orig + epsilon;
        const double up = loss(probe, nullptr);
        probe.params()[i] = orig - epsilon;
        const double down = loss(probe, nullptr);
        probe.params()[i] = orig;
        const double numeric = (up - down) / (2.0 * epsilon);
        const double a = analytic[i];
        worst = std::max(worst, std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12));
    }
    return worst;
}

} // namespace ablrank
