#include "ablrank/classifier.hpp"

#include <algorithm>
#include <cmath>

namespace ablrank {

std::string ArchSpec::name() const {
    if (arch == Arch::Linear) return "linear";
    return "mlp" + std::to_string(hidden) + (activation == Activation::Relu ? "-relu" : "-tanh");
}

namespace {

void init_block(std::vector<double>& p, std::size_t begin, std::size_t count, int fan_in, Init init, Rng& rng) {
    if (init == Init::Zero) return;
    if (init == Init::Normal) {
        std::normal_distribution<double> d(0.0, 1.0);
        for (std::size_t i = 0; i < count; ++i) p[begin + i] = d(rng);
        return;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> d(-bound, bound);
    for (std::size_t i = 0; i < count; ++i) p[begin + i] = d(rng);
}

} // namespace

Classifier::Classifier(int dim, int classes, ArchSpec arch, std::uint64_t seed, Init init)
    : dim_(dim), classes_(classes), arch_(arch) {
    if (dim < 1 || classes < 2) throw Error("classifier needs dim >= 1 and at least two classes");
    Rng rng(derive_seed(seed, 0x696e6974ULL));
    const std::size_t d = static_cast<std::size_t>(dim), c = static_cast<std::size_t>(classes);
    if (arch.arch == Arch::Linear) {
        params_.assign(c * d + c, 0.0);
        init_block(params_, 0, c * d, dim, init, rng);
        init_block(params_, c * d, c, dim, init, rng);
    } else {
        if (arch.hidden < 1) throw Error("hidden width must be positive");
        const std::size_t h = static_cast<std::size_t>(arch.hidden);
        params_.assign(h * d + h + c * h + c, 0.0);
        init_block(params_, 0, h * d, dim, init, rng);
        init_block(params_, h * d, h, dim, init, rng);
        init_block(params_, h * d + h, c * h, arch.hidden, init, rng);
        init_block(params_, h * d + h + c * h, c, arch.hidden, init, rng);
    }
}

void Classifier::forward(std::span<const double> x, std::span<double> logits, Workspace& ws) const {
    for (double v : x) {
        if (!std::isfinite(v)) throw Error("non-finite classifier input");
    }
    const std::size_t d = static_cast<std::size_t>(dim_), c = static_cast<std::size_t>(classes_);
    const double* p = params_.data();
    if (arch_.arch == Arch::Linear) {
        for (std::size_t j = 0; j < c; ++j) {
            double s = p[c * d + j];
            const double* w = p + j * d;
            for (std::size_t i = 0; i < d; ++i) s += w[i] * x[i];
            logits[j] = s;
        }
        return;
    }
    const std::size_t h = static_cast<std::size_t>(arch_.hidden);
    ws.pre.resize(h);
    ws.hidden.resize(h);
    for (std::size_t u = 0; u < h; ++u) {
        double s = p[h * d + u];
        const double* w = p + u * d;
        for (std::size_t i = 0; i < d; ++i) s += w[i] * x[i];
        ws.pre[u] = s;
        ws.hidden[u] = arch_.activation == Activation::Relu ? std::max(s, 0.0) : std::tanh(s);
    }
    const double* w2 = p + h * d + h;
    const double* b2 = w2 + c * h;
    for (std::size_t j = 0; j < c; ++j) {
        double s = b2[j];
        for (std::size_t u = 0; u < h; ++u) s += w2[j * h + u] * ws.hidden[u];
        logits[j] = s;
    }
}

void Classifier::backward(std::span<const double> x, std::span<const double> dlogits, Workspace& ws,
                          std::span<double> grad) const {
    const std::size_t d = static_cast<std::size_t>(dim_), c = static_cast<std::size_t>(classes_);
    double* g = grad.data();
    if (arch_.arch == Arch::Linear) {
        for (std::size_t j = 0; j < c; ++j) {
            const double dj = dlogits[j];
            if (dj == 0.0) continue;
            double* gw = g + j * d;
            for (std::size_t i = 0; i < d; ++i) gw[i] += dj * x[i];
            g[c * d + j] += dj;
        }
        return;
    }
    const std::size_t h = static_cast<std::size_t>(arch_.hidden);
    const double* w2 = params_.data() + h * d + h;
    double* gw2 = g + h * d + h;
    double* gb2 = gw2 + c * h;
    ws.dhidden.assign(h, 0.0);
    for (std::size_t j = 0; j < c; ++j) {
        const double dj = dlogits[j];
        if (dj == 0.0) continue;
        for (std::size_t u = 0; u < h; ++u) {
            gw2[j * h + u] += dj * ws.hidden[u];
            ws.dhidden[u] += dj * w2[j * h + u];
        }
        gb2[j] += dj;
    }
    for (std::size_t u = 0; u < h; ++u) {
        double dpre;
        if (arch_.activation == Activation::Relu) {
            dpre = ws.pre[u] > 0.0 ? ws.dhidden[u] : 0.0;
        } else {
            dpre = ws.dhidden[u] * (1.0 - ws.hidden[u] * ws.hidden[u]);
        }
        if (dpre == 0.0) continue;
        double* gw = g + u * d;
        for (std::size_t i = 0; i < d; ++i) gw[i] += dpre * x[i];
        g[h * d + u] += dpre;
    }
}

std::vector<double> Classifier::logits(std::span<const double> x) const {
    std::vector<double> out(static_cast<std::size_t>(classes_));
    Workspace ws;
    forward(x, out, ws);
    return out;
}

std::vector<double> Classifier::probabilities(std::span<const double> x) const { return softmax(logits(x)); }

int Classifier::predict(std::span<const double> x) const { return argmax(logits(x)); }

void softmax(std::span<const double> logits, std::span<double> out) {
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        out[j] = std::exp(logits[j] - mx);
        sum += out[j];
    }
    for (std::size_t j = 0; j < logits.size(); ++j) out[j] /= sum;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.size());
    softmax(logits, out);
    return out;
}

int argmax(std::span<const double> v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

} // namespace ablrank
