#pragma once

#include "ablrank/common.hpp"

#include "json.hpp"

#include <span>
#include <string>
#include <vector>

namespace ablrank {

enum class Arch { Linear, Mlp };
enum class Activation { Relu, Tanh };

struct ArchSpec {
    Arch arch = Arch::Linear;
    int hidden = 64;
    Activation activation = Activation::Relu;

    static ArchSpec linear() { return {}; }
    static ArchSpec mlp(int hidden, Activation act = Activation::Relu) { return {Arch::Mlp, hidden, act}; }
    std::string name() const;
};

enum class Init {
    Uniform,  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases
    Normal,   // N(0, 1) for weights and biases
    Zero,
};

// Per-sample scratch space for the forward/backward pass.
struct Workspace {
    std::vector<double> pre;     // hidden pre-activations (MLP)
    std::vector<double> hidden;  // hidden activations (MLP)
    std::vector<double> dhidden;
};

// h: R^dim -> R^classes. Parameters live in one flat vector:
// Linear: W (classes x dim), b (classes).
// Mlp:    W1 (hidden x dim), b1 (hidden), W2 (classes x hidden), b2 (classes).
class Classifier {
public:
    Classifier() = default;
    Classifier(int dim, int classes, ArchSpec arch, std::uint64_t seed, Init init = Init::Uniform);

    int dim() const { return dim_; }
    int classes() const { return classes_; }
    const ArchSpec& arch() const { return arch_; }
    std::size_t num_params() const { return params_.size(); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    void forward(std::span<const double> x, std::span<double> logits, Workspace& ws) const;
    // Adds d(loss)/d(params) to `grad` given d(loss)/d(logits); `ws` must hold
    // the state left by forward() on the same x.
    void backward(std::span<const double> x, std::span<const double> dlogits, Workspace& ws,
                  std::span<double> grad) const;

    std::vector<double> logits(std::span<const double> x) const;
    std::vector<double> probabilities(std::span<const double> x) const;
    int predict(std::span<const double> x) const;

private:
    int dim_ = 0;
    int classes_ = 0;
    ArchSpec arch_;
    std::vector<double> params_;
};

// Numerically stable softmax; `out` may alias `logits`.
void softmax(std::span<const double> logits, std::span<double> out);
std::vector<double> softmax(std::span<const double> logits);
// Smallest index among the maxima.
int argmax(std::span<const double> v);

} // namespace ablrank
