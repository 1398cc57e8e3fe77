#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ablrank {

// Class index in [0, c). Alphabets are capped at 256 classes.
using Label = std::uint8_t;
using LabelSeq = std::vector<Label>;
using LabelView = std::span<const Label>;

using Rng = std::mt19937_64;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// splitmix64 finaliser; used to derive independent child seeds from one
// user-supplied seed so every subcommand and sweep cell has its own stream.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, Rest... rest) {
    return derive_seed(derive_seed(seed, stream), static_cast<std::uint64_t>(rest)...);
}

} // namespace ablrank
