#pragma once

#include <cstdint>
#include <string_view>

#include <Eigen/Dense>

namespace minsnr {

using Vector = Eigen::VectorXd;
/// Batches are stored one sample per row.
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Diffusion step, 1-based. t = 0 denotes clean data.
using Step = int;

/// SplitMix64 finalizer; the seed-splitting rule used across the project.
constexpr std::uint64_t mix_seed(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Child seed for an integer-labelled sub-stream.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t label) {
    return mix_seed(mix_seed(root) ^ mix_seed(label + 0x632be59bd9b4e019ULL));
}

/// Child seed for a named component (FNV-1a of the name, then mixed).
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view component) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : component) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return derive_seed(root, h);
}

}  // namespace minsnr
