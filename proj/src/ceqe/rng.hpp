// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace ceqe {

/// Counter-based generator: output k is splitmix64(seed, k).
///
/// The whole state is (seed, counter), which makes checkpointing and resuming
/// exact. Every draw advances the counter by one, so the same seed and the
/// same call sequence always reproduce the same stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0)
        : seed_(seed), counter_(counter) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

    /// Box-Muller from two uniforms; no cached second value.
    double normal(double mean, double stddev);

    /// Uniform integer in [0, n). n must be > 0.
    std::size_t below(std::size_t n);

    template <class T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(items[i - 1], items[j]);
        }
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    friend bool operator==(const Rng&, const Rng&) = default;

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

std::uint64_t splitmix64(std::uint64_t x);

} // namespace ceqe
