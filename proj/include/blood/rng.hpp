#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

namespace blood {

/// Separates the random streams used by different subsystems under one seed.
enum class RngPurpose : std::uint32_t {
    Init = 1,
    Training = 2,
    Dropout = 3,
    Estimator = 4,
    Dataset = 5,
    Subsample = 6,
    Evaluation = 7,
};

/// Philox4x32-10 counter-based generator.
///
/// The output is a pure function of (seed, purpose, stream words, position),
/// so any number of generators can be created independently (one per
/// instance, layer and sample) without coordinating between threads.
class CounterRng {
public:
    using result_type = std::uint64_t;

    CounterRng(std::uint64_t seed, RngPurpose purpose, std::uint32_t stream0 = 0,
               std::uint32_t stream1 = 0, std::uint32_t stream2 = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()() { return next_u64(); }

    std::uint32_t next_u32();
    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Standard normal via Box-Muller.
    double normal();
    /// +1 or -1 with equal probability.
    double rademacher();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

private:
    void refill();

    std::array<std::uint32_t, 2> key_{};
    std::array<std::uint32_t, 4> counter_{};
    std::array<std::uint32_t, 4> block_{};
    unsigned used_ = 4;
    bool has_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Fisher-Yates shuffle driven by CounterRng::below, so the permutation does
/// not depend on the standard library's shuffle algorithm.
template <class T>
void shuffle(std::vector<T>& items, CounterRng& rng)
{
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.below(i)]);
}

}  // namespace blood
