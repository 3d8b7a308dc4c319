#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace fedvec {

/// Seeded random stream with platform-independent output.
///
/// The standard distributions are implementation-defined, so every draw is
/// derived here from raw 64-bit xoshiro256** output. Two streams built from
/// the same seed produce the same sequence on every toolchain.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    /// Independent stream derived from `seed` and a name such as "data",
    /// "init", "dropout" or "split".
    static Rng substream(std::uint64_t seed, std::string_view name);

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi);
    /// Uniform integer in [0, bound). `bound` must be positive.
    std::uint64_t below(std::uint64_t bound);
    /// Standard normal via Box-Muller.
    double normal();
    bool bernoulli(double p);

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t s_[4];
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace fedvec
