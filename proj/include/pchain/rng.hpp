#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace pchain {

/// Seedable random stream with platform-independent output.
///
/// The engine is std::mt19937_64, whose sequence is fixed by the standard.
/// Distributions are implemented here rather than with <random> adaptors,
/// whose output differs between standard library implementations.
class RngStream
{
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    /// Stream for a named purpose derived from a master seed, e.g.
    /// derive(master, "witness-select", node).
    static RngStream derive(std::uint64_t master, std::string_view purpose, std::uint64_t id = 0);

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in the closed range [lo, hi].
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);

    bool bernoulli(double p) { return uniform01() < p; }

    /// Exponential variate with the given rate (rate > 0).
    double exponential(double rate);

    template <typename T>
    void shuffle(std::vector<T>& items)
    {
        for (std::size_t i = items.size(); i > 1; --i) {
            auto j = static_cast<std::size_t>(uniform_int(0, i - 1));
            std::swap(items[i - 1], items[j]);
        }
    }

    /// k distinct elements drawn uniformly without replacement, in draw order.
    template <typename T>
    std::vector<T> sample(std::span<const T> population, std::size_t k)
    {
        std::vector<T> pool(population.begin(), population.end());
        if (k > pool.size())
            k = pool.size();
        for (std::size_t i = 0; i < k; ++i) {
            auto j = static_cast<std::size_t>(uniform_int(i, pool.size() - 1));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

private:
    std::mt19937_64 engine_;
};

/// splitmix64 finalizer; used to mix seeds and labels.
std::uint64_t mix64(std::uint64_t x);

} // namespace pchain
