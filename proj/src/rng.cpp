#include <pchain/rng.hpp>

#include <cmath>
#include <limits>

namespace pchain {

std::uint64_t mix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

RngStream RngStream::derive(std::uint64_t master, std::string_view purpose, std::uint64_t id)
{
    // FNV-1a over the label, then mixed with the master seed and id.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : purpose) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return RngStream(mix64(mix64(master ^ h) ^ mix64(id + 0x632be59bd9b4e019ULL)));
}

std::uint64_t RngStream::uniform_int(std::uint64_t lo, std::uint64_t hi)
{
    if (lo >= hi)
        return lo;
    const std::uint64_t span = hi - lo;
    if (span == std::numeric_limits<std::uint64_t>::max())
        return engine_();
    const std::uint64_t range = span + 1;
    // Reject the 2^64 mod range lowest values so the remainder is unbiased.
    const std::uint64_t threshold = (0 - range) % range;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x < threshold);
    return lo + x % range;
}

double RngStream::exponential(double rate)
{
    // 1 - u lies in (0, 1], so the log is finite.
    return -std::log(1.0 - uniform01()) / rate;
}

} // namespace pchain
