#pragma once

#include <cstdint>

namespace pchain {

enum class FeePayer { sender, receiver };

/// Percentage fee with an absolute cap. The rate is held in parts per
/// million so the fee is exact integer arithmetic: 1000 ppm = 0.001.
struct FeePolicy
{
    std::uint64_t rate_ppm = 1000;
    std::uint64_t cap = 5;
    FeePayer payer = FeePayer::sender;
};

/// min(floor(rate * amount), cap)
std::uint64_t compute_fee(std::uint64_t amount, const FeePolicy& policy);

} // namespace pchain
