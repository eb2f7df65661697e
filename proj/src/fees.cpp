#include <pchain/fees.hpp>

#include <algorithm>

namespace pchain {

std::uint64_t compute_fee(std::uint64_t amount, const FeePolicy& policy)
{
    const auto scaled = static_cast<unsigned __int128>(amount) * policy.rate_ppm / 1'000'000u;
    return static_cast<std::uint64_t>(std::min<unsigned __int128>(scaled, policy.cap));
}

} // namespace pchain
