#pragma once

#include <pchain/bytes.hpp>

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>

namespace pchain {

/// 32-byte BLAKE2b digest.
struct Digest
{
    static constexpr std::size_t size = 32;
    std::array<std::uint8_t, size> bytes{};

    std::string hex() const { return to_hex(bytes); }
    bool is_zero() const;
    static Digest from_hex(std::string_view text);

    auto operator<=>(const Digest&) const = default;
};

Digest hash_bytes(std::span<const std::uint8_t> data);

/// Incremental BLAKE2b-256; finish() gives the same digest as hash_bytes
/// over the concatenated input.
class Hasher
{
public:
    Hasher();
    ~Hasher();
    Hasher(Hasher&&) noexcept;
    Hasher& operator=(Hasher&&) noexcept;

    void update(std::span<const std::uint8_t> data);
    void update(std::string_view text);
    /// Digest of everything so far; the hasher can keep absorbing.
    Digest finish() const;

private:
    struct State;
    std::unique_ptr<State> state_;
};

/// Account identifier: the digest of exactly one public key.
struct AccountId
{
    Digest digest;

    std::string hex() const { return digest.hex(); }
    /// First 8 hex characters, for logs.
    std::string short_hex() const { return digest.hex().substr(0, 8); }
    static AccountId from_hex(std::string_view text) { return {Digest::from_hex(text)}; }

    auto operator<=>(const AccountId&) const = default;
};

inline constexpr std::size_t public_key_size = 32;
inline constexpr std::size_t secret_key_size = 64;
inline constexpr std::size_t signature_size = 64;

struct KeyPair
{
    Bytes secret_key;
    Bytes public_key;

    bool operator==(const KeyPair&) const = default;
};

/// Detached Ed25519 signature. The signer's public key travels with the
/// signature so evidence can be checked by a node that has never seen the
/// signer before.
struct Signature
{
    Bytes bytes;
    AccountId signer;
    Bytes public_key;

    bool operator==(const Signature&) const = default;
};

/// Deterministic Ed25519 key pair from a 64-bit seed.
KeyPair generate_keypair(std::uint64_t seed);

/// Throws std::invalid_argument if public_key is not 32 bytes.
AccountId account_id(std::span<const std::uint8_t> public_key);

Signature sign(std::span<const std::uint8_t> secret_key, std::span<const std::uint8_t> message);

/// Total: malformed keys or signatures yield false. Also requires that the
/// signature names the account derived from public_key.
bool verify(std::span<const std::uint8_t> public_key,
            std::span<const std::uint8_t> message,
            const Signature& signature);

/// Results are memoized process-wide; this drops the memo.
void clear_verify_cache();

/// verify() using the public key carried in the signature.
bool verify_embedded(std::span<const std::uint8_t> message, const Signature& signature);

void encode(ByteWriter& w, const Signature& s);
Signature decode_signature(ByteReader& r);

} // namespace pchain

template <>
struct std::hash<pchain::Digest>
{
    std::size_t operator()(const pchain::Digest& d) const noexcept
    {
        std::size_t h = 0;
        for (int i = 0; i < 8; ++i)
            h = (h << 8) | d.bytes[i];
        return h;
    }
};

template <>
struct std::hash<pchain::AccountId>
{
    std::size_t operator()(const pchain::AccountId& a) const noexcept { return std::hash<pchain::Digest>{}(a.digest); }
};
