#include <pchain/crypto.hpp>

#include <sodium.h>

#include <algorithm>
#include <mutex>
#include <stdexcept>
#include <unordered_map>

namespace pchain {

namespace {

void ensure_sodium()
{
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0)
            throw std::runtime_error("libsodium initialisation failed");
    });
}

} // namespace

bool Digest::is_zero() const
{
    return std::all_of(bytes.begin(), bytes.end(), [](std::uint8_t b) { return b == 0; });
}

Digest Digest::from_hex(std::string_view text)
{
    auto raw = pchain::from_hex(text);
    if (raw.size() != size)
        throw std::invalid_argument("digest must be 32 bytes");
    Digest d;
    std::copy(raw.begin(), raw.end(), d.bytes.begin());
    return d;
}

Digest hash_bytes(std::span<const std::uint8_t> data)
{
    ensure_sodium();
    Digest d;
    crypto_generichash(d.bytes.data(), d.bytes.size(), data.data(), data.size(), nullptr, 0);
    return d;
}

struct Hasher::State
{
    crypto_generichash_state st;
};

Hasher::Hasher() : state_(std::make_unique<State>())
{
    ensure_sodium();
    crypto_generichash_init(&state_->st, nullptr, 0, Digest::size);
}

Hasher::~Hasher() = default;
Hasher::Hasher(Hasher&&) noexcept = default;
Hasher& Hasher::operator=(Hasher&&) noexcept = default;

void Hasher::update(std::span<const std::uint8_t> data)
{
    crypto_generichash_update(&state_->st, data.data(), data.size());
}

void Hasher::update(std::string_view text)
{
    crypto_generichash_update(&state_->st, reinterpret_cast<const unsigned char*>(text.data()), text.size());
}

Digest Hasher::finish() const
{
    auto copy = state_->st;
    Digest d;
    crypto_generichash_final(&copy, d.bytes.data(), d.bytes.size());
    return d;
}

KeyPair generate_keypair(std::uint64_t seed)
{
    ensure_sodium();
    // Expand the 64-bit seed into a 32-byte Ed25519 seed under a fixed key.
    static constexpr char domain[] = "pchain.keygen.v1";
    std::array<std::uint8_t, 8> le{};
    for (int i = 0; i < 8; ++i)
        le[i] = static_cast<std::uint8_t>(seed >> (8 * i));
    std::array<std::uint8_t, crypto_sign_SEEDBYTES> ed_seed{};
    crypto_generichash(ed_seed.data(), ed_seed.size(), le.data(), le.size(),
                       reinterpret_cast<const unsigned char*>(domain), sizeof(domain) - 1);

    KeyPair kp;
    kp.public_key.resize(crypto_sign_PUBLICKEYBYTES);
    kp.secret_key.resize(crypto_sign_SECRETKEYBYTES);
    crypto_sign_seed_keypair(kp.public_key.data(), kp.secret_key.data(), ed_seed.data());
    sodium_memzero(ed_seed.data(), ed_seed.size());
    return kp;
}

AccountId account_id(std::span<const std::uint8_t> public_key)
{
    if (public_key.size() != public_key_size)
        throw std::invalid_argument("public key must be 32 bytes");
    return {hash_bytes(public_key)};
}

Signature sign(std::span<const std::uint8_t> secret_key, std::span<const std::uint8_t> message)
{
    ensure_sodium();
    if (secret_key.size() != secret_key_size)
        throw std::invalid_argument("secret key must be 64 bytes");
    Signature s;
    s.bytes.resize(crypto_sign_BYTES);
    crypto_sign_detached(s.bytes.data(), nullptr, message.data(), message.size(), secret_key.data());
    // libsodium stores the public key in the second half of the secret key.
    s.public_key.assign(secret_key.begin() + 32, secret_key.end());
    s.signer = account_id(s.public_key);
    return s;
}

namespace {

constexpr std::size_t verify_cache_limit = 1 << 20;
std::mutex verify_cache_mutex;
std::unordered_map<Digest, bool> verify_cache;

} // namespace

bool verify(std::span<const std::uint8_t> public_key,
            std::span<const std::uint8_t> message,
            const Signature& signature)
{
    ensure_sodium();
    if (public_key.size() != public_key_size || signature.bytes.size() != signature_size)
        return false;
    if (account_id(public_key) != signature.signer)
        return false;

    Hasher h;
    h.update(public_key);
    h.update(signature.bytes);
    h.update(message);
    const auto key = h.finish();
    {
        std::lock_guard lock(verify_cache_mutex);
        if (auto it = verify_cache.find(key); it != verify_cache.end())
            return it->second;
    }
    const bool ok =
        crypto_sign_verify_detached(signature.bytes.data(), message.data(), message.size(), public_key.data()) == 0;
    std::lock_guard lock(verify_cache_mutex);
    if (verify_cache.size() >= verify_cache_limit)
        verify_cache.clear();
    verify_cache.emplace(key, ok);
    return ok;
}

void clear_verify_cache()
{
    std::lock_guard lock(verify_cache_mutex);
    verify_cache.clear();
}

bool verify_embedded(std::span<const std::uint8_t> message, const Signature& signature)
{
    return verify(signature.public_key, message, signature);
}

void encode(ByteWriter& w, const Signature& s)
{
    w.blob(s.bytes);
    w.raw(s.signer.digest.bytes);
    w.blob(s.public_key);
}

Signature decode_signature(ByteReader& r)
{
    Signature s;
    s.bytes = r.blob();
    r.raw(s.signer.digest.bytes);
    s.public_key = r.blob();
    return s;
}

} // namespace pchain
