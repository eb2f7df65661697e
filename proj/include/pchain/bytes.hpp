#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pchain {

using Bytes = std::vector<std::uint8_t>;

std::string to_hex(std::span<const std::uint8_t> bytes);

/// Throws std::invalid_argument on odd length or non-hex characters.
Bytes from_hex(std::string_view text);

/// Raised when a canonical encoding cannot be decoded.
class DecodeError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Little-endian, length-prefixed writer for canonical encodings.
class ByteWriter
{
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    /// Fixed-width field, no prefix.
    void raw(std::span<const std::uint8_t> bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }
    /// u32 length prefix followed by the bytes.
    void blob(std::span<const std::uint8_t> bytes);
    void str(std::string_view s);

    const Bytes& bytes() const& { return out_; }
    Bytes take() && { return std::move(out_); }

private:
    Bytes out_;
};

class ByteReader
{
public:
    explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    void raw(std::span<std::uint8_t> out);
    Bytes blob();
    std::string str();

    bool done() const { return pos_ == in_.size(); }
    /// Throws DecodeError when trailing bytes remain.
    void expect_done() const;

private:
    std::span<const std::uint8_t> take(std::size_t n);

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

} // namespace pchain
