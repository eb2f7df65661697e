#include <pchain/bytes.hpp>

#include <algorithm>

namespace pchain {

namespace {

int hex_value(char c)
{
    if (c >= '0' && c <= '9')
        return c - '0';
    if (c >= 'a' && c <= 'f')
        return c - 'a' + 10;
    if (c >= 'A' && c <= 'F')
        return c - 'A' + 10;
    return -1;
}

} // namespace

std::string to_hex(std::span<const std::uint8_t> bytes)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

Bytes from_hex(std::string_view text)
{
    if (text.size() % 2 != 0)
        throw std::invalid_argument("hex string has odd length");
    Bytes out(text.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = hex_value(text[2 * i]);
        int lo = hex_value(text[2 * i + 1]);
        if (hi < 0 || lo < 0)
            throw std::invalid_argument("invalid hex character");
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

void ByteWriter::u32(std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v)
{
    for (int i = 0; i < 8; ++i)
        out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::blob(std::span<const std::uint8_t> bytes)
{
    u32(static_cast<std::uint32_t>(bytes.size()));
    raw(bytes);
}

void ByteWriter::str(std::string_view s)
{
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
}

std::span<const std::uint8_t> ByteReader::take(std::size_t n)
{
    if (in_.size() - pos_ < n)
        throw DecodeError("truncated record");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
}

std::uint8_t ByteReader::u8()
{
    return take(1)[0];
}

std::uint32_t ByteReader::u32()
{
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
        v = (v << 8) | s[i];
    return v;
}

std::uint64_t ByteReader::u64()
{
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i)
        v = (v << 8) | s[i];
    return v;
}

void ByteReader::raw(std::span<std::uint8_t> out)
{
    auto s = take(out.size());
    std::copy(s.begin(), s.end(), out.begin());
}

Bytes ByteReader::blob()
{
    auto n = u32();
    auto s = take(n);
    return Bytes(s.begin(), s.end());
}

std::string ByteReader::str()
{
    auto n = u32();
    auto s = take(n);
    return std::string(s.begin(), s.end());
}

void ByteReader::expect_done() const
{
    if (!done())
        throw DecodeError("trailing bytes after record");
}

} // namespace pchain
