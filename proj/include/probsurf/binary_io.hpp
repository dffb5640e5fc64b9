#pragma once

#include "probsurf/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

namespace probsurf::binio {

// All container formats are little-endian regardless of host order.

template <typename T>
inline void write_le(std::ostream& os, T value)
{
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes.begin(), bytes.end());
    os.write(bytes.data(), sizeof(T));
}

template <typename T>
inline T read_le(std::istream& is)
{
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<char, sizeof(T)> bytes;
    if (!is.read(bytes.data(), sizeof(T)))
        throw IoError("unexpected end of binary stream");
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

inline void write_magic(std::ostream& os, std::string_view magic)
{
    os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& is, std::string_view magic)
{
    std::string got(magic.size(), '\0');
    if (!is.read(got.data(), static_cast<std::streamsize>(magic.size())) || got != magic)
        throw IoError("bad magic: expected '" + std::string(magic) + "'");
}

inline void write_string(std::ostream& os, const std::string& s)
{
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is)
{
    const auto n = read_le<std::uint32_t>(is);
    if (n > (1u << 20))
        throw IoError("string length out of range");
    std::string s(n, '\0');
    if (!is.read(s.data(), n))
        throw IoError("unexpected end of binary stream");
    return s;
}

} // namespace probsurf::binio
