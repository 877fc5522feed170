#pragma once

// Little-endian primitive readers/writers shared by the checkpoint and
// embedding-archive formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "pen/error.hpp"

namespace pen::io {

static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

template <typename U>
void write_le(std::ostream& out, U value)
{
    char bytes[sizeof(U)];
    std::memcpy(bytes, &value, sizeof(U));
    out.write(bytes, sizeof(U));
}

template <typename U>
U read_le(std::istream& in, const char* what)
{
    char bytes[sizeof(U)];
    if (!in.read(bytes, sizeof(U))) {
        throw DataError(std::string("truncated input while reading ") + what);
    }
    U value;
    std::memcpy(&value, bytes, sizeof(U));
    return value;
}

inline void read_exact(std::istream& in, char* dst, std::size_t n, const char* what)
{
    if (!in.read(dst, static_cast<std::streamsize>(n))) {
        throw DataError(std::string("truncated input while reading ") + what);
    }
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& file)
{
    char got[4];
    read_exact(in, got, 4, "magic");
    if (std::memcmp(got, magic, 4) != 0) {
        throw DataError(file + ": bad magic, expected " + magic);
    }
}

}  // namespace pen::io
