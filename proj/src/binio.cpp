#include "lstc/binio.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace lstc {

void BinWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void BinWriter::i64(std::int64_t v) {
    const auto u = static_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

void BinWriter::f64(double v) { i64(static_cast<std::int64_t>(std::bit_cast<std::uint64_t>(v))); }

void BinWriter::bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
}

void BinWriter::str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
}

void BinWriter::to_file(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open for writing: " + path, 0);
    f.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!f) throw FormatError("write failed: " + path, 0);
}

BinReader BinReader::from_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for reading: " + path, 0);
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    return BinReader(std::move(data));
}

void BinReader::need(std::size_t n, const char* what) {
    if (pos_ + n > buf_.size()) {
        throw FormatError(std::string("truncated while reading ") + what, pos_);
    }
}

std::uint32_t BinReader::u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
}

std::int64_t BinReader::i64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return static_cast<std::int64_t>(v);
}

double BinReader::f64(const char* what) {
    return std::bit_cast<double>(static_cast<std::uint64_t>(i64(what)));
}

void BinReader::bytes(void* out, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
}

std::string BinReader::str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
}

void BinReader::expect_magic(const char (&magic)[5]) {
    const std::size_t at = pos_;
    char got[4];
    bytes(got, 4, "magic");
    if (std::memcmp(got, magic, 4) != 0) {
        throw FormatError(std::string("bad magic, expected \"") + magic + "\"", at);
    }
}

void BinReader::expect_end(const char* what) {
    if (pos_ != buf_.size()) {
        throw FormatError(std::string("trailing bytes after ") + what, pos_);
    }
}

} // namespace lstc
