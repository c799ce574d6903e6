#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lstc/errors.hpp"

namespace lstc {

// Little-endian binary writer backed by a byte buffer.
class BinWriter {
  public:
    void u32(std::uint32_t v);
    void i64(std::int64_t v);
    void f64(double v);
    void bytes(const void* p, std::size_t n);
    void str(const std::string& s); // u32 length prefix + raw bytes

    const std::vector<std::uint8_t>& buffer() const { return buf_; }
    void to_file(const std::string& path) const;

  private:
    std::vector<std::uint8_t> buf_;
};

// Little-endian binary reader; every failure is a FormatError carrying the
// byte offset at which the read began.
class BinReader {
  public:
    explicit BinReader(std::vector<std::uint8_t> data) : buf_(std::move(data)) {}
    static BinReader from_file(const std::string& path);

    std::uint32_t u32(const char* what);
    std::int64_t i64(const char* what);
    double f64(const char* what);
    void bytes(void* out, std::size_t n, const char* what);
    std::string str(const char* what);
    void expect_magic(const char (&magic)[5]);
    void expect_end(const char* what);

    std::size_t offset() const { return pos_; }

  private:
    void need(std::size_t n, const char* what);

    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

} // namespace lstc
