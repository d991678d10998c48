#ifndef VGRID_BYTES_HPP
#define VGRID_BYTES_HPP

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vgrid {

using Bytes = std::vector<std::uint8_t>;

class ByteError : public std::runtime_error {
  public:
    explicit ByteError(const std::string& what) : std::runtime_error(what) {}
};

// Canonical wire layout: fields in declaration order, big-endian integers,
// length-prefixed collections sorted ascending. Both the auth tags and the
// golden traces depend on this being byte-stable.
class ByteWriter {
  public:
    void u8(std::uint8_t v) { out_.push_back(v); }

    void u32(std::uint32_t v) {
        for (int shift = 24; shift >= 0; shift -= 8)
            out_.push_back(static_cast<std::uint8_t>(v >> shift));
    }

    void u64(std::uint64_t v) {
        for (int shift = 56; shift >= 0; shift -= 8)
            out_.push_back(static_cast<std::uint8_t>(v >> shift));
    }

    void raw(std::span<const std::uint8_t> bytes) {
        out_.insert(out_.end(), bytes.begin(), bytes.end());
    }

    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        for (char c : s) out_.push_back(static_cast<std::uint8_t>(c));
    }

    const Bytes& bytes() const { return out_; }
    Bytes take() { return std::move(out_); }

  private:
    Bytes out_;
};

class ByteReader {
  public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | data_[pos_++];
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v = (v << 8) | data_[pos_++];
        return v;
    }

    std::string str() {
        std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    void raw(std::span<std::uint8_t> dst) {
        need(dst.size());
        for (auto& b : dst) b = data_[pos_++];
    }

    bool exhausted() const { return pos_ == data_.size(); }
    std::size_t position() const { return pos_; }

  private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw ByteError("truncated input");
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_{0};
};

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xf]);
    }
    return s;
}

}  // namespace vgrid

#endif
