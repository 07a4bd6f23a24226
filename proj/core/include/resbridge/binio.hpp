#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace resbridge {

// Little-endian byte buffer used by the RVB1 / RVBM formats. The build
// targets little-endian hosts; writes are plain memcpy.
class ByteWriter {
 public:
  void u16(uint16_t v) { raw(&v, 2); }
  void u32(uint32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void bytes(const void* p, size_t n) { raw(p, n); }
  void magic(const char (&m)[5]) { raw(m, 4); }

  const std::vector<unsigned char>& buffer() const { return buf_; }
  size_t size() const { return buf_.size(); }

 private:
  void raw(const void* p, size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  ByteReader(const unsigned char* data, size_t size) : p_(data), end_(data + size) {}
  explicit ByteReader(const std::vector<unsigned char>& v) : ByteReader(v.data(), v.size()) {}

  uint16_t u16() { return get<uint16_t>(); }
  uint32_t u32() { return get<uint32_t>(); }
  uint64_t u64() { return get<uint64_t>(); }
  double f64() { return get<double>(); }
  void bytes(void* out, size_t n) {
    need(n);
    std::memcpy(out, p_, n);
    p_ += n;
  }
  std::string magic() {
    char m[5] = {};
    bytes(m, 4);
    return std::string(m, 4);
  }
  size_t remaining() const { return static_cast<size_t>(end_ - p_); }
  const unsigned char* cursor() const { return p_; }

 private:
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, p_, sizeof(T));
    p_ += sizeof(T);
    return v;
  }
  void need(size_t n) const {
    if (remaining() < n) throw std::runtime_error("truncated file");
  }
  const unsigned char* p_;
  const unsigned char* end_;
};

std::vector<unsigned char> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes);

}  // namespace resbridge
