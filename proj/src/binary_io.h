#ifndef DIFFCAP_SRC_BINARY_IO_H_
#define DIFFCAP_SRC_BINARY_IO_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffcap::io {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Writes through a temporary so a failed write never leaves a partial file.
inline void write_file(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("cannot move " + tmp + " to " + path);
  }
}

class Writer {
 public:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  template <typename T>
  void floats(const std::vector<T>& v) {
    for (T x : v) {
      const float f = static_cast<float>(x);
      raw(&f, 4);
    }
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  void raw(void* p, std::size_t n) {
    if (n > bytes_.size() - pos_) {
      throw FormatError(what_ + ": truncated at byte " + std::to_string(pos_));
    }
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > bytes_.size() - pos_) throw FormatError(what_ + ": truncated string");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  std::vector<T> floats(std::size_t n) {
    if (n > (bytes_.size() - pos_) / 4) throw FormatError(what_ + ": truncated tensor data");
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      float f;
      raw(&f, 4);
      out[i] = static_cast<T>(f);
    }
    return out;
  }
  bool at_end() const { return pos_ == bytes_.size(); }
  const std::string& what() const { return what_; }

 private:
  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace diffcap::io

#endif  // DIFFCAP_SRC_BINARY_IO_H_
