#pragma once

// Self-describing model container.
//
// Layout (all integers little-endian):
//   "TGRASPMF"                         8-byte magic
//   u32 version                        currently 1
//   str kind                           e.g. "generator", "adapter", "gmm"
//   u32 attribute count, then (str key, str value) pairs
//   u32 tensor count, then per tensor:
//     str name, u32 rank, u64 dims[rank], f64 data[prod(dims)] row-major
// where str is a u32 byte length followed by the bytes.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "tgrasp/errors.hpp"
#include "tgrasp/matrix.hpp"

namespace tgrasp {

inline constexpr char kArchiveMagic[8] = {'T', 'G', 'R', 'A', 'S', 'P', 'M', 'F'};
inline constexpr std::uint32_t kArchiveVersion = 1;

struct Tensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  bool operator==(const Tensor&) const = default;
};

class ModelArchive {
 public:
  ModelArchive() = default;
  explicit ModelArchive(std::string kind) : kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

  void set_attr(const std::string& key, const std::string& value) {
    for (auto& [k, v] : attrs_) {
      if (k == key) {
        v = value;
        return;
      }
    }
    attrs_.emplace_back(key, value);
  }
  void set_attr(const std::string& key, std::int64_t value) { set_attr(key, std::to_string(value)); }

  const std::string& attr(const std::string& key) const {
    for (const auto& [k, v] : attrs_)
      if (k == key) return v;
    throw ModelError("model file missing attribute '" + key + "'");
  }
  std::int64_t attr_int(const std::string& key) const {
    try {
      return std::stoll(attr(key));
    } catch (const std::logic_error&) {
      throw ModelError("attribute '" + key + "' is not an integer");
    }
  }

  void add(const std::string& name, const Matrix& m) {
    tensors_.push_back({name, {m.rows(), m.cols()}, m.data()});
  }
  void add(const std::string& name, const std::vector<double>& v) {
    tensors_.push_back({name, {v.size()}, v});
  }

  const Tensor& tensor(const std::string& name) const {
    for (const auto& t : tensors_)
      if (t.name == name) return t;
    throw ModelError("model file missing tensor '" + name + "'");
  }
  Matrix matrix(const std::string& name) const {
    const auto& t = tensor(name);
    if (t.dims.size() != 2) throw ModelError("tensor '" + name + "' is not rank 2");
    return Matrix(t.dims[0], t.dims[1], t.data);
  }
  Matrix matrix(const std::string& name, std::size_t rows, std::size_t cols) const {
    Matrix m = matrix(name);
    if (m.rows() != rows || m.cols() != cols) {
      throw ModelError("tensor '" + name + "' is " + m.shape_string() + ", expected " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    }
    return m;
  }
  std::vector<double> vector(const std::string& name) const {
    const auto& t = tensor(name);
    if (t.dims.size() != 1) throw ModelError("tensor '" + name + "' is not rank 1");
    return t.data;
  }

  const std::vector<Tensor>& tensors() const noexcept { return tensors_; }

  std::vector<std::uint8_t> serialize() const {
    std::vector<std::uint8_t> out(std::begin(kArchiveMagic), std::end(kArchiveMagic));
    put_u32(out, kArchiveVersion);
    put_str(out, kind_);
    put_u32(out, static_cast<std::uint32_t>(attrs_.size()));
    for (const auto& [k, v] : attrs_) {
      put_str(out, k);
      put_str(out, v);
    }
    put_u32(out, static_cast<std::uint32_t>(tensors_.size()));
    for (const auto& t : tensors_) {
      put_str(out, t.name);
      put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
      for (auto d : t.dims) put_u64(out, d);
      for (double v : t.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
  }

  static ModelArchive deserialize(const std::vector<std::uint8_t>& bytes) {
    Reader r{bytes, 0};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kArchiveMagic, 8) != 0) throw ModelError("not a model file (bad magic)");
    r.pos = 8;
    const auto version = r.u32();
    if (version != kArchiveVersion) throw ModelError("unsupported model file version " + std::to_string(version));
    ModelArchive a(r.str());
    const auto n_attrs = r.u32();
    for (std::uint32_t i = 0; i < n_attrs; ++i) {
      auto k = r.str();
      auto v = r.str();
      a.attrs_.emplace_back(std::move(k), std::move(v));
    }
    const auto n_tensors = r.u32();
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
      Tensor t;
      t.name = r.str();
      const auto rank = r.u32();
      if (rank > 8) throw ModelError("tensor '" + t.name + "' has implausible rank");
      std::uint64_t count = 1;
      for (std::uint32_t d = 0; d < rank; ++d) {
        t.dims.push_back(r.u64());
        count *= t.dims.back();
      }
      if (count > (bytes.size() - r.pos) / 8) throw ModelError("model file truncated in tensor '" + t.name + "'");
      t.data.resize(count);
      for (auto& v : t.data) v = std::bit_cast<double>(r.u64());
      a.tensors_.push_back(std::move(t));
    }
    if (r.pos != bytes.size()) throw ModelError("trailing bytes in model file");
    return a;
  }

  void save(const std::string& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ModelError("cannot write model file '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ModelError("short write to model file '" + path + "'");
  }

  static ModelArchive load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelError("cannot open model file '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
  }

  bool operator==(const ModelArchive&) const = default;

 private:
  struct Reader {
    const std::vector<std::uint8_t>& b;
    std::size_t pos;

    void need(std::size_t n) const {
      if (b.size() - pos < n) throw ModelError("model file truncated at byte " + std::to_string(pos));
    }
    std::uint32_t u32() {
      need(4);
      std::uint32_t v = 0;
      for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[pos + i]) << (8 * i);
      pos += 4;
      return v;
    }
    std::uint64_t u64() {
      need(8);
      std::uint64_t v = 0;
      for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[pos + i]) << (8 * i);
      pos += 8;
      return v;
    }
    std::string str() {
      const auto n = u32();
      need(n);
      std::string s(reinterpret_cast<const char*>(b.data() + pos), n);
      pos += n;
      return s;
    }
  };

  static void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  static void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  static void put_str(std::vector<std::uint8_t>& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }

  std::string kind_;
  std::vector<std::pair<std::string, std::string>> attrs_;
  std::vector<Tensor> tensors_;
};

}  // namespace tgrasp
