#include "sdsf/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sdsf {

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& buf, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
  put_u64(buf, v);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  explicit Reader(const std::string& b) : buf(b) {}
  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("sdtf: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    std::uint64_t v = u64();
    if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

void encode_tensor_body(std::string& buf, const Tensor& t) {
  put_u32(buf, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u64(buf, d);
  for (double v : t.value()) put_f64(buf, v);
}

Tensor decode_tensor_body(Reader& r) {
  const std::uint32_t rank = r.u32();
  if (rank > 8) throw std::runtime_error("sdtf: rank " + std::to_string(rank) + " out of range");
  Shape shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = static_cast<std::size_t>(r.u64());
    if (d == 0 || n > (1ull << 32) / std::max<std::size_t>(d, 1))
      throw std::runtime_error("sdtf: implausible dimension");
    n *= d;
  }
  if (rank == 0) shape = {1};
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = r.f64();
  return Tensor::from_data(std::move(shape), std::move(data));
}

void write_file(const std::string& path, const std::string& buf) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return buf;
}

constexpr char kMagic[4] = {'S', 'D', 'T', 'F'};

}  // namespace

void save_sdtf(const std::string& path, const Tensor& t) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, 1);
  encode_tensor_body(buf, t);
  write_file(path, buf);
}

Tensor load_sdtf(const std::string& path) {
  const std::string buf = read_file(path);
  Reader r(buf);
  if (r.bytes(4) != std::string(kMagic, 4)) throw std::runtime_error("sdtf: bad magic in " + path);
  const std::uint32_t version = r.u32();
  if (version != 1) throw std::runtime_error("sdtf: expected version 1, got " + std::to_string(version));
  Tensor t = decode_tensor_body(r);
  if (r.pos != buf.size()) throw std::runtime_error("sdtf: trailing bytes in " + path);
  return t;
}

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::string& manifest_json) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, 2);
  put_u32(buf, static_cast<std::uint32_t>(tensors.size() + 1));
  auto put_section = [&buf](const std::string& name, std::uint8_t kind, const std::string& payload) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf.append(name);
    buf.push_back(static_cast<char>(kind));
    put_u64(buf, payload.size());
    buf.append(payload);
  };
  put_section("__manifest__", 1, manifest_json);
  for (const auto& [name, t] : tensors) {
    std::string body;
    encode_tensor_body(body, t);
    put_section(name, 0, body);
  }
  write_file(path, buf);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string buf = read_file(path);
  Reader r(buf);
  if (r.bytes(4) != std::string(kMagic, 4)) throw std::runtime_error("sdtf: bad magic in " + path);
  const std::uint32_t version = r.u32();
  if (version != 2)
    throw std::runtime_error("sdtf: expected container version 2, got " + std::to_string(version));
  const std::uint32_t count = r.u32();
  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.bytes(name_len);
    r.need(1);
    const std::uint8_t kind = static_cast<std::uint8_t>(r.buf[r.pos++]);
    const std::uint64_t payload_len = r.u64();
    if (kind == 1) {
      ck.manifest = r.bytes(payload_len);
    } else if (kind == 0) {
      const std::size_t end = r.pos + payload_len;
      ck.tensors.emplace(name, decode_tensor_body(r));
      if (r.pos != end) throw std::runtime_error("sdtf: section length mismatch for " + name);
    } else {
      throw std::runtime_error("sdtf: unknown section kind");
    }
  }
  return ck;
}

}  // namespace sdsf
