#include "tsa/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "tsa/errors.hpp"

namespace tsa {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
  os.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char buf[4];
  if (!is.read(reinterpret_cast<char*>(buf), 4)) {
    throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }
  return static_cast<std::uint32_t>(buf[0]) | (static_cast<std::uint32_t>(buf[1]) << 8) |
         (static_cast<std::uint32_t>(buf[2]) << 16) |
         (static_cast<std::uint32_t>(buf[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

double get_f64(std::istream& is, const char* what) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) {
    throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamMap& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic, 4);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape& shape = tensor.shape();
    put_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) put_u32(os, static_cast<std::uint32_t>(d));
    for (double v : tensor.values()) put_f64(os, v);
  }
  if (!os) throw IoError("write failed for checkpoint: " + path);
}

ParamMap load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError("not a TSA1 checkpoint: " + path);
  }
  const std::uint32_t version = get_u32(is, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = get_u32(is, "tensor count");
  ParamMap params;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = get_u32(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) {
      throw FormatError("checkpoint truncated while reading a tensor name");
    }
    const std::uint32_t rank = get_u32(is, "rank");
    Shape shape(rank);
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape[i] = get_u32(is, "extent");
      n *= shape[i];
    }
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = get_f64(is, name.c_str());
    if (params.count(name)) {
      throw FormatError("duplicate tensor '" + name + "' in checkpoint");
    }
    params.emplace(name, Tensor::from_data(std::move(shape), std::move(values)));
  }
  return params;
}

}  // namespace tsa
