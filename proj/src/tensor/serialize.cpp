#include "pgf/tensor/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace pgf::io {

namespace {

static_assert(std::endian::native == std::endian::little, "tensor I/O assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw std::runtime_error("truncated tensor header");
  return v;
}

template <typename T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::f32 : DType::f64;
}

template <typename S, typename T>
std::vector<T> read_raw(std::istream& is, std::size_t n) {
  std::vector<S> raw(n);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * sizeof(S)));
  if (!is) throw std::runtime_error("truncated tensor data");
  return std::vector<T>(raw.begin(), raw.end());
}

}  // namespace

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  os.write("TNSR", 4);
  put_u32(os, kTensorFormatVersion);
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw std::runtime_error("tensor dimension too large");
    put_u32(os, static_cast<std::uint32_t>(d));
  }
  put_u32(os, static_cast<std::uint32_t>(dtype_of<T>()));
  os.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  if (!os) throw std::runtime_error("failed writing tensor");
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  if (!is || std::memcmp(magic.data(), "TNSR", 4) != 0) throw std::runtime_error("bad tensor magic");
  const auto version = get_u32(is);
  if (version != kTensorFormatVersion) throw std::runtime_error("unsupported tensor version " + std::to_string(version));
  const auto rank = get_u32(is);
  if (rank == 0 || rank > 8) throw std::runtime_error("bad tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = get_u32(is);
  const auto dtype = static_cast<DType>(get_u32(is));
  const std::size_t n = numel(shape);
  switch (dtype) {
    case DType::f32: return Tensor<T>(shape, read_raw<float, T>(is, n));
    case DType::f64: return Tensor<T>(shape, read_raw<double, T>(is, n));
  }
  throw std::runtime_error("unknown tensor dtype tag");
}

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_tensor<T>(is);
}

template void write_tensor(std::ostream&, const Tensor<float>&);
template void write_tensor(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor(std::istream&);
template Tensor<double> read_tensor(std::istream&);
template void save_tensor(const std::filesystem::path&, const Tensor<float>&);
template void save_tensor(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> load_tensor(const std::filesystem::path&);
template Tensor<double> load_tensor(const std::filesystem::path&);

}  // namespace pgf::io
