#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "pgf/tensor/tensor.hpp"

// Binary tensor format, little-endian:
//   "TNSR" | version u32 | rank u32 | dims u32[rank] | dtype u32 | raw data
// dtype 1 = float32, 2 = float64.
namespace pgf::io {

inline constexpr std::uint32_t kTensorFormatVersion = 1;
enum class DType : std::uint32_t { f32 = 1, f64 = 2 };

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t);
// Converts to T when the stored dtype differs.
template <typename T>
Tensor<T> read_tensor(std::istream& is);

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t);
template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path);

}  // namespace pgf::io
