#pragma once

#include <filesystem>
#include <iosfwd>

#include "hoi/tensor.hpp"

namespace hoi {

// HOIT tensor file format, bit-exact:
//   magic "HOIT" | u8 version = 1 | u8 dtype (0 = f32, 1 = f64) | u8 rank |
//   rank x u32 little-endian extents | payload scalars, little-endian,
//   row-major. No padding, no checksum.

inline constexpr int kTensorFormatVersion = 1;

template <typename T>
void save_tensor(std::ostream& out, const Tensor<T>& t);

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t);

template <typename T>
Tensor<T> load_tensor(std::istream& in, const std::string& origin);

template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path);

/// Dtype stored in a HOIT file without reading the payload.
int peek_tensor_dtype(const std::filesystem::path& path);

}  // namespace hoi
