#pragma once

// "TNSR v1" container:
//   magic 'T','N','S','R' | u32 LE version (=1) | u8 dtype (0 = f64, 1 = u8)
//   | u32 LE ndim | u32 LE extents[ndim] | row-major payload (f64 LE or u8)

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <variant>
#include <vector>

#include "duedl/label_map.hpp"
#include "duedl/tensor.hpp"

namespace duedl::tnsr {

inline constexpr std::uint32_t kVersion = 1;

enum class DType : std::uint8_t { f64 = 0, u8 = 1 };

struct Blob {
  Shape shape;
  DType dtype = DType::f64;
  std::vector<double> f64;
  std::vector<std::uint8_t> u8;
};

void write(std::ostream& os, const Shape& shape, std::span<const double> values);
void write(std::ostream& os, const Shape& shape, std::span<const std::uint8_t> values);
// Throws FormatError on bad magic, unknown version/dtype or truncation.
Blob read(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
void save_labels(const std::filesystem::path& path, const LabelMap& labels);
Tensor load_tensor(const std::filesystem::path& path);
LabelMap load_labels(const std::filesystem::path& path);

}  // namespace duedl::tnsr
