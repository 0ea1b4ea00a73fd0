#include "duedl/tnsr.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "duedl/errors.hpp"

namespace duedl::tnsr {

namespace {

constexpr char kMagic[4] = {'T', 'N', 'S', 'R'};

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

void get_bytes(std::istream& is, char* dst, std::size_t n) {
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw FormatError("TNSR: truncated stream");
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  get_bytes(is, reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

void write_header(std::ostream& os, const Shape& shape, DType dtype, std::size_t count) {
  if (shape_numel(shape) != count) throw ShapeError("TNSR: shape does not match payload length");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  os.put(static_cast<char>(dtype));
  put_u32(os, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) put_u32(os, static_cast<std::uint32_t>(d));
}

}  // namespace

void write(std::ostream& os, const Shape& shape, std::span<const double> values) {
  write_header(os, shape, DType::f64, values.size());
  for (double v : values) put_u64(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw FormatError("TNSR: write failed");
}

void write(std::ostream& os, const Shape& shape, std::span<const std::uint8_t> values) {
  write_header(os, shape, DType::u8, values.size());
  os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size()));
  if (!os) throw FormatError("TNSR: write failed");
}

Blob read(std::istream& is) {
  char magic[4];
  get_bytes(is, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("TNSR: bad magic bytes");
  const std::uint32_t version = get_u32(is);
  if (version != kVersion) throw FormatError("TNSR: unsupported version " + std::to_string(version));
  char dt = 0;
  get_bytes(is, &dt, 1);
  Blob blob;
  if (dt == 0) {
    blob.dtype = DType::f64;
  } else if (dt == 1) {
    blob.dtype = DType::u8;
  } else {
    throw FormatError("TNSR: unknown dtype " + std::to_string(static_cast<int>(dt)));
  }
  const std::uint32_t ndim = get_u32(is);
  if (ndim > 16) throw FormatError("TNSR: implausible rank " + std::to_string(ndim));
  for (std::uint32_t i = 0; i < ndim; ++i) blob.shape.push_back(get_u32(is));
  const std::size_t n = shape_numel(blob.shape);
  if (blob.dtype == DType::f64) {
    std::vector<unsigned char> raw(n * 8);
    get_bytes(is, reinterpret_cast<char*>(raw.data()), raw.size());
    blob.f64.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t v = 0;
      for (int b = 7; b >= 0; --b) v = (v << 8) | raw[i * 8 + static_cast<std::size_t>(b)];
      blob.f64[i] = std::bit_cast<double>(v);
    }
  } else {
    blob.u8.resize(n);
    get_bytes(is, reinterpret_cast<char*>(blob.u8.data()), n);
  }
  return blob;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("TNSR: cannot open " + path.string() + " for writing");
  write(os, t.shape(), t.data());
}

void save_labels(const std::filesystem::path& path, const LabelMap& labels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("TNSR: cannot open " + path.string() + " for writing");
  write(os, Shape{labels.height, labels.width}, std::span<const std::uint8_t>(labels.labels));
}

namespace {

Blob read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("TNSR: missing file " + path.string());
  try {
    return read(is);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace

Tensor load_tensor(const std::filesystem::path& path) {
  Blob blob = read_file(path);
  if (blob.dtype != DType::f64) throw FormatError(path.string() + ": expected f64 payload");
  return Tensor(std::move(blob.shape), std::move(blob.f64));
}

LabelMap load_labels(const std::filesystem::path& path) {
  Blob blob = read_file(path);
  if (blob.dtype != DType::u8 || blob.shape.size() != 2) {
    throw FormatError(path.string() + ": expected a 2-D u8 label map");
  }
  LabelMap m(blob.shape[0], blob.shape[1]);
  m.labels = std::move(blob.u8);
  return m;
}

}  // namespace duedl::tnsr
