#include "entvec/npy.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "entvec/errors.hpp"

namespace entvec::npy {

namespace {

constexpr char kMagic[6] = {'\x93', 'N', 'U', 'M', 'P', 'Y'};
constexpr std::size_t kAlign = 64;

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw Error(path.string() + ": " + what);
}

std::string shape_tuple(std::span<const std::size_t> shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << ", ";
    out << shape[i];
  }
  if (shape.size() == 1) out << ',';
  out << ')';
  return out.str();
}

void validate_shape(const std::filesystem::path& path, std::span<const std::size_t> shape,
                    std::size_t count) {
  if (shape.empty() || shape.size() > 2) fail(path, "shape must have rank 1 or 2");
  std::size_t product = 1;
  for (const std::size_t dim : shape) {
    if (dim == 0) fail(path, "shape has an empty dimension");
    product *= dim;
  }
  if (product != count) fail(path, "shape does not match value count");
}

void write_le64(std::ofstream& out, const void* data, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
  } else {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < count; ++i) {
      char swapped[8];
      for (int b = 0; b < 8; ++b) swapped[b] = static_cast<char>(bytes[i * 8 + (7 - b)]);
      out.write(swapped, 8);
    }
  }
}

void write_impl(const std::filesystem::path& path, const char* descr, const void* data,
                std::size_t count, std::span<const std::size_t> shape) {
  validate_shape(path, shape, count);

  std::string dict = "{'descr': '";
  dict += descr;
  dict += "', 'fortran_order': False, 'shape': ";
  dict += shape_tuple(shape);
  dict += ", }";

  const std::size_t base = sizeof(kMagic) + 2 + 2;  // magic, version, header length
  const std::size_t unpadded = base + dict.size() + 1;
  const std::size_t preamble = (unpadded + kAlign - 1) / kAlign * kAlign;
  const std::size_t header_len = preamble - base;
  if (header_len > 0xFFFF) fail(path, "header too large for NPY v1.0");

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out.write(kMagic, sizeof(kMagic));
  out.put('\x01');
  out.put('\x00');
  out.put(static_cast<char>(header_len & 0xFF));
  out.put(static_cast<char>((header_len >> 8) & 0xFF));
  out << dict;
  for (std::size_t i = dict.size() + 1; i < header_len; ++i) out.put(' ');
  out.put('\n');
  write_le64(out, data, count);
  if (!out) fail(path, "write failed");
}

std::string read_exact(std::ifstream& in, std::size_t count) {
  std::string buf(count, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count) buf.resize(static_cast<std::size_t>(in.gcount()));
  return buf;
}

// Minimal parser for the header dict written by this toolkit and by NumPy.
struct Header {
  std::string descr;
  bool fortran_order = false;
  std::vector<std::size_t> shape;
};

std::string find_value(const std::filesystem::path& path, const std::string& dict,
                       const std::string& key) {
  const std::string needle = "'" + key + "':";
  const std::size_t pos = dict.find(needle);
  if (pos == std::string::npos) fail(path, "header missing key " + key);
  std::size_t begin = pos + needle.size();
  while (begin < dict.size() && dict[begin] == ' ') ++begin;
  std::size_t end = begin;
  if (begin < dict.size() && dict[begin] == '(') {
    end = dict.find(')', begin);
    if (end == std::string::npos) fail(path, "unterminated shape tuple");
    ++end;
  } else {
    while (end < dict.size() && dict[end] != ',' && dict[end] != '}') ++end;
  }
  return dict.substr(begin, end - begin);
}

Header parse_header(const std::filesystem::path& path, const std::string& dict) {
  Header header;

  std::string descr = find_value(path, dict, "descr");
  if (descr.size() < 2 || descr.front() != '\'' || descr.back() != '\'')
    fail(path, "malformed descr");
  header.descr = descr.substr(1, descr.size() - 2);

  const std::string order = find_value(path, dict, "fortran_order");
  if (order == "True")
    header.fortran_order = true;
  else if (order == "False")
    header.fortran_order = false;
  else
    fail(path, "malformed fortran_order");

  std::string shape = find_value(path, dict, "shape");
  if (shape.size() < 2 || shape.front() != '(' || shape.back() != ')')
    fail(path, "malformed shape");
  shape = shape.substr(1, shape.size() - 2);
  std::size_t i = 0;
  while (i < shape.size()) {
    while (i < shape.size() && (shape[i] == ' ' || shape[i] == ',')) ++i;
    if (i >= shape.size()) break;
    if (!std::isdigit(static_cast<unsigned char>(shape[i]))) fail(path, "malformed shape");
    std::size_t dim = 0;
    while (i < shape.size() && std::isdigit(static_cast<unsigned char>(shape[i]))) {
      dim = dim * 10 + static_cast<std::size_t>(shape[i] - '0');
      ++i;
    }
    header.shape.push_back(dim);
  }
  return header;
}

}  // namespace

void write(const std::filesystem::path& path, std::span<const std::int64_t> values,
           std::span<const std::size_t> shape) {
  write_impl(path, "<i8", values.data(), values.size(), shape);
}

void write(const std::filesystem::path& path, std::span<const double> values,
           std::span<const std::size_t> shape) {
  write_impl(path, "<f8", values.data(), values.size(), shape);
}

Array read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");

  const std::string magic = read_exact(in, 8);
  if (magic.size() < 8 || std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0)
    fail(path, "bad magic");
  if (magic[6] != '\x01' || magic[7] != '\x00')
    fail(path, "unsupported version (want 1.0)");

  const std::string len_bytes = read_exact(in, 2);
  if (len_bytes.size() != 2) fail(path, "truncated header length");
  const std::size_t header_len = static_cast<unsigned char>(len_bytes[0]) |
                                 (static_cast<std::size_t>(static_cast<unsigned char>(len_bytes[1])) << 8);
  const std::string dict = read_exact(in, header_len);
  if (dict.size() != header_len) fail(path, "truncated header");
  if (dict.empty() || dict.back() != '\n') fail(path, "header does not end with newline");

  const Header header = parse_header(path, dict);
  if (header.fortran_order) fail(path, "fortran_order not supported");
  if (header.descr != "<i8" && header.descr != "<f8")
    fail(path, "unsupported dtype " + header.descr);
  if (header.shape.empty() || header.shape.size() > 2)
    fail(path, "unsupported shape rank " + std::to_string(header.shape.size()));
  for (const std::size_t dim : header.shape)
    if (dim == 0) fail(path, "shape has an empty dimension");

  Array array;
  array.dtype = header.descr == "<i8" ? Dtype::int64 : Dtype::float64;
  array.shape = header.shape;
  const std::size_t count = array.element_count();
  const std::size_t expected_bytes = count * 8;

  std::string data = read_exact(in, expected_bytes);
  if (data.size() != expected_bytes)
    fail(path, "truncated data (" + std::to_string(data.size()) + " bytes, " +
                   std::to_string(expected_bytes) + " expected)");
  if (in.peek() != std::ifstream::traits_type::eof()) fail(path, "trailing bytes after array data");

  if constexpr (std::endian::native != std::endian::little) {
    for (std::size_t i = 0; i < count; ++i)
      for (int b = 0; b < 4; ++b) std::swap(data[i * 8 + b], data[i * 8 + (7 - b)]);
  }
  if (array.dtype == Dtype::int64) {
    array.ints.resize(count);
    std::memcpy(array.ints.data(), data.data(), expected_bytes);
  } else {
    array.reals.resize(count);
    std::memcpy(array.reals.data(), data.data(), expected_bytes);
  }
  return array;
}

}  // namespace entvec::npy
