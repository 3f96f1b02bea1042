#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "surfnet/error.hpp"
#include "surfnet/la.hpp"

namespace surfnet {

static_assert(std::endian::native == std::endian::little, "TNSR IO assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'T', 'N', 'S', 'R'};
constexpr std::uint32_t kMaxRank = 16;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw ParseError("tensor file '" + path.string() + "' is truncated");
  }
  return v;
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  std::uint64_t count = 1;
  for (auto d : tensor.dims) count *= d;
  if (count != tensor.data.size()) {
    throw DimensionMismatch("tensor dims describe " + std::to_string(count) + " values, payload has " +
                            std::to_string(tensor.data.size()));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write tensor file '" + path.string() + "'");
  out.write(kMagic, 4);
  put(out, static_cast<std::uint32_t>(tensor.dims.size()));
  for (auto d : tensor.dims) put(out, d);
  out.write(reinterpret_cast<const char*>(tensor.data.data()),
            static_cast<std::streamsize>(tensor.data.size() * sizeof(double)));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tensor file '" + path.string() + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError("'" + path.string() + "' is not a TNSR file");
  }
  const auto rank = get<std::uint32_t>(in, path);
  if (rank > kMaxRank) throw ParseError("tensor rank " + std::to_string(rank) + " is implausible");
  Tensor t;
  std::uint64_t count = 1;
  for (std::uint32_t k = 0; k < rank; ++k) {
    t.dims.push_back(get<std::uint64_t>(in, path));
    count *= t.dims.back();
  }
  const auto here = in.tellg();
  in.seekg(0, std::ios::end);
  const auto remaining = static_cast<std::uint64_t>(in.tellg() - here);
  in.seekg(here);
  if (remaining != count * sizeof(double)) {
    throw ParseError("tensor file '" + path.string() + "' payload size does not match its dims");
  }
  t.data.resize(count);
  in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(count * sizeof(double)));
  return t;
}

void write_tensor(const std::filesystem::path& path, const DenseMatrix& m) {
  write_tensor(path, Tensor{{m.rows(), m.cols()}, m.storage()});
}

DenseMatrix read_matrix(const std::filesystem::path& path) {
  Tensor t = read_tensor(path);
  if (t.dims.size() == 1) return DenseMatrix(t.dims[0], 1, std::move(t.data));
  if (t.dims.size() == 2) return DenseMatrix(t.dims[0], t.dims[1], std::move(t.data));
  throw ShapeMismatch("expected a rank 1 or 2 tensor in '" + path.string() + "', got rank " +
                      std::to_string(t.dims.size()));
}

}  // namespace surfnet
