#include "qsub/container.h"

#include <bit>
#include <cstring>
#include <fstream>

#include "qsub/error.h"

namespace qsub {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

std::int64_t StoredArray::elements() const
{
  std::int64_t n = 1;
  for (auto s : shape) {
    n *= s;
  }
  return n;
}

void write_array(std::string const &path, StoredArray const &a)
{
  require(a.dtype == "f64" || a.dtype == "c128", "write_array: unsupported dtype " + a.dtype);
  auto const n = a.elements();
  require(a.dtype == "f64" ? static_cast<std::int64_t>(a.real.size()) == n
                           : static_cast<std::int64_t>(a.complex.size()) == n,
          "write_array: payload size does not match shape");
  nlohmann::json h;
  h["dtype"] = a.dtype;
  h["shape"] = a.shape;
  h["order"] = "row-major";
  h["byte_order"] = "little";
  h["meta"] = a.meta.is_null() ? nlohmann::json::object() : a.meta;
  std::string const hs = h.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw FormatError("cannot open for writing: " + path);
  }
  out.write(kContainerMagic, 8);
  std::uint64_t const len = hs.size();
  out.write(reinterpret_cast<char const *>(&len), 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  if (a.dtype == "f64") {
    out.write(reinterpret_cast<char const *>(a.real.data()), static_cast<std::streamsize>(n * 8));
  } else {
    out.write(reinterpret_cast<char const *>(a.complex.data()), static_cast<std::streamsize>(n * 16));
  }
  if (!out) {
    throw FormatError("write failed: " + path);
  }
}

StoredArray read_array(std::string const &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open: " + path);
  }
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kContainerMagic, 8) != 0) {
    throw FormatError("bad magic in " + path);
  }
  std::uint64_t len = 0;
  if (!in.read(reinterpret_cast<char *>(&len), 8) || len > (1u << 26)) {
    throw FormatError("bad header length in " + path);
  }
  std::string hs(len, '\0');
  if (!in.read(hs.data(), static_cast<std::streamsize>(len))) {
    throw FormatError("truncated header in " + path);
  }
  StoredArray a;
  try {
    auto const h = nlohmann::json::parse(hs);
    a.dtype = h.at("dtype").get<std::string>();
    a.shape = h.at("shape").get<std::vector<std::int64_t>>();
    if (h.value("order", "row-major") != "row-major" || h.value("byte_order", "little") != "little") {
      throw FormatError("unsupported layout in " + path);
    }
    if (h.contains("meta")) {
      a.meta = h["meta"];
    }
  } catch (nlohmann::json::exception const &e) {
    throw FormatError("malformed header in " + path + ": " + e.what());
  }
  for (auto s : a.shape) {
    if (s < 0) {
      throw FormatError("negative extent in " + path);
    }
  }
  auto const n = a.elements();
  if (a.dtype == "f64") {
    a.real.resize(n);
    in.read(reinterpret_cast<char *>(a.real.data()), static_cast<std::streamsize>(n * 8));
  } else if (a.dtype == "c128") {
    a.complex.resize(n);
    in.read(reinterpret_cast<char *>(a.complex.data()), static_cast<std::streamsize>(n * 16));
  } else {
    throw FormatError("unsupported dtype '" + a.dtype + "' in " + path);
  }
  if (!in) {
    throw FormatError("truncated payload in " + path);
  }
  return a;
}

namespace {

size_t data_size(StoredArray const &a) { return a.dtype == "f64" ? a.real.size() : a.complex.size(); }

} // namespace

StoredArray make_real(std::vector<std::int64_t> shape, std::vector<double> data, nlohmann::json meta)
{
  StoredArray a;
  a.dtype = "f64";
  a.shape = std::move(shape);
  a.real = std::move(data);
  a.meta = meta.is_null() ? nlohmann::json::object() : std::move(meta);
  require(static_cast<std::int64_t>(data_size(a)) == a.elements(), "container: payload size does not match shape");
  return a;
}

StoredArray make_complex(std::vector<std::int64_t> shape, std::vector<Cx> data, nlohmann::json meta)
{
  StoredArray a;
  a.dtype = "c128";
  a.shape = std::move(shape);
  a.complex = std::move(data);
  a.meta = meta.is_null() ? nlohmann::json::object() : std::move(meta);
  require(static_cast<std::int64_t>(data_size(a)) == a.elements(), "container: payload size does not match shape");
  return a;
}

StoredArray to_stored(CoefficientImage const &x, nlohmann::json meta)
{
  int const k = x.channels();
  std::vector<Cx> d(static_cast<size_t>(x.dims.size()) * k);
  for (int q = 0; q < x.dims.size(); ++q) {
    for (int c = 0; c < k; ++c) {
      d[static_cast<size_t>(q) * k + c] = x.data(q, c);
    }
  }
  return make_complex({x.dims.ny, x.dims.nz, k}, std::move(d), std::move(meta));
}

CoefficientImage image_from_stored(StoredArray const &a)
{
  if (a.dtype != "c128" || a.shape.size() != 3) {
    throw FormatError("expected a (ny, nz, K) c128 array");
  }
  Dims const dims{static_cast<int>(a.shape[0]), static_cast<int>(a.shape[1])};
  int const k = static_cast<int>(a.shape[2]);
  CoefficientImage x(dims, k);
  for (int q = 0; q < dims.size(); ++q) {
    for (int c = 0; c < k; ++c) {
      x.data(q, c) = a.complex[static_cast<size_t>(q) * k + c];
    }
  }
  return x;
}

StoredArray to_stored(Eigen::MatrixXd const &m, nlohmann::json meta)
{
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> const r = m;
  return make_real({m.rows(), m.cols()}, std::vector<double>(r.data(), r.data() + r.size()), std::move(meta));
}

StoredArray to_stored(Eigen::MatrixXcd const &m, nlohmann::json meta)
{
  Eigen::Matrix<Cx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> const r = m;
  return make_complex({m.rows(), m.cols()}, std::vector<Cx>(r.data(), r.data() + r.size()), std::move(meta));
}

Eigen::MatrixXd real_matrix_from_stored(StoredArray const &a)
{
  if (a.dtype != "f64" || a.shape.size() != 2) {
    throw FormatError("expected a 2-D f64 array");
  }
  return Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> const>(
      a.real.data(), a.shape[0], a.shape[1]);
}

Eigen::MatrixXcd complex_matrix_from_stored(StoredArray const &a)
{
  if (a.dtype != "c128" || a.shape.size() != 2) {
    throw FormatError("expected a 2-D c128 array");
  }
  return Eigen::Map<Eigen::Matrix<Cx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> const>(
      a.complex.data(), a.shape[0], a.shape[1]);
}

StoredArray map_to_stored(RealMap const &m, Dims dims, nlohmann::json meta)
{
  require(static_cast<int>(m.size()) == dims.size(), "map_to_stored: size mismatch");
  return make_real({dims.ny, dims.nz}, m, std::move(meta));
}

RealMap map_from_stored(StoredArray const &a, Dims *dims)
{
  if (a.dtype != "f64" || a.shape.size() != 2) {
    throw FormatError("expected a (ny, nz) f64 map");
  }
  if (dims) {
    *dims = Dims{static_cast<int>(a.shape[0]), static_cast<int>(a.shape[1])};
  }
  return a.real;
}

} // namespace qsub
