#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "types.h"

namespace qsub {

// Binary array file: 8-byte magic "QSUB0001", little-endian u64 header
// length, a JSON header {dtype, shape, order, byte_order, meta}, then the raw
// little-endian payload in row-major order.
inline constexpr char kContainerMagic[] = "QSUB0001";

struct StoredArray
{
  std::string dtype; // "f64" or "c128"
  std::vector<std::int64_t> shape;
  std::vector<double> real;
  std::vector<Cx> complex;
  nlohmann::json meta = nlohmann::json::object();

  std::int64_t elements() const;
};

void write_array(std::string const &path, StoredArray const &a);
StoredArray read_array(std::string const &path);

StoredArray make_real(std::vector<std::int64_t> shape, std::vector<double> data, nlohmann::json meta = {});
StoredArray make_complex(std::vector<std::int64_t> shape, std::vector<Cx> data, nlohmann::json meta = {});

// CoefficientImage <-> (ny, nz, K) c128.
StoredArray to_stored(CoefficientImage const &x, nlohmann::json meta = {});
CoefficientImage image_from_stored(StoredArray const &a);

// Eigen matrices as 2-D row-major arrays.
StoredArray to_stored(Eigen::MatrixXd const &m, nlohmann::json meta = {});
StoredArray to_stored(Eigen::MatrixXcd const &m, nlohmann::json meta = {});
Eigen::MatrixXd real_matrix_from_stored(StoredArray const &a);
Eigen::MatrixXcd complex_matrix_from_stored(StoredArray const &a);

// (ny, nz) f64 map.
StoredArray map_to_stored(RealMap const &m, Dims dims, nlohmann::json meta = {});
RealMap map_from_stored(StoredArray const &a, Dims *dims = nullptr);

} // namespace qsub
