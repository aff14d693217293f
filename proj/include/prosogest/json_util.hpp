// prosogest/json_util.hpp
//
// Eigen <-> JSON array conversions shared by the model files.

#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "prosogest/error.hpp"

namespace prosogest::detail {

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j, std::size_t dim, const char* what) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != dim) throw Error(ErrorCode::InvalidArgument, std::string(what) + " has wrong length");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, std::size_t rows_n, std::size_t cols_n,
                                        const char* what) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.size() != rows_n) throw Error(ErrorCode::InvalidArgument, std::string(what) + " has wrong shape");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows_n), static_cast<Eigen::Index>(cols_n));
  for (std::size_t r = 0; r < rows_n; ++r) {
    if (rows[r].size() != cols_n) throw Error(ErrorCode::InvalidArgument, std::string(what) + " has wrong shape");
    for (std::size_t c = 0; c < cols_n; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, std::size_t dim, const char* what) {
  return matrix_from_json(j, dim, dim, what);
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline std::vector<std::vector<double>> to_rows(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) out[static_cast<std::size_t>(r)] = to_std(m.row(r).transpose());
  return out;
}

}  // namespace prosogest::detail
