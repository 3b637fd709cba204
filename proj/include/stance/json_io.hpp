#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "stance/error.hpp"
#include "stance/features.hpp"

namespace stance {

inline nlohmann::json layout_to_json(const FeatureLayout& layout) {
  auto arr = nlohmann::json::array();
  for (const auto& e : layout)
    arr.push_back({{"group", std::string(stance::to_string(e.group))}, {"name", e.name}, {"offset", e.offset}, {"width", e.width}});
  return arr;
}

inline FeatureLayout layout_from_json(const nlohmann::json& arr) {
  FeatureLayout layout;
  for (const auto& e : arr) {
    const auto g = e.at("group").get<std::string>();
    auto it = std::find_if(kAllFeatureGroups.begin(), kAllFeatureGroups.end(),
                           [&](FeatureGroup fg) { return stance::to_string(fg) == g; });
    if (it == kAllFeatureGroups.end()) throw Error(ErrorCode::MalformedInput, "unknown feature group " + g);
    layout.push_back({*it, e.at("name").get<std::string>(), e.at("offset").get<std::size_t>(), e.at("width").get<std::size_t>()});
  }
  return layout;
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  auto arr = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    arr.push_back(row);
  }
  return arr;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& arr, Eigen::Index rows, Eigen::Index cols) {
  auto v = arr.get<std::vector<std::vector<double>>>();
  if (static_cast<Eigen::Index>(v.size()) != rows) throw Error(ErrorCode::MalformedInput, "matrix has wrong row count");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(v[static_cast<std::size_t>(r)].size()) != cols)
      throw Error(ErrorCode::MalformedInput, "matrix has wrong column count");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  return m;
}

inline std::vector<double> vector_to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline Eigen::VectorXd vector_from_json(const nlohmann::json& arr, Eigen::Index size) {
  auto v = arr.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != size) throw Error(ErrorCode::MalformedInput, "vector has wrong length");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), size);
}

}  // namespace stance
