#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "strategist/core.hpp"

namespace strategist {

namespace detail {

inline nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Vector vector_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) throw Error(ErrorCode::malformed_document, where + ": expected an array of numbers", where);
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw Error(ErrorCode::malformed_document, where + "[" + std::to_string(i) + "]: expected a number", where);
    }
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

}  // namespace detail

inline nlohmann::json space_to_json(const SearchSpace& space) {
  return {{"lower", detail::vector_to_json(space.lower())}, {"upper", detail::vector_to_json(space.upper())}};
}

inline SearchSpace space_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("lower") || !j.contains("upper")) {
    throw Error(ErrorCode::malformed_document, "space: expected {\"lower\": [...], \"upper\": [...]}", "space");
  }
  return {detail::vector_from_json(j["lower"], "space.lower"), detail::vector_from_json(j["upper"], "space.upper")};
}

inline nlohmann::json trajectory_to_json(const Trajectory& t) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : t.samples()) samples.push_back({{"x", detail::vector_to_json(s.x)}, {"f", s.f}});
  return {{"space", space_to_json(t.space())}, {"samples", std::move(samples)}};
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::malformed_document, "trajectory document must be an object");
  if (!j.contains("space")) throw Error(ErrorCode::malformed_document, "missing \"space\"", "space");
  if (!j.contains("samples") || !j["samples"].is_array()) {
    throw Error(ErrorCode::malformed_document, "missing \"samples\" array", "samples");
  }
  Trajectory t(space_from_json(j["space"]));
  const auto& samples = j["samples"];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string where = "samples[" + std::to_string(i) + "]";
    const auto& rec = samples[i];
    if (!rec.is_object() || !rec.contains("x") || !rec.contains("f") || !rec["f"].is_number()) {
      throw Error(ErrorCode::malformed_document, where + ": expected {\"x\": [...], \"f\": <number>}", where);
    }
    t.append({detail::vector_from_json(rec["x"], where + ".x"), rec["f"].get<double>()});
  }
  return t;
}

inline void save_trajectory(const Trajectory& t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::invalid_argument, "cannot open " + path.string() + " for writing");
  out << trajectory_to_json(t).dump(2) << '\n';
  if (!out) throw Error(ErrorCode::invalid_argument, "failed writing " + path.string());
}

inline Trajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::invalid_argument, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::malformed_document, path.string() + ": " + e.what());
  }
  return trajectory_from_json(j);
}

}  // namespace strategist
