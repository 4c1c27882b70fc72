#pragma once

#include <filesystem>
#include <variant>

#include <json.hpp>

#include "warpcore/xform.hpp"

namespace warpcore {

/// Contents of a transform file: a forward homography or a functional map.
using TransformSpec = std::variant<Homography, FunctionalSpec>;

/// {"matrix": [[a,b,c],[d,e,f],[g,h,i]]} or
/// {"kind": "sine"|"barrel", "params": {...}, "scale": s}.
/// Throws InvalidParams on schema violations, Degenerate on singular matrices.
TransformSpec transform_from_json(const nlohmann::json& j);
nlohmann::json transform_to_json(const TransformSpec& spec);

/// Throws IoError when the file cannot be read or is not JSON.
TransformSpec load_transform(const std::filesystem::path& path);
void save_transform(const TransformSpec& spec, const std::filesystem::path& path);

nlohmann::json matrix_to_json(const Mat3& m);
Mat3 matrix_from_json(const nlohmann::json& j);

nlohmann::json params_to_json(const TransformParams& p);
TransformParams params_from_json(const nlohmann::json& j);

}  // namespace warpcore
