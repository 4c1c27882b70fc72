#include "warpcore/transform_io.hpp"

#include <fstream>
#include <sstream>

#include "warpcore/error.hpp"
#include "warpcore/fileutil.hpp"

namespace warpcore {

nlohmann::json matrix_to_json(const Mat3& m) {
  return nlohmann::json::array({{m[0], m[1], m[2]}, {m[3], m[4], m[5]}, {m[6], m[7], m[8]}});
}

Mat3 matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorKind::kInvalidParams, "matrix must be a 3x3 array");
  }
  Mat3 m{};
  for (int r = 0; r < 3; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || row.size() != 3) {
      throw Error(ErrorKind::kInvalidParams, "matrix rows must have 3 entries");
    }
    for (int c = 0; c < 3; ++c) {
      if (!row[c].is_number()) throw Error(ErrorKind::kInvalidParams, "matrix entry not a number");
      m[r * 3 + c] = row[c].get<double>();
    }
  }
  return m;
}

TransformSpec transform_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kInvalidParams, "transform must be an object");
  const std::string kind = j.value("kind", std::string("homography"));
  if (kind == "homography") {
    if (!j.contains("matrix")) throw Error(ErrorKind::kInvalidParams, "missing \"matrix\"");
    return Homography::from_matrix(matrix_from_json(j.at("matrix")));
  }

  FunctionalSpec spec;
  const nlohmann::json params = j.value("params", nlohmann::json::object());
  auto number = [&](const char* key, double fallback) {
    if (!params.contains(key)) return fallback;
    if (!params[key].is_number()) {
      throw Error(ErrorKind::kInvalidParams, std::string("param not a number: ") + key);
    }
    return params[key].get<double>();
  };
  if (j.contains("scale") && !j["scale"].is_number()) {
    throw Error(ErrorKind::kInvalidParams, "\"scale\" must be a number");
  }
  spec.scale = j.value("scale", 1.0);
  if (kind == "sine") {
    spec.kind = FunctionalKind::kSine;
    spec.amplitude = number("amplitude", 0.0);
    spec.wavelength = number("wavelength", 32.0);
  } else if (kind == "barrel") {
    spec.kind = FunctionalKind::kBarrel;
    spec.k1 = number("k1", 0.0);
    spec.k2 = number("k2", 0.0);
    if (params.contains("cx") || params.contains("cy")) {
      spec.center = Vec2{number("cx", 0.0), number("cy", 0.0)};
    }
    if (params.contains("radius")) spec.norm_radius = number("radius", 1.0);
  } else {
    throw Error(ErrorKind::kInvalidParams, "unknown transform kind: " + kind);
  }
  return spec;
}

nlohmann::json transform_to_json(const TransformSpec& spec) {
  if (const auto* h = std::get_if<Homography>(&spec)) {
    return {{"matrix", matrix_to_json(h->matrix())}};
  }
  const auto& f = std::get<FunctionalSpec>(spec);
  nlohmann::json params = nlohmann::json::object();
  if (f.kind == FunctionalKind::kSine) {
    params["amplitude"] = f.amplitude;
    params["wavelength"] = f.wavelength;
  } else {
    params["k1"] = f.k1;
    params["k2"] = f.k2;
    if (f.center) {
      params["cx"] = f.center->x;
      params["cy"] = f.center->y;
    }
    if (f.norm_radius) params["radius"] = *f.norm_radius;
  }
  return {{"kind", f.kind == FunctionalKind::kSine ? "sine" : "barrel"},
          {"params", params},
          {"scale", f.scale}};
}

TransformSpec load_transform(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kIoError, path.string() + ": " + e.what());
  }
  return transform_from_json(j);
}

void save_transform(const TransformSpec& spec, const std::filesystem::path& path) {
  write_file_atomic(path, transform_to_json(spec).dump(2) + "\n");
}

nlohmann::json params_to_json(const TransformParams& p) {
  return {{"hx", p.hx}, {"hy", p.hy}, {"theta", p.theta}, {"sx", p.sx}, {"sy", p.sy},
          {"tx", p.tx}, {"ty", p.ty}, {"px", p.px},       {"py", p.py}};
}

TransformParams params_from_json(const nlohmann::json& j) {
  TransformParams p;
  try {
    p.hx = j.at("hx").get<double>();
    p.hy = j.at("hy").get<double>();
    p.theta = j.at("theta").get<double>();
    p.sx = j.at("sx").get<double>();
    p.sy = j.at("sy").get<double>();
    p.tx = j.at("tx").get<double>();
    p.ty = j.at("ty").get<double>();
    p.px = j.at("px").get<double>();
    p.py = j.at("py").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInvalidParams, std::string("transform params: ") + e.what());
  }
  return p;
}

}  // namespace warpcore
