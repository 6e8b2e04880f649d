// uxrc/scene_io.hpp
//
// Scene library files (YAML):
//
//   scenes:
//     - id: 1
//       label: complex
//       knots: [[1, 28], [4, 31], [10, 33.5], [19, 35], [30, 37], [50, 39.5]]
//     - id: 2
//       ...
//
// Every scene needs `id` (integer, unique) and `knots` (at least two
// [mbps, db] pairs, both strictly increasing, bitrates inside [1, 50]).
// `label` is optional. Unknown keys are rejected. Errors carry line numbers.
#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "uxrc/media.hpp"

namespace uxrc {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& what)
      : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

namespace detail {
inline int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

template <typename T>
T scalar_as(const YAML::Node& n, const std::string& source, const char* what) {
  if (!n.IsScalar()) throw ConfigError(source, line_of(n), std::string(what) + " must be a scalar");
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(source, line_of(n), std::string("invalid value for ") + what + ": '" + n.Scalar() + "'");
  }
}

inline void reject_unknown(const YAML::Node& map, const std::set<std::string>& known, const std::string& source,
                           const std::string& where) {
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!known.count(key)) throw ConfigError(source, line_of(kv.first), "unknown key '" + key + "' in " + where);
  }
}

inline YAML::Node load_yaml(const std::string& text, const std::string& source) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source, e.mark.line + 1, e.msg);
  }
}

inline YAML::Node load_yaml_file(const std::string& path) {
  try {
    return YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw ConfigError(path, 0, "cannot open file");
  } catch (const YAML::ParserException& e) {
    throw ConfigError(path, e.mark.line + 1, e.msg);
  }
}
}  // namespace detail

inline SceneLibrary parse_scene_library(const YAML::Node& root, const std::string& source = "<scenes>") {
  using detail::line_of;
  if (!root.IsMap()) throw ConfigError(source, line_of(root), "top level must be a mapping with key 'scenes'");
  detail::reject_unknown(root, {"scenes"}, source, "scene library");
  const auto list = root["scenes"];
  if (!list || !list.IsSequence() || list.size() == 0)
    throw ConfigError(source, line_of(root), "'scenes' must be a non-empty list");

  std::vector<Scene> scenes;
  std::set<int> ids;
  for (const auto& node : list) {
    if (!node.IsMap()) throw ConfigError(source, line_of(node), "scene entry must be a mapping");
    detail::reject_unknown(node, {"id", "label", "knots"}, source, "scene");
    if (!node["id"]) throw ConfigError(source, line_of(node), "scene is missing 'id'");
    Scene s;
    s.id = detail::scalar_as<int>(node["id"], source, "id");
    if (!ids.insert(s.id).second)
      throw ConfigError(source, line_of(node["id"]), "duplicate scene id " + std::to_string(s.id));
    if (node["label"]) s.label = detail::scalar_as<std::string>(node["label"], source, "label");
    const auto knots = node["knots"];
    if (!knots || !knots.IsSequence())
      throw ConfigError(source, line_of(node), "scene " + std::to_string(s.id) + " needs a 'knots' list");
    std::vector<Knot> ks;
    for (const auto& k : knots) {
      if (!k.IsSequence() || k.size() != 2)
        throw ConfigError(source, line_of(k), "knot must be a [mbps, db] pair");
      ks.push_back({detail::scalar_as<double>(k[0], source, "knot bitrate"),
                    detail::scalar_as<double>(k[1], source, "knot quality")});
    }
    try {
      s.curve = QbCurve(std::move(ks));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(source, line_of(knots), "scene " + std::to_string(s.id) + ": " + e.what());
    }
    scenes.push_back(std::move(s));
  }
  return SceneLibrary(std::move(scenes));
}

inline SceneLibrary load_scene_library(const std::string& path) {
  return parse_scene_library(detail::load_yaml_file(path), path);
}

inline SceneLibrary parse_scene_library_text(const std::string& text, const std::string& source = "<scenes>") {
  return parse_scene_library(detail::load_yaml(text, source), source);
}

inline void emit_scene_library(YAML::Emitter& out, const SceneLibrary& lib) {
  out << YAML::BeginMap << YAML::Key << "scenes" << YAML::Value << YAML::BeginSeq;
  for (const auto& s : lib.scenes()) {
    out << YAML::BeginMap << YAML::Key << "id" << YAML::Value << s.id;
    out << YAML::Key << "label" << YAML::Value << s.label;
    out << YAML::Key << "knots" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (const auto& k : s.curve.knots()) out << YAML::Flow << YAML::BeginSeq << k.mbps << k.db << YAML::EndSeq;
    out << YAML::EndSeq << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;
}

}  // namespace uxrc
