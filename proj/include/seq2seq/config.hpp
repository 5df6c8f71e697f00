#pragma once

#include <json.hpp>
#include <set>
#include <string>

#include "seq2seq/common.hpp"

namespace seq2seq {

using Json = nlohmann::json;

Json load_json_file(const std::string& path);
void save_json_file(const Json& j, const std::string& path);

// Unknown keys are config errors; a typoed option must not silently fall back
// to its default.
void check_known_keys(const Json& obj, const std::set<std::string>& allowed,
                      const std::string& context);

template <typename T>
T get_or(const Json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

template <typename T>
T require(const Json& obj, const std::string& key, const std::string& context) {
  if (!obj.contains(key)) throw ConfigError(context + ": missing required key '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(context + ": bad value for '" + key + "': " + e.what());
  }
}

}  // namespace seq2seq
