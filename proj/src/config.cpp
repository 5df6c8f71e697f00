#include "seq2seq/config.hpp"

#include <fstream>

namespace seq2seq {

Json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  try {
    return Json::parse(f);
  } catch (const Json::parse_error& e) {
    throw ConfigError("JSON parse error in " + path + ": " + e.what());
  }
}

void save_json_file(const Json& j, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write: " + path);
  f << j.dump(2) << "\n";
  if (!f) throw DataError("write failed: " + path);
}

void check_known_keys(const Json& obj, const std::set<std::string>& allowed,
                      const std::string& context) {
  if (!obj.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (allowed.find(key) == allowed.end())
      throw ConfigError(context + ": unknown key '" + key + "'");
  }
}

}  // namespace seq2seq
