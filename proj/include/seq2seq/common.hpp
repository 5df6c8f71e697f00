#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace seq2seq {

// Error taxonomy mirrored by the CLI exit codes: config=3, data=4, runtime=5.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-fatal diagnostics (constant-volume normalization, degenerate metric
// normalization, ...). Tests swap the handler to capture messages.
using WarnHandler = std::function<void(const std::string&)>;
void set_warn_handler(WarnHandler handler);
void warn(const std::string& msg);

}  // namespace seq2seq
