#include "seq2seq/common.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace seq2seq {

namespace {
std::mutex warn_mutex;
WarnHandler warn_handler;
}  // namespace

void set_warn_handler(WarnHandler handler) {
  std::lock_guard<std::mutex> lock(warn_mutex);
  warn_handler = std::move(handler);
}

void warn(const std::string& msg) {
  std::lock_guard<std::mutex> lock(warn_mutex);
  if (warn_handler) {
    warn_handler(msg);
  } else {
    std::cerr << "warning: " << msg << std::endl;
  }
}

}  // namespace seq2seq
