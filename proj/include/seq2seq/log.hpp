#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "seq2seq/config.hpp"

namespace seq2seq {

// Append-only JSON-lines event stream.
class JsonlLogger {
 public:
  JsonlLogger() = default;
  explicit JsonlLogger(const std::string& path) { open(path); }

  void open(const std::string& path) {
    out_.open(path, std::ios::app);
    if (!out_) throw DataError("cannot open event log: " + path);
  }

  bool is_open() const { return out_.is_open(); }

  void event(const std::string& kind, Json fields = Json::object()) {
    if (!out_.is_open()) return;
    fields["event"] = kind;
    out_ << fields.dump() << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

// Minimal CSV writer; values are formatted by the caller.
class CsvWriter {
 public:
  CsvWriter() = default;

  void open(const std::string& path, const std::vector<std::string>& columns) {
    out_.open(path);
    if (!out_) throw DataError("cannot open csv: " + path);
    write_row(columns);
  }

  void write_row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ",";
      out_ << cells[i];
    }
    out_ << "\n";
    out_.flush();
  }

  bool is_open() const { return out_.is_open(); }

 private:
  std::ofstream out_;
};

}  // namespace seq2seq
