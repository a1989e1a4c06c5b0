#pragma once

#include <charconv>
#include <fstream>
#include <string>
#include <vector>

#include "umif/common.hpp"

namespace umif {

// Shortest round-trip decimal form, locale-independent.
inline std::string fmt_g(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// RFC-4180 output: comma separated, CRLF line ends, header row first. Fields
// here are always plain numerics/identifiers, so no quoting is needed.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header, bool append = false)
      : os_(path, append ? std::ios::app : std::ios::trunc) {
    if (!os_) throw ParseError("cannot open CSV for writing: " + path);
    if (!append) row(header);
  }

  void row(const std::vector<std::string>& fields) {
    for (size_t i = 0; i < fields.size(); ++i) {
      if (i) os_ << ',';
      os_ << fields[i];
    }
    os_ << "\r\n";
  }

  void flush() { os_.flush(); }

 private:
  std::ofstream os_;
};

}  // namespace umif
