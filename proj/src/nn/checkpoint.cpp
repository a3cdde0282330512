#include "darlr/nn/checkpoint.hpp"

#include <charconv>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "darlr/error.hpp"

namespace darlr::nn {

std::string format_double(double v) {
  char buf[40];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  if (ec != std::errc()) throw Error("checkpoint: cannot format value");
  return std::string(buf, end);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error("checkpoint: malformed number '" + s + "'");
  }
  return v;
}

namespace {

void write_block(std::ostream& os, const std::string& name, const Mat& m) {
  os << "block " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c) os << ' ';
      os << format_double(m(r, c));
    }
    os << '\n';
  }
}

bool read_block(std::istream& is, std::string& name, Mat& m) {
  std::string tag;
  const auto pos = is.tellg();
  if (!(is >> tag)) return false;
  if (tag != "block") {
    is.clear();
    is.seekg(pos);
    return false;
  }
  Index rows = 0, cols = 0;
  if (!(is >> name >> rows >> cols) || rows < 0 || cols < 0) {
    throw Error("checkpoint: malformed block header");
  }
  m.resize(rows, cols);
  std::string token;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      if (!(is >> token)) throw Error("checkpoint: truncated block " + name);
      m(r, c) = parse_double(token);
    }
  }
  return true;
}

}  // namespace

void write_fragment(std::ostream& os, const ConstParamRefs& blocks) {
  for (const ParamBlock* b : blocks) write_block(os, b->name, b->value);
}

void read_fragment(std::istream& is, const ParamRefs& targets) {
  std::map<std::string, Mat> found;
  std::string name;
  Mat m;
  while (read_block(is, name, m)) found[name] = m;
  for (ParamBlock* b : targets) {
    auto it = found.find(b->name);
    if (it == found.end()) throw Error("checkpoint: missing block " + b->name);
    if (it->second.rows() != b->rows() || it->second.cols() != b->cols()) {
      throw Error("checkpoint: shape mismatch for block " + b->name);
    }
    b->value = it->second;
  }
}

void write_matrix(std::ostream& os, const std::string& name, const Mat& m) {
  write_block(os, name, m);
}

Mat read_matrix(std::istream& is, const std::string& name) {
  std::string found;
  Mat m;
  if (!read_block(is, found, m) || found != name) {
    throw Error("checkpoint: expected matrix block " + name);
  }
  return m;
}

}  // namespace darlr::nn
