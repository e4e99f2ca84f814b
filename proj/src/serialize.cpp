// SPDX-License-Identifier: Apache-2.0

#include "risopt/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace risopt::serialize {

namespace {

std::string fmt_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void fail(const std::string& what) {
  throw std::runtime_error("serialize: " + what);
}

}  // namespace

void write_matrix(std::ostream& os, const CMat& m) {
  os << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << fmt_full(m(i, j).real()) << ',' << fmt_full(m(i, j).imag());
    }
    os << '\n';
  }
}

CMat read_matrix(std::istream& is) {
  Eigen::Index rows = 0, cols = 0;
  if (!(is >> rows >> cols)) fail("missing dims header");
  if (rows < 0 || cols < 0) fail("negative dims");
  CMat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      std::string tok;
      if (!(is >> tok)) fail("truncated matrix body");
      const auto comma = tok.find(',');
      if (comma == std::string::npos) fail("entry missing comma: " + tok);
      m(i, j) = Complex(std::stod(tok.substr(0, comma)), std::stod(tok.substr(comma + 1)));
    }
  }
  return m;
}

void write_real_matrix(std::ostream& os, const RMat& m) {
  os << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << fmt_full(m(i, j));
    }
    os << '\n';
  }
}

RMat read_real_matrix(std::istream& is) {
  Eigen::Index rows = 0, cols = 0;
  if (!(is >> rows >> cols)) fail("missing dims header");
  RMat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      if (!(is >> m(i, j))) fail("truncated matrix body");
  return m;
}

std::string to_string(const CMat& m) {
  std::ostringstream os;
  write_matrix(os, m);
  return os.str();
}

void save_matrix(const std::string& path, const CMat& m) {
  std::ofstream os(path);
  if (!os) fail("cannot open for write: " + path);
  write_matrix(os, m);
  if (!os) fail("write failed: " + path);
}

CMat load_matrix(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail("cannot open for read: " + path);
  return read_matrix(is);
}

}  // namespace risopt::serialize
