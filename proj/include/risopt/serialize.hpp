// SPDX-License-Identifier: Apache-2.0
//
// Plain-text matrix serialization so channel realizations and parameter
// snapshots can be replayed across implementations. Per matrix: a dims
// header line "rows cols", then one line per row of comma-joined "re,im"
// entries separated by spaces. Values are written at full precision.

#ifndef RISOPT_SERIALIZE_HPP
#define RISOPT_SERIALIZE_HPP

#include <iosfwd>
#include <string>

#include "risopt/common.hpp"

namespace risopt::serialize {

void write_matrix(std::ostream& os, const CMat& m);
CMat read_matrix(std::istream& is);

void write_real_matrix(std::ostream& os, const RMat& m);
RMat read_real_matrix(std::istream& is);

std::string to_string(const CMat& m);

void save_matrix(const std::string& path, const CMat& m);
CMat load_matrix(const std::string& path);

}  // namespace risopt::serialize

#endif  // RISOPT_SERIALIZE_HPP
