#pragma once

#include <iosfwd>
#include <string>

#include "darlr/nn/param.hpp"

namespace darlr::nn {

// Text fragment format, one block per record:
//
//   block <name> <rows> <cols>
//   <row 0 values>
//   ...
//
// Values are row-major and printed with 17 significant digits, which
// round-trips every double exactly.
void write_fragment(std::ostream& os, const ConstParamRefs& blocks);

// Reads blocks until end of stream or a line that is not a block header, and
// assigns them by name. Every target must be present with a matching shape.
void read_fragment(std::istream& is, const ParamRefs& targets);

void write_matrix(std::ostream& os, const std::string& name, const Mat& m);
Mat read_matrix(std::istream& is, const std::string& name);

std::string format_double(double v);
double parse_double(const std::string& s);

}  // namespace darlr::nn
