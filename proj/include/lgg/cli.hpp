#pragma once

#include <iosfwd>

namespace lgg::harness {

/// Exit codes: 0 success, 1 gradient check failure, 2 configuration or usage
/// error, 3 numeric error, 4 I/O or file format error.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lgg::harness
