#pragma once

#include <iosfwd>

namespace recurnet::cli {

// 0 success, 1 usage or validation error, 2 runtime failure.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace recurnet::cli
