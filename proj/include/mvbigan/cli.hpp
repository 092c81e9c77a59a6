#pragma once

#include <iosfwd>

namespace mvbigan {

// Exit codes: 0 ok, 1 usage or config error, 2 data error, 3 numeric failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mvbigan
