#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace trait_probe {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 success, 1 validation/runtime error, 2 usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace trait_probe
