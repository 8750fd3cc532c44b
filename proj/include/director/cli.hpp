#pragma once

#include <string>
#include <vector>

namespace director::cli {

// Exit codes: 0 success, 1 diagnostics/check failure, 2 usage error.
int run(const std::vector<std::string>& args);

}  // namespace director::cli
