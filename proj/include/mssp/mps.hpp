#pragma once

#include <string>

#include "mssp/lp.hpp"

namespace mssp {

/// Free-format MPS export of an LpProblem for external cross-checking.
std::string to_mps(const LpProblem& problem, const std::string& name = "MSSP");

void write_mps(const LpProblem& problem, const std::string& path, const std::string& name = "MSSP");

}  // namespace mssp
