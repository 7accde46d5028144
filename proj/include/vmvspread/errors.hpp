#pragma once

#include <stdexcept>
#include <string>

namespace vmvspread {

// Error taxonomy mirrored by the CLI exit codes:
//   ScenarioError       -> 1 (bad config / scenario file)
//   NumericsError       -> 2 (quadrature failure, arbitrage-band violation, ...)
//   SingularSystemError -> 3 (hedge system not solvable)
// Validation failures are not exceptions; the validate command returns 4.

class ScenarioError : public std::runtime_error {
public:
    explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

class NumericsError : public std::runtime_error {
public:
    explicit NumericsError(const std::string& what) : std::runtime_error(what) {}
};

class SingularSystemError : public std::runtime_error {
public:
    explicit SingularSystemError(const std::string& what) : std::runtime_error(what) {}
};

}
