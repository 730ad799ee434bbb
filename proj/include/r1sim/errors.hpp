#pragma once

#include <stdexcept>
#include <string>

namespace r1sim {

// Malformed input file (bad JSON, wrong shape, trailing garbage).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Well-formed input that violates a domain invariant.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Internal consistency failure (e.g. stored rollout log-probs do not replay).
struct ConsistencyError : std::runtime_error {
  explicit ConsistencyError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace r1sim
