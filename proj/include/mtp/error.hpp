#pragma once

#include <stdexcept>

namespace mtp {

// Library code signals failures with these types; the CLI maps each to a
// distinct exit code. ContractError covers violated preconditions and bad
// arguments, SchemaError covers structurally invalid files, IoError covers
// missing/unreadable paths, DivergenceError covers non-finite training loss.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace mtp
