#pragma once

#include <stdexcept>

namespace soldernet {

// Error kinds shared by every module.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Binary answer to "is this joint defective?".
enum class Label : int { non_defective = 0, defective = 1 };

inline Label label_from_int(int v) { return v != 0 ? Label::defective : Label::non_defective; }

}  // namespace soldernet
