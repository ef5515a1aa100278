#pragma once

#include <stdexcept>

namespace soldernet::service {

struct NotFoundError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// The requested transition is not allowed from the case's current state.
struct ConflictError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// The event log is inconsistent: out-of-order seq, corrupt line, illegal edge.
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StorageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace soldernet::service
