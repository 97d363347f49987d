#pragma once

#include <stdexcept>
#include <string>

namespace gpcd {

// invalid_argument is used directly from <stdexcept>.

// A precondition on accumulated state was violated (e.g. training stages
// run out of order, or a patch set that does not cover its parent cloud).
struct invalid_state : std::runtime_error {
    explicit invalid_state(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values appeared in a numeric pipeline.
struct numeric_failure : std::runtime_error {
    explicit numeric_failure(const std::string& what) : std::runtime_error(what) {}
};

struct io_error : std::runtime_error {
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gpcd
