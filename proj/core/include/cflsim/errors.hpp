#pragma once

#include <stdexcept>
#include <string>

namespace cflsim {

// Bad caller input: out-of-range labels, mismatched dimensions, invalid config.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite values produced during numeric work.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, long param_index = -1)
        : std::runtime_error(what), param_index(param_index) {}
    long param_index;
};

// A client whose local training produced a non-finite loss.
class DivergedClientError : public std::runtime_error {
public:
    DivergedClientError(int client_id, long round, const std::string& what)
        : std::runtime_error(what), client_id(client_id), round(round) {}
    int client_id;
    long round;
};

}  // namespace cflsim
