#pragma once

#include <stdexcept>
#include <string>

namespace lvseg {

/// Base exception for every failure raised by the library. The message is a
/// single line so the CLI can forward it verbatim.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace lvseg
