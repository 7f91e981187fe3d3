#pragma once

#include <stdexcept>
#include <string>

namespace hsnet {

/// Root of every error raised by the library. The concrete type tells the
/// caller which contract was violated.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define HSNET_DEFINE_ERROR(Name)                   \
    class Name : public Error {                    \
    public:                                        \
        using Error::Error;                        \
    };

HSNET_DEFINE_ERROR(ShapeError)         // operand dims disagree
HSNET_DEFINE_ERROR(GeometryError)      // conv/pool output would be < 1
HSNET_DEFINE_ERROR(ArgumentError)      // scalar argument out of domain
HSNET_DEFINE_ERROR(CapacityError)      // element count overflows
HSNET_DEFINE_ERROR(GraphError)         // autograd misuse
HSNET_DEFINE_ERROR(NumericError)       // NaN/Inf produced
HSNET_DEFINE_ERROR(ConfigError)        // invalid block/network/train config
HSNET_DEFINE_ERROR(FormatError)        // malformed file content
HSNET_DEFINE_ERROR(IoError)            // file missing or unreadable
HSNET_DEFINE_ERROR(CorruptionError)    // checkpoint CRC mismatch
HSNET_DEFINE_ERROR(IncompatibleError)  // checkpoint does not fit network
HSNET_DEFINE_ERROR(DegenerateError)    // statistics over a single element

#undef HSNET_DEFINE_ERROR

}  // namespace hsnet
