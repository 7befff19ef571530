#pragma once

#include <stdexcept>
#include <string>

namespace cfdx {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input (unknown ids, wrong layer, missing parent assignment, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// A configured enumeration cap (subsets, latents, unobserved risks) would be exceeded.
class CapExceeded : public Error {
public:
    using Error::Error;
};

// The evidence has probability zero under the model, so conditionals are undefined.
class ZeroLikelihood : public Error {
public:
    using Error::Error;
};

// A signed sum landed outside its admissible range by more than rounding can explain.
class NumericsError : public Error {
public:
    using Error::Error;
};

// Rejection sampling gave up.
class SamplingError : public Error {
public:
    using Error::Error;
};

}  // namespace cfdx
