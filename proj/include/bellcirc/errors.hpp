#pragma once

#include <stdexcept>
#include <string>

namespace bellcirc {

// Base class for all library errors. Every failure mode has a named
// subclass so callers can catch exactly what they expect.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Two objects were combined whose finite spaces do not match.
struct SpaceMismatch : Error {
    using Error::Error;
};

// An operation required matching operator types (e.g. a closed operator
// with equal input and output spaces) and got something else.
struct TypeMismatch : Error {
    using Error::Error;
};

// Circuit wiring error: interfaces or invariant balls do not line up.
struct TypeError : Error {
    using Error::Error;
};

// A value exceeded the declared invariant ball of a transformer.
struct BallViolation : Error {
    using Error::Error;
};

// A fixed-point solve was requested for an operator whose modulus is >= 1.
struct NonContraction : Error {
    using Error::Error;
};

// Linear system could not be solved. Cannot occur for discounted stochastic
// systems; raised defensively.
struct SingularSystem : Error {
    using Error::Error;
};

// A feedback loop failed its contraction certificate at evaluation time.
struct UnguardedTrace : Error {
    using Error::Error;
};

// A trace node cannot be certified (alpha >= 1 or external modulus >= 1).
struct UncertifiableTrace : Error {
    using Error::Error;
};

// An exact-homomorphism check was requested but the mismatch is nonzero.
struct NotExact : Error {
    using Error::Error;
};

// A contract proof obligation failed; message names the broken inequality.
struct ObligationFailed : Error {
    using Error::Error;
};

// Kleene iteration did not settle within the iteration budget.
struct MaxIterExceeded : Error {
    using Error::Error;
};

// Importance weighting hit an action with positive target but zero
// behavior probability.
struct AbsoluteContinuityViolation : Error {
    using Error::Error;
};

// Enumeration (belief tree, prefix space) exceeded its node budget.
struct BudgetExceeded : Error {
    using Error::Error;
};

// Input document is malformed; message carries the offending path.
struct ParseError : Error {
    using Error::Error;
};

}  // namespace bellcirc
