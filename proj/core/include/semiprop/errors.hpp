// errors.hpp — Exception types shared across the library

#pragma once

#include <stdexcept>
#include <string>

namespace semiprop {

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// geometry
struct SingularPoint : Error { using Error::Error; };
struct SingularMetric : Error { using Error::Error; };
struct TruncationInsufficient : Error { using Error::Error; };

// operator algebra
struct UnknownGenerator : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };

// dynamics
struct StepFailure : Error { using Error::Error; };
struct NoConvergence : Error { using Error::Error; };
struct SingularJacobian : Error { using Error::Error; };

// propagator assembly
struct FocalPoint : Error { using Error::Error; };
struct SqrtBranchFailure : Error { using Error::Error; };
struct RiccatiBlowup : Error { using Error::Error; };
struct EmptyContributionSet : Error { using Error::Error; };

// oracle / scenario
struct NonConvergentStepping : Error { using Error::Error; };
struct MappingMismatch : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

} // namespace semiprop
