#pragma once

#include <stdexcept>
#include <string>

namespace qg {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidProfile : Error {
    using Error::Error;
};
struct InvalidModel : Error {
    using Error::Error;
};
struct NumericalOverflow : Error {
    using Error::Error;
};
struct DirichletProximity : Error {
    using Error::Error;
};
struct RootFindingFailure : Error {
    using Error::Error;
};
struct WindowSplitRequired : Error {
    using Error::Error;
};
struct NearSingular : Error {
    using Error::Error;
};
struct QuadratureFailure : Error {
    using Error::Error;
};
struct InsufficientData : Error {
    using Error::Error;
};
struct ConditioningFailure : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};

} // namespace qg
