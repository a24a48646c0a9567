#pragma once

#include <stdexcept>
#include <string>

namespace lsmpc {

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& what) : Error(what) {}
};

// every raw firing strength underflowed; membership undefined
struct AllZeroWeights : Error {
    explicit AllZeroWeights(const std::string& what) : Error(what) {}
};

struct MissingGain : Error {
    explicit MissingGain(const std::string& what) : Error(what) {}
};

// delay lookup before h steps of pre-history were supplied
struct BufferUnderflow : Error {
    explicit BufferUnderflow(const std::string& what) : Error(what) {}
};

struct InvalidInput : Error {
    explicit InvalidInput(const std::string& what) : Error(what) {}
};

struct NonSymmetricAssembly : Error {
    explicit NonSymmetricAssembly(const std::string& what) : Error(what) {}
};

struct SingularX : Error {
    explicit SingularX(const std::string& what) : Error(what) {}
};

struct SingularSchurPivot : Error {
    explicit SingularSchurPivot(const std::string& what) : Error(what) {}
};

struct CoordinationStateStale : Error {
    explicit CoordinationStateStale(const std::string& what) : Error(what) {}
};

struct InfeasibleSynthesis : Error {
    InfeasibleSynthesis(const std::string& what, int subsystem,
                        std::string family, double margin)
        : Error(what), subsystem(subsystem), family(std::move(family)),
          infeasibility_margin(margin) {}
    int subsystem;            // 1-based
    std::string family;       // which inequality family failed
    double infeasibility_margin;
};

struct NumericalFailure : Error {
    explicit NumericalFailure(const std::string& what) : Error(what) {}
};

}  // namespace lsmpc
