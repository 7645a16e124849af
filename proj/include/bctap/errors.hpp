#pragma once

#include <stdexcept>
#include <string>

namespace bctap {

// Error taxonomy shared across the library. All are std::runtime_error so
// callers that do not care about the distinction can catch one type.

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TopologyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RouteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ArgumentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct PhaseOutOfRange : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptyLaneSet : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonFiniteParams : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct WeightRowNotStochastic : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonFiniteActivation : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonFiniteGradient : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SeriesTooShort : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FitFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct AllCandidatesFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TooFewSamples : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptyHistory : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonPositiveBandwidth : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckpointMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace bctap
