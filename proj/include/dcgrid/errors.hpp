#ifndef DCGRID_ERRORS_HPP
#define DCGRID_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dcgrid {

/// Base class for all model-validation failures (bad parameters, dangling
/// references, inconsistent dimensions).
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Scenario file does not conform to the schema (missing or mistyped
/// fields, unknown enum values). Distinct from model validation so the
/// CLI can map the two to different exit codes.
struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

/// An eliminated or partition block is numerically singular.
struct SingularBlock : std::runtime_error {
  explicit SingularBlock(const std::string& msg) : std::runtime_error(msg) {}
};

/// The augmented steady-state system is rank deficient.
struct SingularSystem : std::runtime_error {
  explicit SingularSystem(const std::string& msg) : std::runtime_error(msg) {}
};

/// The uniform controller requires a load at every bus.
struct AssumptionViolation : std::runtime_error {
  explicit AssumptionViolation(const std::string& msg) : std::runtime_error(msg) {}
};

/// The active communication graph is not connected.
struct DisconnectedGraph : std::runtime_error {
  explicit DisconnectedGraph(const std::string& msg) : std::runtime_error(msg) {}
};

/// A compromised reference current came out nonpositive.
struct NonpositiveReference : std::runtime_error {
  explicit NonpositiveReference(const std::string& msg) : std::runtime_error(msg) {}
};

/// Mean per-unit base current is nonpositive.
struct DegenerateLoadProfile : std::runtime_error {
  explicit DegenerateLoadProfile(const std::string& msg) : std::runtime_error(msg) {}
};

/// Some entry of the current-bound denominator vector is nonpositive.
struct NonpositiveNu : std::runtime_error {
  explicit NonpositiveNu(const std::string& msg) : std::runtime_error(msg) {}
};

/// Integration diverged.
struct NumericalBlowup : std::runtime_error {
  explicit NumericalBlowup(const std::string& msg) : std::runtime_error(msg) {}
};

/// Settling criterion was not met within the horizon.
struct NotSettled : std::runtime_error {
  explicit NotSettled(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dcgrid

#endif
