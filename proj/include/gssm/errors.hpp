#pragma once

#include <stdexcept>
#include <string>

namespace gssm {

// Error taxonomy. Each stage throws the narrowest type that applies so callers
// can distinguish malformed input from internal failures.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SchemaError : Error { using Error::Error; };          // file header/field mismatch
struct DataError : Error { using Error::Error; };            // values violate the data contract
struct StructureError : Error { using Error::Error; };       // event-level structural violation
struct NumericError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct ArgumentError : Error { using Error::Error; };
struct ReconstructionError : Error { using Error::Error; };
struct FeatureError : Error { using Error::Error; };
struct TrainingError : Error { using Error::Error; };
struct EvalError : Error { using Error::Error; };
struct AttributionError : Error { using Error::Error; };
struct GeneratorError : Error { using Error::Error; };

}  // namespace gssm
