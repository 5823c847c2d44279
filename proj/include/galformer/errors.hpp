#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace galformer {

/// Broad failure classes; the CLI maps them onto exit codes.
enum class ErrorClass { usage, data, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }

 private:
  ErrorClass cls_;
};

#define GALFORMER_DEFINE_ERROR(Name, Class)                                   \
  class Name : public Error {                                                  \
   public:                                                                     \
    explicit Name(const std::string& what) : Error(ErrorClass::Class, #Name ": " + what) {} \
  };

// data / input validation
GALFORMER_DEFINE_ERROR(IndexOutOfRange, data)
GALFORMER_DEFINE_ERROR(MissingConformer, data)
GALFORMER_DEFINE_ERROR(DegenerateGeometry, data)
GALFORMER_DEFINE_ERROR(EmptyLineGraph, data)
GALFORMER_DEFINE_ERROR(DimensionMismatch, data)
GALFORMER_DEFINE_ERROR(DatasetTooSmall, data)
GALFORMER_DEFINE_ERROR(AllLabelsMissing, data)
GALFORMER_DEFINE_ERROR(CheckpointError, data)

// numerical
GALFORMER_DEFINE_ERROR(ShapeMismatch, numerical)
GALFORMER_DEFINE_ERROR(NonScalarLoss, numerical)
GALFORMER_DEFINE_ERROR(EigenNoConvergence, numerical)
GALFORMER_DEFINE_ERROR(UndefinedMetric, numerical)
GALFORMER_DEFINE_ERROR(DegenerateClusters, numerical)
GALFORMER_DEFINE_ERROR(NonFiniteLoss, numerical)

// usage
GALFORMER_DEFINE_ERROR(ConfigError, usage)

#undef GALFORMER_DEFINE_ERROR

/// JSON/schema violation on a given 1-based line of a JSONL file.
class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line, const std::string& what)
      : Error(ErrorClass::data, "MalformedRecord(line " + std::to_string(line) + "): " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace galformer
