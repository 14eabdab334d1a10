#ifndef QCQA_ERRORS_HPP
#define QCQA_ERRORS_HPP

#include <stdexcept>

namespace qcqa {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Genome violates its encoding contract (bad label range, duplicate permutation entries, ...).
struct EncodingError : Error {
    using Error::Error;
};

// A grouping is not a partition of {0..H-1} or does not match the layer it is applied to.
struct PartitionError : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

// ModelPlan inconsistent with the archive it is applied to.
struct PlanError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

// Exhaustive enumeration would exceed the partition budget.
struct BudgetError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

} // namespace qcqa

#endif
