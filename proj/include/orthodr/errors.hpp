// Exception hierarchy shared across the library. The CLI maps these onto
// distinct exit codes, so keep the categories coarse and stable.
#pragma once

#include <stdexcept>
#include <string>

namespace orthodr {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shapes of inputs do not conform (rows/cols mismatch, p < d, ...).
class DimensionError : public Error {
public:
    using Error::Error;
};

// A Gram-Schmidt pivot collapsed; carries the offending column.
class RankDeficiencyError : public Error {
public:
    RankDeficiencyError(const std::string& msg, int column)
        : Error(msg), column_(column) {}
    int column() const { return column_; }

private:
    int column_;
};

// Dataset invariant violations; messages carry row indices.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Malformed input files (CSV cells, schema); messages carry row/column.
class ParseError : public Error {
public:
    using Error::Error;
};

class MissingArgumentError : public Error {
public:
    using Error::Error;
};

// Estimating-equation methods accepted by the API but not implemented here.
class UnimplementedMethodError : public Error {
public:
    using Error::Error;
};

// An objective callback produced NaN/Inf; message names the evaluation site.
class NonFiniteObjectiveError : public Error {
public:
    using Error::Error;
};

// Conditions the algorithms guarantee cannot happen; reaching one is a bug.
class InternalError : public Error {
public:
    using Error::Error;
};

} // namespace orthodr
