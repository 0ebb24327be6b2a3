#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pacs {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class ConstraintViolation : public Error {
public:
    ConstraintViolation(double max_sq_defect, double max_skew_defect, std::size_t worst_index);

    double max_sq_defect;
    double max_skew_defect;
    std::size_t worst_index;
};

class RetractFailure : public Error {
public:
    RetractFailure(double drift, double tol);
    double drift;
};

// Malformed snapshot; `offset` is the byte position where parsing stopped.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset);
    std::size_t offset;
};

class UnsupportedVersion : public Error {
public:
    explicit UnsupportedVersion(unsigned version);
    unsigned version;
};

}  // namespace pacs
