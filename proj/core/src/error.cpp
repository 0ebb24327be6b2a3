#include "pacs/error.hpp"

#include <sstream>

namespace pacs {

namespace {
std::string violation_text(double sq, double skew, std::size_t idx) {
    std::ostringstream os;
    os.precision(3);
    os << "constraint violation at point " << idx << ": |J^2+I| = " << sq << ", |J+J^T| = " << skew;
    return os.str();
}
}  // namespace

ConstraintViolation::ConstraintViolation(double sq, double skew, std::size_t idx)
    : Error(violation_text(sq, skew, idx)), max_sq_defect(sq), max_skew_defect(skew), worst_index(idx) {}

RetractFailure::RetractFailure(double d, double tol)
    : Error("retraction drift " + std::to_string(d) + " exceeds tolerance " + std::to_string(tol)), drift(d) {}

FormatError::FormatError(const std::string& what, std::size_t off)
    : Error(what + " (byte offset " + std::to_string(off) + ")"), offset(off) {}

UnsupportedVersion::UnsupportedVersion(unsigned v)
    : Error("unsupported snapshot version " + std::to_string(v)), version(v) {}

}  // namespace pacs
