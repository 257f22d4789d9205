#pragma once

#include <stdexcept>
#include <string>

namespace trait_probe {

// Base of every error thrown by the library. The CLI maps subclasses to exit
// codes, so new kinds should derive from the closest existing category.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define TRAIT_PROBE_ERROR(Name)                 \
    class Name : public Error {                 \
    public:                                     \
        using Error::Error;                     \
    }

TRAIT_PROBE_ERROR(ParseError);
TRAIT_PROBE_ERROR(ValidationError);
TRAIT_PROBE_ERROR(IoError);

TRAIT_PROBE_ERROR(UnsupportedFormat);
TRAIT_PROBE_ERROR(CorruptFile);
TRAIT_PROBE_ERROR(TooShort);

TRAIT_PROBE_ERROR(InvariantViolation);
TRAIT_PROBE_ERROR(BadMagic);
TRAIT_PROBE_ERROR(VersionMismatch);
TRAIT_PROBE_ERROR(TruncatedPayload);
TRAIT_PROBE_ERROR(NonFiniteValue);
TRAIT_PROBE_ERROR(MissingFeature);
TRAIT_PROBE_ERROR(ChecksumMismatch);

TRAIT_PROBE_ERROR(ShapeMismatch);
TRAIT_PROBE_ERROR(DegenerateData);
TRAIT_PROBE_ERROR(DivergedLoss);

TRAIT_PROBE_ERROR(InvalidK);

TRAIT_PROBE_ERROR(EmptyInput);
TRAIT_PROBE_ERROR(AllZeroDifferences);
TRAIT_PROBE_ERROR(TooFewPairs);

#undef TRAIT_PROBE_ERROR

} // namespace trait_probe
