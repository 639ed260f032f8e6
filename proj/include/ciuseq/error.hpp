#pragma once

#include <stdexcept>
#include <string>

namespace ciuseq {

// Base class for every error the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CIUSEQ_DEFINE_ERROR(Name)          \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

// Identifier / config-file errors.
CIUSEQ_DEFINE_ERROR(UnknownCiuError);
CIUSEQ_DEFINE_ERROR(MissingCiuError);
CIUSEQ_DEFINE_ERROR(OutOfRangeError);
CIUSEQ_DEFINE_ERROR(ParseError);

// Transcript errors.
CIUSEQ_DEFINE_ERROR(MalformedLineError);
CIUSEQ_DEFINE_ERROR(EmptyTranscriptError);

// Model / training errors.
CIUSEQ_DEFINE_ERROR(EmptyInputError);
CIUSEQ_DEFINE_ERROR(EmptyDatasetError);
CIUSEQ_DEFINE_ERROR(NonFiniteLossError);

// Serialization errors.
CIUSEQ_DEFINE_ERROR(IoError);
CIUSEQ_DEFINE_ERROR(VersionMismatchError);
CIUSEQ_DEFINE_ERROR(CorruptTensorError);
CIUSEQ_DEFINE_ERROR(DimensionMismatchError);
CIUSEQ_DEFINE_ERROR(MissingKeyError);

// Statistics errors.
CIUSEQ_DEFINE_ERROR(TooFewGroupsError);
CIUSEQ_DEFINE_ERROR(LengthMismatchError);
CIUSEQ_DEFINE_ERROR(DegenerateInputError);
CIUSEQ_DEFINE_ERROR(RankDeficientError);
CIUSEQ_DEFINE_ERROR(TooFewRowsError);

// Generator errors.
CIUSEQ_DEFINE_ERROR(InvalidSpecError);

#undef CIUSEQ_DEFINE_ERROR

}  // namespace ciuseq
