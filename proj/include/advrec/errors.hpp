#ifndef ADVREC_ERRORS_HPP
#define ADVREC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace advrec {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define ADVREC_DEFINE_ERROR(Name)                                 \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  };

// numerics
ADVREC_DEFINE_ERROR(ZeroNormError)
ADVREC_DEFINE_ERROR(DimMismatch)
ADVREC_DEFINE_ERROR(NonFiniteGradient)
ADVREC_DEFINE_ERROR(NonFinite)
ADVREC_DEFINE_ERROR(BadParam)
ADVREC_DEFINE_ERROR(BadDistribution)

// data
ADVREC_DEFINE_ERROR(ParseError)
ADVREC_DEFINE_ERROR(EmptySplitError)
ADVREC_DEFINE_ERROR(NoNegativesError)
ADVREC_DEFINE_ERROR(DegenerateSpec)
ADVREC_DEFINE_ERROR(IdOutOfRange)

// evaluation
ADVREC_DEFINE_ERROR(NoCandidates)
ADVREC_DEFINE_ERROR(EmptyEval)
ADVREC_DEFINE_ERROR(EmptySample)
ADVREC_DEFINE_ERROR(EmptyFnList)

// persistence
ADVREC_DEFINE_ERROR(IncompatibleCheckpoint)
ADVREC_DEFINE_ERROR(IoError)

#undef ADVREC_DEFINE_ERROR

}  // namespace advrec

#endif  // ADVREC_ERRORS_HPP
