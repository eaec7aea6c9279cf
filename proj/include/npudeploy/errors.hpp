#pragma once

#include <stdexcept>
#include <string>

namespace npu {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define NPU_DECLARE_ERROR(Name)                                                \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {}   \
    }

NPU_DECLARE_ERROR(ParseError);
NPU_DECLARE_ERROR(ValidationError);
NPU_DECLARE_ERROR(IoError);
NPU_DECLARE_ERROR(EmptySelection);
NPU_DECLARE_ERROR(MappingError);
NPU_DECLARE_ERROR(InternalError);
NPU_DECLARE_ERROR(EncodingError);
NPU_DECLARE_ERROR(MissingWeights);
NPU_DECLARE_ERROR(ShapeMismatch);
NPU_DECLARE_ERROR(HeadIncompatible);
NPU_DECLARE_ERROR(SlotsExhausted);
NPU_DECLARE_ERROR(DimensionMismatch);
NPU_DECLARE_ERROR(MissingCostModel);
NPU_DECLARE_ERROR(NonPositiveLatency);
NPU_DECLARE_ERROR(NonPositivePower);

#undef NPU_DECLARE_ERROR

}  // namespace npu
