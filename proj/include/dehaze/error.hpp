#ifndef DEHAZE_ERROR_HPP
#define DEHAZE_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace dehaze {

enum class ErrorKind {
    FileNotFound,
    UnsupportedFormat,
    CorruptImage,
    IoError,
    RangeViolation,
    ChannelMismatch,
    ShapeMismatch,
    NonPositiveBeta,
    NegativeDepth,
    InvalidSpec,
    ImageTooSmall,
    UnknownLayer,
    NonSpatialLayer,
    NonFiniteLoss,
    EmptyDataset,
    MissingSplit,
    UnpairedImage,
    SizeMismatch,
    InvalidConfig,
    InvalidArgument,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::FileNotFound: return "FileNotFound";
    case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::CorruptImage: return "CorruptImage";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::RangeViolation: return "RangeViolation";
    case ErrorKind::ChannelMismatch: return "ChannelMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonPositiveBeta: return "NonPositiveBeta";
    case ErrorKind::NegativeDepth: return "NegativeDepth";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::ImageTooSmall: return "ImageTooSmall";
    case ErrorKind::UnknownLayer: return "UnknownLayer";
    case ErrorKind::NonSpatialLayer: return "NonSpatialLayer";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::MissingSplit: return "MissingSplit";
    case ErrorKind::UnpairedImage: return "UnpairedImage";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Single exception type for the library; `kind()` carries the failure class.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace dehaze

#endif // DEHAZE_ERROR_HPP
