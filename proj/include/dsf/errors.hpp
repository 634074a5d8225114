#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dsf {

// Every failure raised by the library derives from Error. kind() is a short
// stable token used by the CLI for its machine-parsable error line.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define DSF_DEFINE_ERROR(Name, token)                                     \
    class Name : public Error {                                           \
    public:                                                               \
        explicit Name(const std::string& message) : Error(token, message) {} \
    };

DSF_DEFINE_ERROR(DimensionError, "dimension")
DSF_DEFINE_ERROR(DomainError, "domain")
DSF_DEFINE_ERROR(ContractError, "contract")
DSF_DEFINE_ERROR(ConfigError, "config")
DSF_DEFINE_ERROR(DataError, "data")
DSF_DEFINE_ERROR(IoError, "io")
DSF_DEFINE_ERROR(BatchTooSmallError, "batch-too-small")
DSF_DEFINE_ERROR(DegenerateInputError, "degenerate-input")
DSF_DEFINE_ERROR(UndefinedImprovementError, "undefined-improvement")

#undef DSF_DEFINE_ERROR

class ParseError : public Error {
public:
    ParseError(const std::string& message, std::size_t offset)
        : Error("parse", message + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class TrainingDivergedError : public Error {
public:
    TrainingDivergedError(const std::string& message, std::size_t epoch)
        : Error("training-diverged", message + " (epoch " + std::to_string(epoch) + ")"),
          epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

}  // namespace dsf
