#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fallmon {

/// Tensor dimensions do not line up for the requested operation.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Caller supplied a value outside an operation's domain.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid configuration (thresholds, sizes, unknown keys).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed binary or text payload. `offset()` is the byte position of the defect.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Dataset could not be ingested; `offenders()` lists the paths or rows at fault.
class IngestionError : public std::runtime_error {
public:
    IngestionError(const std::string& what, std::vector<std::string> offenders)
        : std::runtime_error(compose(what, offenders)), offenders_(std::move(offenders)) {}

    const std::vector<std::string>& offenders() const noexcept { return offenders_; }

private:
    static std::string compose(const std::string& what, const std::vector<std::string>& offenders) {
        std::string msg = what;
        for (const auto& o : offenders) {
            msg += "\n  ";
            msg += o;
        }
        return msg;
    }

    std::vector<std::string> offenders_;
};

/// Loss became NaN/Inf during training.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::size_t epoch, std::size_t batch)
        : std::runtime_error("training diverged: non-finite loss in epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch)),
          epoch_(epoch),
          batch_(batch) {}

    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

/// Telemetry or config text that does not follow its grammar.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::string key)
        : std::runtime_error(what), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Socket, file, or other environment failure.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fallmon
