#pragma once

#include <stdexcept>
#include <string>

namespace efdrcs {

/// Malformed input: bad shapes, unreadable files, out-of-range parameters.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A computation that could not complete (singular systems, failed factorizations).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Wraps an error raised inside one stage of the detection pipeline.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::exception& cause, bool numerical)
        : std::runtime_error("[" + stage + "] " + cause.what()),
          stage_(std::move(stage)),
          numerical_(numerical) {}

    const std::string& stage() const noexcept { return stage_; }
    bool numerical() const noexcept { return numerical_; }

private:
    std::string stage_;
    bool numerical_;
};

/// Non-fatal diagnostics (jitter added, degenerate class, ...) are routed here.
/// The default sink writes to stderr; tests may silence it.
using WarningSink = void (*)(const std::string&);
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace efdrcs
