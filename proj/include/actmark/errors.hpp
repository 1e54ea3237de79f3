#pragma once

#include <stdexcept>
#include <string>

namespace actmark {

enum class ErrorCode {
    Shape,                // tensor dimension mismatch
    Input,                // invalid argument or precondition violation
    Numeric,              // non-finite value where a finite one is required
    Format,               // malformed file contents
    UnsupportedVersion,   // container version not understood
    Corruption,           // checksum mismatch
    KeyTooShort,          // no mismatch threshold satisfies the bound
    RarityUnsatisfiable,  // candidate draw cap hit before enough accepts
    InsufficientKeys,     // fewer eligible keys than requested
    Convergence,          // iteration cap reached before the target
    EmbedFailed,          // watermark not extractable after training
    Protocol,             // oracle wire-protocol violation
    Setup,                // missing external prerequisite (e.g. dataset files)
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace actmark
