#include "actmark/errors.hpp"

namespace actmark {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::Shape: return "shape";
        case ErrorCode::Input: return "input";
        case ErrorCode::Numeric: return "numeric";
        case ErrorCode::Format: return "format";
        case ErrorCode::UnsupportedVersion: return "unsupported-version";
        case ErrorCode::Corruption: return "corruption";
        case ErrorCode::KeyTooShort: return "key-too-short";
        case ErrorCode::RarityUnsatisfiable: return "rarity-unsatisfiable";
        case ErrorCode::InsufficientKeys: return "insufficient-keys";
        case ErrorCode::Convergence: return "convergence";
        case ErrorCode::EmbedFailed: return "embed-failed";
        case ErrorCode::Protocol: return "protocol";
        case ErrorCode::Setup: return "setup";
    }
    return "unknown";
}

void fail(ErrorCode code, const std::string& what) {
    throw Error(code, std::string(to_string(code)) + " error: " + what);
}

}  // namespace actmark
