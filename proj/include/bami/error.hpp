#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace bami {

// Every failure the library reports is one of these kinds. Callers branch on
// the kind (retry, fall back, map to an exit code) instead of string-matching.
enum class ErrorKind {
    io,                  // file missing / unreadable / unwritable
    decode,              // image bytes not a supported format
    parse,               // model output carries no usable coordinates
    answer_unparseable,  // correction reply has no valid <answer> tag
    transport,           // connection-level HTTP failure after retries
    http_status,         // non-2xx reply
    no_visible_target,   // simulator scene fully masked
    out_of_frame,        // point outside its transform frame
    config,              // invalid configuration value
    dataset,             // dataset schema violation
    internal,            // broken precondition
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    Error(ErrorKind kind, std::string message, std::string raw)
        : std::runtime_error(std::move(message)), kind_(kind), raw_(std::move(raw)) {}

    ErrorKind kind() const { return kind_; }

    // Raw model/server text that triggered the failure, when there is one.
    const std::string& raw() const { return raw_; }

private:
    ErrorKind kind_;
    std::string raw_;
};

} // namespace bami
