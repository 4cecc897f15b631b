#pragma once

#include <stdexcept>
#include <string>

namespace nrmf {

// Error classes double as the machine-parseable tag the CLI prints on
// failure, so the set here is part of the external interface.
enum class ErrorClass {
    Shape,       // dimension / rank bound violations
    Numeric,     // iteration caps, non-convergence
    Degenerate,  // inputs with no defined answer (zero kernel, zero matrix)
    Format,      // malformed file contents (IDX, checkpoints, configs)
    Io,          // missing/unreadable/unwritable files
    Config,      // invalid experiment or training configuration
};

inline const char* error_class_name(ErrorClass c) {
    switch (c) {
        case ErrorClass::Shape: return "shape";
        case ErrorClass::Numeric: return "numeric";
        case ErrorClass::Degenerate: return "degenerate";
        case ErrorClass::Format: return "format";
        case ErrorClass::Io: return "io";
        case ErrorClass::Config: return "config";
    }
    return "unknown";
}

class Error : public std::runtime_error {
  public:
    Error(ErrorClass cls, const std::string& msg)
        : std::runtime_error(msg), cls_(cls) {}

    ErrorClass error_class() const { return cls_; }
    const char* class_name() const { return error_class_name(cls_); }

  private:
    ErrorClass cls_;
};

[[noreturn]] inline void throw_shape(const std::string& msg) {
    throw Error(ErrorClass::Shape, msg);
}
[[noreturn]] inline void throw_numeric(const std::string& msg) {
    throw Error(ErrorClass::Numeric, msg);
}
[[noreturn]] inline void throw_degenerate(const std::string& msg) {
    throw Error(ErrorClass::Degenerate, msg);
}
[[noreturn]] inline void throw_format(const std::string& msg) {
    throw Error(ErrorClass::Format, msg);
}
[[noreturn]] inline void throw_io(const std::string& msg) {
    throw Error(ErrorClass::Io, msg);
}
[[noreturn]] inline void throw_config(const std::string& msg) {
    throw Error(ErrorClass::Config, msg);
}

}  // namespace nrmf
