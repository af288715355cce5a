#pragma once

#include <stdexcept>
#include <string>

namespace taiyi {

// Base error for everything raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Configuration file problems (unknown key, parse failure).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Missing or unreadable files.
class IoError : public Error {
public:
    using Error::Error;
};

// Vocabulary / checkpoint / dataset incompatibilities.
class CompatError : public Error {
public:
    using Error::Error;
};

// Malformed on-disk formats (checkpoint, vocab file, images, JSONL).
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace taiyi
