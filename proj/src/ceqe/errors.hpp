// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace ceqe {

enum class ErrorKind {
    Dimension,
    Index,
    Config,
    Contract,
    Io,
    Parse,
    Validation,
    Assembly,
    Evaluation,
    Numeric,
    Checkpoint,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace ceqe
