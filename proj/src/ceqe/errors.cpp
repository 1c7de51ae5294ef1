// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0

#include "ceqe/errors.hpp"

namespace ceqe {

const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Index: return "index";
    case ErrorKind::Config: return "config";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::Io: return "io";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Assembly: return "assembly";
    case ErrorKind::Evaluation: return "evaluation";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Checkpoint: return "checkpoint";
    }
    return "unknown";
}

} // namespace ceqe
