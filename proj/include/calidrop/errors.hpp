// Copyright 2026 The CaliDrop Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace calidrop {

/// Root of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad configuration or contract misuse by the caller. The CLI maps this to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent data. The CLI maps this to exit code 3.
class DataError : public Error {
public:
    using Error::Error;
};

#define CALIDROP_DEFINE_ERROR(Name, Base) \
    class Name : public Base {            \
    public:                               \
        using Base::Base;                 \
    }

CALIDROP_DEFINE_ERROR(ArgError, ConfigError);
CALIDROP_DEFINE_ERROR(BudgetTooSmall, ConfigError);
CALIDROP_DEFINE_ERROR(InvalidThresholds, ConfigError);
CALIDROP_DEFINE_ERROR(EmptyInput, ConfigError);
CALIDROP_DEFINE_ERROR(RangeError, ConfigError);

CALIDROP_DEFINE_ERROR(DimError, DataError);
CALIDROP_DEFINE_ERROR(NumError, DataError);
CALIDROP_DEFINE_ERROR(UnknownPosition, DataError);
CALIDROP_DEFINE_ERROR(MissingImportance, DataError);
CALIDROP_DEFINE_ERROR(PositionOrder, DataError);
CALIDROP_DEFINE_ERROR(NullState, DataError);
CALIDROP_DEFINE_ERROR(FormatError, DataError);
CALIDROP_DEFINE_ERROR(TruncatedFile, DataError);
CALIDROP_DEFINE_ERROR(DimMismatch, DataError);

#undef CALIDROP_DEFINE_ERROR

} // namespace calidrop
