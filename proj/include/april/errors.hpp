// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace april {

enum class ErrorCode {
  kSchema,
  kValidation,
  kUnknownTaskId,
  kTransport,
  kBudgetExceeded,
  kBackendRefusal,
  kMissingTag,
  kEmptyPayload,
  kShimProtocol,
  kEnvironment,
  kParse,
  kEvaluatorParse,
  kNonConverged,
  kNoAdmissibleChildren,
  kDegenerateGroup,
  kNonFiniteLoss,
  kEmptyBenchmark,
  kMismatchedTaskSets,
  kRunClosed,
  kStorage,
  kUnknownRun,
  kMissingPlaceholderValue,
  kUnboundPlaceholder,
  kConfig,
};

std::string_view error_name(ErrorCode code);

/// Base of every domain error raised by the pipeline. The CLI maps these to
/// exit code 1.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

template <ErrorCode C>
class CodedError : public Error {
 public:
  explicit CodedError(const std::string& what) : Error(C, std::string(error_name(C)) + ": " + what) {}
};

using SchemaError = CodedError<ErrorCode::kSchema>;
using ValidationError = CodedError<ErrorCode::kValidation>;
using UnknownTaskId = CodedError<ErrorCode::kUnknownTaskId>;
using TransportError = CodedError<ErrorCode::kTransport>;
using BudgetExceeded = CodedError<ErrorCode::kBudgetExceeded>;
using BackendRefusal = CodedError<ErrorCode::kBackendRefusal>;
using MissingTag = CodedError<ErrorCode::kMissingTag>;
using EmptyPayload = CodedError<ErrorCode::kEmptyPayload>;
using ShimProtocolError = CodedError<ErrorCode::kShimProtocol>;
using EnvironmentError = CodedError<ErrorCode::kEnvironment>;
using ParseError = CodedError<ErrorCode::kParse>;
using EvaluatorParseError = CodedError<ErrorCode::kEvaluatorParse>;
using NoAdmissibleChildren = CodedError<ErrorCode::kNoAdmissibleChildren>;
using NonFiniteLoss = CodedError<ErrorCode::kNonFiniteLoss>;
using EmptyBenchmark = CodedError<ErrorCode::kEmptyBenchmark>;
using MismatchedTaskSets = CodedError<ErrorCode::kMismatchedTaskSets>;
using RunClosed = CodedError<ErrorCode::kRunClosed>;
using StorageError = CodedError<ErrorCode::kStorage>;
using UnknownRun = CodedError<ErrorCode::kUnknownRun>;
using MissingPlaceholderValue = CodedError<ErrorCode::kMissingPlaceholderValue>;
using UnboundPlaceholder = CodedError<ErrorCode::kUnboundPlaceholder>;
using ConfigError = CodedError<ErrorCode::kConfig>;

}  // namespace april
