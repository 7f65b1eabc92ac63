// SPDX-License-Identifier: Apache-2.0
#include "april/errors.hpp"

namespace april {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSchema: return "SchemaError";
    case ErrorCode::kValidation: return "ValidationError";
    case ErrorCode::kUnknownTaskId: return "UnknownTaskId";
    case ErrorCode::kTransport: return "TransportError";
    case ErrorCode::kBudgetExceeded: return "BudgetExceeded";
    case ErrorCode::kBackendRefusal: return "BackendRefusal";
    case ErrorCode::kMissingTag: return "MissingTag";
    case ErrorCode::kEmptyPayload: return "EmptyPayload";
    case ErrorCode::kShimProtocol: return "ShimProtocolError";
    case ErrorCode::kEnvironment: return "EnvironmentError";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kEvaluatorParse: return "EvaluatorParseError";
    case ErrorCode::kNonConverged: return "NonConverged";
    case ErrorCode::kNoAdmissibleChildren: return "NoAdmissibleChildren";
    case ErrorCode::kDegenerateGroup: return "DegenerateGroup";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kEmptyBenchmark: return "EmptyBenchmark";
    case ErrorCode::kMismatchedTaskSets: return "MismatchedTaskSets";
    case ErrorCode::kRunClosed: return "RunClosed";
    case ErrorCode::kStorage: return "StorageError";
    case ErrorCode::kUnknownRun: return "UnknownRun";
    case ErrorCode::kMissingPlaceholderValue: return "MissingPlaceholderValue";
    case ErrorCode::kUnboundPlaceholder: return "UnboundPlaceholder";
    case ErrorCode::kConfig: return "ConfigError";
  }
  return "Error";
}

}  // namespace april
