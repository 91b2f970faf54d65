// SPDX-License-Identifier: Apache-2.0
#include "vicot/error.hpp"

namespace vicot {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::IndexMismatch: return "IndexMismatch";
    case ErrorCode::TooFewCandidates: return "TooFewCandidates";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::DuplicateTool: return "DuplicateTool";
    case ErrorCode::MalformedBlock: return "MalformedBlock";
    case ErrorCode::BadArguments: return "BadArguments";
    case ErrorCode::MultipleBlocks: return "MultipleBlocks";
    case ErrorCode::PartialSoap: return "PartialSoap";
    case ErrorCode::EmptyToolset: return "EmptyToolset";
    case ErrorCode::SpawnFailed: return "SpawnFailed";
    case ErrorCode::HandshakeTimeout: return "HandshakeTimeout";
    case ErrorCode::TransportClosed: return "TransportClosed";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::WrongServer: return "WrongServer";
    case ErrorCode::UnknownServer: return "UnknownServer";
    case ErrorCode::BackendExhausted: return "BackendExhausted";
    case ErrorCode::EndpointError: return "EndpointError";
    case ErrorCode::PromptDrift: return "PromptDrift";
    case ErrorCode::Precondition: return "Precondition";
    case ErrorCode::ToolServerUnavailable: return "ToolServerUnavailable";
    case ErrorCode::ScenarioMismatch: return "ScenarioMismatch";
    case ErrorCode::BadDims: return "BadDims";
    case ErrorCode::DuplicateTag: return "DuplicateTag";
    case ErrorCode::IncompleteRun: return "IncompleteRun";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::Config: return "Config";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message, std::optional<ByteSpan> span)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), span_(span) {}

}  // namespace vicot
