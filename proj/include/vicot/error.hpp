// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vicot {

enum class ErrorCode {
  // reasoning stack
  IndexMismatch,
  TooFewCandidates,
  EmptyPool,
  // toolcall codec
  DuplicateTool,
  MalformedBlock,
  BadArguments,
  MultipleBlocks,
  PartialSoap,
  EmptyToolset,
  // transport
  SpawnFailed,
  HandshakeTimeout,
  TransportClosed,
  Timeout,
  WrongServer,
  UnknownServer,
  // model gateway
  BackendExhausted,
  EndpointError,
  PromptDrift,
  Precondition,
  // agent loop
  ToolServerUnavailable,
  ScenarioMismatch,
  // tiler
  BadDims,
  DuplicateTag,
  // trace store
  IncompleteRun,
  InvalidRecord,
  // cli
  Config,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Byte range [begin, end) into the text an error was raised on.
struct ByteSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const ByteSpan&, const ByteSpan&) = default;
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::optional<ByteSpan> span = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  const std::optional<ByteSpan>& span() const noexcept { return span_; }

 private:
  ErrorCode code_;
  std::optional<ByteSpan> span_;
};

}  // namespace vicot
