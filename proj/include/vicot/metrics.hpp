// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vicot/tool_types.hpp"

namespace vicot {

/// Lowercased whitespace tokens.
std::vector<std::string> bleu_tokens(std::string_view text);

/// BLEU with uniform weights over 1..4-gram clipped precisions and the brevity penalty.
/// No shared unigram (or an empty side) scores 0. Otherwise an order n >= 2 with no match
/// uses (0 + 1) / (candidates + 1).
double bleu4(std::string_view candidate, std::string_view reference);

/// Position-aligned tool-name agreement over the longer sequence; both empty scores 1.
double tool_accuracy(std::span<const ToolCall> predicted, std::span<const ToolCall> gold);

/// One line per call: "server tool {arguments}".
std::string serialize_calls(std::span<const ToolCall> calls);

}  // namespace vicot
