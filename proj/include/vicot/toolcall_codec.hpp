// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vicot/tool_types.hpp"

namespace vicot {

/// Tool documentation for the "{available_tools}" placeholder. One <tool> entry per descriptor,
/// ordered by (category, server_name, tool_name). Throws DuplicateTool.
std::string generate_tool_xml(std::span<const ToolDescriptor> tools);

/// Renders a call in the <use_mcp_tool> block shape the parser accepts. Angle brackets inside
/// argument strings are written as \u003c / \u003e.
std::string render_tool_call(const ToolCall& call);

/// Inverse of generate_tool_xml for the blocks found anywhere in `text`. Recovered schemas hold
/// property types, descriptions and the required list only.
std::vector<ToolDescriptor> parse_tool_xml(std::string_view text);

/// Extracts the single <use_mcp_tool> block of a model turn.
/// Throws MalformedBlock, BadArguments or MultipleBlocks; returns nothing when no block exists.
std::optional<ToolCall> parse_tool_call(std::string_view text);

enum class StructuredKind { soap, end_token };

struct StructuredOutput {
  StructuredKind kind = StructuredKind::end_token;
  /// Keys 'S', 'O', 'A', 'P' when kind == soap.
  std::map<char, std::string> sections;
  /// Free text preceding <end> when kind == end_token.
  std::string answer;

  const std::string& section(char key) const { return sections.at(key); }
};

/// Terminal form of a turn, looked for outside the <think> block. SOAP wins over <end>.
/// Throws PartialSoap when only some of the four sections are present (or one is empty).
std::optional<StructuredOutput> parse_structured_output(std::string_view text);

struct ThinkSplit {
  std::string think;
  std::string remainder;
};

/// Content of the first <think> block and the text after it. An unclosed block swallows the turn.
ThinkSplit strip_think(std::string_view text);

struct ToolMatch {
  ToolDescriptor tool;
  double score = 0.0;
};

/// Case-folded word set; words are maximal runs of ASCII letters/digits.
std::set<std::string> word_set(std::string_view text);

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

/// Coarse stage of the matcher: category picked by keyword vote (ties go to vision).
ToolCategory select_category(std::string_view decision);

/// Coarse-to-fine match of a decision against the tool set: the voted category's tools ranked by
/// Jaccard similarity between the decision and "tool_name description". Ties by tool name.
/// Falls back to the other category when the voted one has no tools. Throws EmptyToolset.
std::vector<ToolMatch> match_tools(std::string_view decision, std::span<const ToolDescriptor> tools);

}  // namespace vicot
