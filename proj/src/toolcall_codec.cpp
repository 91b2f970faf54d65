// SPDX-License-Identifier: Apache-2.0
#include "vicot/toolcall_codec.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <regex>
#include <sstream>
#include <tuple>

namespace vicot {
namespace {

constexpr std::string_view kBlockOpen = "<use_mcp_tool>";
constexpr std::string_view kBlockClose = "</use_mcp_tool>";

std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

/// Content of the single <tag>...</tag> child inside a block body, or MalformedBlock.
std::string_view child(std::string_view body, std::string_view tag, std::size_t body_offset) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  const auto opens = count_occurrences(body, open);
  const auto closes = count_occurrences(body, close);
  const ByteSpan span{body_offset, body_offset + body.size()};
  if (opens == 0 && closes == 0) throw Error(ErrorCode::MalformedBlock, "missing <" + std::string(tag) + ">", span);
  if (opens != 1 || closes != 1) {
    throw Error(ErrorCode::MalformedBlock, "expected exactly one <" + std::string(tag) + "> element", span);
  }
  const auto begin = body.find(open) + open.size();
  const auto end = body.find(close);
  if (end < begin) throw Error(ErrorCode::MalformedBlock, "</" + std::string(tag) + "> before its opening tag", span);
  return body.substr(begin, end - begin);
}

std::string identifier(std::string_view raw, std::string_view tag, ByteSpan span) {
  const auto value = trim(raw);
  if (value.empty()) throw Error(ErrorCode::MalformedBlock, "empty <" + std::string(tag) + ">", span);
  if (value.find_first_of("<>") != std::string_view::npos) {
    throw Error(ErrorCode::MalformedBlock, "<" + std::string(tag) + "> contains markup", span);
  }
  return std::string(value);
}

std::string schema_type(const json& property) {
  if (auto it = property.find("type"); it != property.end()) {
    if (it->is_string()) return it->get<std::string>();
    if (it->is_array()) {
      std::string out;
      for (const auto& t : *it) {
        if (!out.empty()) out += '|';
        out += t.is_string() ? t.get<std::string>() : t.dump();
      }
      return out;
    }
  }
  return "any";
}

const std::array<std::string_view, 27> kVisionWords = {
    "image",  "images",     "crop",       "cropping", "region",     "regions",     "detect",
    "detection", "detector", "box",       "boxes",    "pixel",      "pixels",      "zoom",
    "binarization", "binarize", "binary", "resolution", "enhance",  "visual",      "cloud",
    "rain",   "blur",       "deblur",     "denoise",  "noise",      "marking"};

const std::array<std::string_view, 17> kTextWords = {
    "search",   "web",       "retrieve", "retrieval", "rag",      "knowledge", "background",
    "history",  "historical", "document", "documents", "information", "database", "lookup",
    "internet", "news",      "keywords"};

}  // namespace

std::string generate_tool_xml(std::span<const ToolDescriptor> tools) {
  std::vector<const ToolDescriptor*> sorted;
  sorted.reserve(tools.size());
  for (const auto& t : tools) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(), [](const ToolDescriptor* a, const ToolDescriptor* b) {
    return std::tuple(a->category, a->server_name, a->tool_name) <
           std::tuple(b->category, b->server_name, b->tool_name);
  });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i - 1]->server_name == sorted[i]->server_name && sorted[i - 1]->tool_name == sorted[i]->tool_name) {
      throw Error(ErrorCode::DuplicateTool, sorted[i]->server_name + "/" + sorted[i]->tool_name);
    }
  }

  std::ostringstream out;
  out << "<available_tools>\n";
  for (const auto* t : sorted) {
    out << "<tool>\n"
        << "  <server_name>" << t->server_name << "</server_name>\n"
        << "  <tool_name>" << t->tool_name << "</tool_name>\n"
        << "  <category>" << to_string(t->category) << "</category>\n"
        << "  <description>" << t->description << "</description>\n"
        << "  <parameters>\n";
    const auto required = t->required_properties();
    if (auto props = t->input_schema.find("properties"); props != t->input_schema.end() && props->is_object()) {
      for (const auto& [name, property] : props->items()) {
        const bool is_required = std::find(required.begin(), required.end(), name) != required.end();
        out << "    " << name << " (" << schema_type(property) << (is_required ? ", required" : ", optional") << ")";
        if (auto d = property.find("description"); d != property.end() && d->is_string()) {
          out << ": " << d->get<std::string>();
        }
        out << "\n";
      }
    }
    out << "  </parameters>\n"
        << "</tool>\n";
  }
  out << "</available_tools>\n";
  return out.str();
}

std::vector<ToolDescriptor> parse_tool_xml(std::string_view text) {
  static const std::regex kParameter(R"(^    (\S+) \(([^,]+), (required|optional)\)(?:: (.*))?$)");
  auto field = [](std::string_view block, std::string_view tag) {
    const std::string open = "<" + std::string(tag) + ">";
    const std::string close = "</" + std::string(tag) + ">";
    const auto a = block.find(open);
    const auto b = a == std::string_view::npos ? a : block.find(close, a + open.size());
    if (b == std::string_view::npos) return std::string();
    return std::string(block.substr(a + open.size(), b - a - open.size()));
  };
  std::vector<ToolDescriptor> tools;
  std::size_t pos = 0;
  while ((pos = text.find("<tool>\n", pos)) != std::string_view::npos) {
    const auto end = text.find("</tool>", pos);
    if (end == std::string_view::npos) break;
    const std::string_view block = text.substr(pos, end - pos);
    ToolDescriptor d;
    d.server_name = field(block, "server_name");
    d.tool_name = field(block, "tool_name");
    d.category = category_from_string(field(block, "category"));
    d.description = field(block, "description");
    json properties = json::object();
    json required = json::array();
    std::istringstream lines(field(block, "parameters"));
    for (std::string line; std::getline(lines, line);) {
      std::smatch m;
      if (!std::regex_match(line, m, kParameter)) continue;
      json property = {{"type", m[2].str()}};
      if (m[4].matched) property["description"] = m[4].str();
      properties[m[1].str()] = std::move(property);
      if (m[3] == "required") required.push_back(m[1].str());
    }
    d.input_schema = {{"type", "object"}, {"properties", std::move(properties)}, {"required", std::move(required)}};
    tools.push_back(std::move(d));
    pos = end;
  }
  return tools;
}

std::string render_tool_call(const ToolCall& call) {
  std::string out;
  out += "<use_mcp_tool>\n";
  out += "<server_name>" + call.server_name + "</server_name>\n";
  out += "<tool_name>" + call.tool_name + "</tool_name>\n";
  // '<' and '>' as JSON escapes
  std::string arguments;
  for (char c : call.arguments.dump(2)) {
    if (c == '<') {
      arguments += "\\u003c";
    } else if (c == '>') {
      arguments += "\\u003e";
    } else {
      arguments += c;
    }
  }
  out += "<arguments>\n" + arguments + "\n</arguments>\n";
  out += "</use_mcp_tool>";
  return out;
}

std::optional<ToolCall> parse_tool_call(std::string_view text) {
  struct Block {
    std::size_t open;
    std::size_t close_end;
  };
  std::vector<Block> blocks;
  std::size_t pos = 0;
  while (true) {
    const auto open = text.find(kBlockOpen, pos);
    const auto stray_close = text.find(kBlockClose, pos);
    if (open == std::string_view::npos) {
      if (stray_close != std::string_view::npos) {
        throw Error(ErrorCode::MalformedBlock, "</use_mcp_tool> without an opening tag",
                    ByteSpan{stray_close, stray_close + kBlockClose.size()});
      }
      break;
    }
    if (stray_close < open) {
      throw Error(ErrorCode::MalformedBlock, "</use_mcp_tool> without an opening tag",
                  ByteSpan{stray_close, stray_close + kBlockClose.size()});
    }
    const auto close = text.find(kBlockClose, open + kBlockOpen.size());
    const auto next_open = text.find(kBlockOpen, open + kBlockOpen.size());
    if (close == std::string_view::npos || next_open < close) {
      throw Error(ErrorCode::MalformedBlock, "unclosed <use_mcp_tool>", ByteSpan{open, text.size()});
    }
    blocks.push_back({open, close + kBlockClose.size()});
    pos = close + kBlockClose.size();
  }
  if (blocks.empty()) return std::nullopt;
  if (blocks.size() > 1) {
    throw Error(ErrorCode::MultipleBlocks, std::to_string(blocks.size()) + " tool-call blocks in one turn",
                ByteSpan{blocks[1].open, blocks[1].close_end});
  }

  const Block& b = blocks.front();
  const std::size_t body_begin = b.open + kBlockOpen.size();
  const std::string_view body = text.substr(body_begin, b.close_end - kBlockClose.size() - body_begin);
  const ByteSpan span{b.open, b.close_end};

  ToolCall call;
  call.server_name = identifier(child(body, "server_name", body_begin), "server_name", span);
  call.tool_name = identifier(child(body, "tool_name", body_begin), "tool_name", span);
  const auto args = trim(child(body, "arguments", body_begin));
  try {
    call.arguments = json::parse(args);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::BadArguments, std::string("arguments are not valid JSON: ") + e.what(), span);
  }
  if (!call.arguments.is_object()) {
    throw Error(ErrorCode::BadArguments, "arguments must be a JSON object", span);
  }
  call.raw_span = span;
  return call;
}

ThinkSplit strip_think(std::string_view text) {
  constexpr std::string_view open = "<think>";
  constexpr std::string_view close = "</think>";
  const auto begin = text.find(open);
  if (begin == std::string_view::npos) return {"", std::string(text)};
  const auto content = begin + open.size();
  const auto end = text.find(close, content);
  if (end == std::string_view::npos) return {std::string(trim(text.substr(content))), ""};
  return {std::string(trim(text.substr(content, end - content))), std::string(trim(text.substr(end + close.size())))};
}

std::optional<StructuredOutput> parse_structured_output(std::string_view text) {
  std::string body;
  if (text.find("<think>") != std::string_view::npos) {
    auto split = strip_think(text);
    body = std::move(split.remainder);
  } else {
    body = std::string(text);
  }

  StructuredOutput out;
  std::size_t present = 0;
  std::string problem;
  for (char key : {'S', 'O', 'A', 'P'}) {
    const std::string open = std::string("<") + key + ">";
    const std::string close = std::string("</") + key + ">";
    const auto b = body.find(open);
    const auto e = body.find(close);
    if (b == std::string::npos && e == std::string::npos) {
      problem += std::string(problem.empty() ? "" : ", ") + "missing <" + key + ">";
      continue;
    }
    ++present;
    if (b == std::string::npos || e == std::string::npos || e < b) {
      problem += std::string(problem.empty() ? "" : ", ") + "unbalanced <" + key + ">";
      continue;
    }
    auto value = trim(std::string_view(body).substr(b + open.size(), e - b - open.size()));
    if (value.empty()) {
      problem += std::string(problem.empty() ? "" : ", ") + "empty <" + key + ">";
      continue;
    }
    out.sections[key] = std::string(value);
  }
  if (present == 4 && out.sections.size() == 4) {
    out.kind = StructuredKind::soap;
    return out;
  }
  if (present > 0) throw Error(ErrorCode::PartialSoap, problem);

  if (const auto end = body.find("<end>"); end != std::string::npos) {
    out.kind = StructuredKind::end_token;
    out.answer = std::string(trim(std::string_view(body).substr(0, end)));
    return out;
  }
  return std::nullopt;
}

std::set<std::string> word_set(std::string_view text) {
  std::set<std::string> words;
  std::string current;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      current += static_cast<char>(std::tolower(u));
    } else if (!current.empty()) {
      words.insert(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.insert(std::move(current));
  return words;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& w : a) common += b.count(w);
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

ToolCategory select_category(std::string_view decision) {
  const auto words = word_set(decision);
  std::size_t vision = 0;
  std::size_t text = 0;
  for (auto w : kVisionWords) vision += words.count(std::string(w));
  for (auto w : kTextWords) text += words.count(std::string(w));
  return text > vision ? ToolCategory::text : ToolCategory::vision;
}

std::vector<ToolMatch> match_tools(std::string_view decision, std::span<const ToolDescriptor> tools) {
  if (tools.empty()) throw Error(ErrorCode::EmptyToolset, "no tools to match against");
  ToolCategory category = select_category(decision);
  const bool any = std::any_of(tools.begin(), tools.end(), [&](const auto& t) { return t.category == category; });
  if (!any) category = category == ToolCategory::vision ? ToolCategory::text : ToolCategory::vision;

  const auto decision_words = word_set(decision);
  std::vector<ToolMatch> ranked;
  for (const auto& t : tools) {
    if (t.category != category) continue;
    ranked.push_back({t, jaccard(decision_words, word_set(t.tool_name + " " + t.description))});
  }
  std::sort(ranked.begin(), ranked.end(), [](const ToolMatch& a, const ToolMatch& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.tool.tool_name, a.tool.server_name) < std::tie(b.tool.tool_name, b.tool.server_name);
  });
  return ranked;
}

}  // namespace vicot
