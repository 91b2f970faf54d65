// SPDX-License-Identifier: Apache-2.0
#include "vicot/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

namespace vicot {
namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

std::vector<std::string> bleu_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::istringstream in{std::string(text)};
  for (std::string word; in >> word;) {
    std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::tolower(c); });
    tokens.push_back(std::move(word));
  }
  return tokens;
}

double bleu4(std::string_view candidate, std::string_view reference) {
  const auto cand = bleu_tokens(candidate);
  const auto ref = bleu_tokens(reference);
  if (cand.empty() || ref.empty()) return 0.0;

  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cand_counts = ngram_counts(cand, n);
    const auto ref_counts = ngram_counts(ref, n);
    std::size_t total = 0;
    std::size_t matched = 0;
    for (const auto& [gram, count] : cand_counts) {
      total += count;
      if (auto it = ref_counts.find(gram); it != ref_counts.end()) matched += std::min(count, it->second);
    }
    double precision = 0.0;
    if (matched == 0) {
      if (n == 1) return 0.0;
      precision = 1.0 / static_cast<double>(total + 1);
    } else {
      precision = static_cast<double>(matched) / static_cast<double>(total);
    }
    log_sum += 0.25 * std::log(precision);
  }
  const double c = static_cast<double>(cand.size());
  const double r = static_cast<double>(ref.size());
  const double brevity = c > r ? 1.0 : std::exp(1.0 - r / c);
  return std::clamp(brevity * std::exp(log_sum), 0.0, 1.0);
}

double tool_accuracy(std::span<const ToolCall> predicted, std::span<const ToolCall> gold) {
  const std::size_t longest = std::max(predicted.size(), gold.size());
  if (longest == 0) return 1.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < std::min(predicted.size(), gold.size()); ++i) {
    if (predicted[i].tool_name == gold[i].tool_name) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(longest);
}

std::string serialize_calls(std::span<const ToolCall> calls) {
  std::string out;
  for (const auto& call : calls) {
    out += call.server_name + " " + call.tool_name + " " + call.arguments.dump() + "\n";
  }
  return out;
}

}  // namespace vicot
