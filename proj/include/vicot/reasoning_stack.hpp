// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vicot/tool_types.hpp"

namespace vicot {

using BranchId = std::uint32_t;

/// One reasoning round s_t: the decision text, the matched call and the evidence it produced.
struct ReasoningFrame {
  std::size_t index = 0;
  /// Raw Think output of the round: the <think> block, any tool-call XML and trailing text.
  std::string decision;
  std::optional<ToolCall> match;
  std::optional<Evidence> evidence;
  /// Plausible calls that were not taken this round; non-empty makes the frame discoverable.
  std::vector<ToolCall> discover_state;
  std::size_t token_count = 0;

  /// decision + evidence text, in estimated tokens.
  static std::size_t count_tokens(const std::string& decision, const std::optional<Evidence>& evidence);

  friend bool operator==(const ReasoningFrame&, const ReasoningFrame&) = default;
};

/// The user input x: query, image reference and the rough caption that seeds the stack.
struct Origin {
  std::string query;
  std::string image_ref;
  std::string caption;

  friend bool operator==(const Origin&, const Origin&) = default;
};

/// Append-only sequence of frames. Frames are never modified after push; the only way frames
/// leave a stack is the state search (`pop_discoverable`) or taking a `prefix` copy.
class ReasoningStack {
 public:
  ReasoningStack() = default;
  explicit ReasoningStack(Origin origin, BranchId branch_id = 0);

  /// Throws IndexMismatch unless frame.index == size().
  void push(ReasoningFrame frame);

  const Origin& origin() const noexcept { return origin_; }
  std::span<const ReasoningFrame> frames() const noexcept { return frames_; }
  std::size_t size() const noexcept { return frames_.size(); }
  bool empty() const noexcept { return frames_.empty(); }
  const ReasoningFrame& top() const;
  const ReasoningFrame& operator[](std::size_t i) const { return frames_.at(i); }

  /// The last min(k, size()) frames, oldest first. k must be >= 1.
  std::span<const ReasoningFrame> window(std::size_t k) const;

  /// Copy holding the first `length` frames.
  ReasoningStack prefix(std::size_t length) const;

  std::size_t total_tokens() const noexcept;

  BranchId branch_id() const noexcept { return branch_id_; }
  void set_branch_id(BranchId id) noexcept { branch_id_ = id; }
  const std::optional<double>& score() const noexcept { return score_; }
  void set_score(double score) noexcept { score_ = score; }

  friend std::optional<ReasoningFrame> pop_discoverable(ReasoningStack& stack);
  friend bool operator==(const ReasoningStack&, const ReasoningStack&) = default;

 private:
  Origin origin_;
  std::vector<ReasoningFrame> frames_;
  BranchId branch_id_ = 0;
  std::optional<double> score_;
};

/// Functional push: returns stack ∥ frame.
ReasoningStack push(ReasoningStack stack, ReasoningFrame frame);

inline std::span<const ReasoningFrame> window(const ReasoningStack& stack, std::size_t k) {
  return stack.window(k);
}

struct StackPool {
  std::vector<ReasoningStack> branches;
  std::size_t max_width = 1;
};

/// Duplicates the top frame once per candidate (in the given ranked order, at most max_width),
/// each copy carrying one candidate as its match and no evidence yet. Branch ids are 0..W-1.
StackPool branch(const ReasoningStack& stack, std::span<const ToolCall> candidates, std::size_t max_width);

/// Keeps the highest-scoring branch; ties go to the lowest branch id.
ReasoningStack prune(const StackPool& pool, const std::map<BranchId, double>& scores);

/// State search: scans from the top, dropping frames until one with unexplored alternatives
/// is found. That frame stays on the stack and a copy is returned. Returns nothing (and leaves
/// the stack untouched) when no frame is discoverable.
std::optional<ReasoningFrame> pop_discoverable(ReasoningStack& stack);

void to_json(json& j, const ReasoningFrame& frame);
void from_json(const json& j, ReasoningFrame& frame);
void to_json(json& j, const ReasoningStack& stack);
ReasoningStack stack_from_json(const json& j);

}  // namespace vicot
