// SPDX-License-Identifier: Apache-2.0
#include "vicot/reasoning_stack.hpp"

#include <algorithm>

#include "vicot/tokens.hpp"

namespace vicot {

std::size_t ReasoningFrame::count_tokens(const std::string& decision, const std::optional<Evidence>& evidence) {
  return estimate_tokens(decision) + (evidence ? estimate_tokens(evidence->text) : 0);
}

ReasoningStack::ReasoningStack(Origin origin, BranchId branch_id)
    : origin_(std::move(origin)), branch_id_(branch_id) {}

void ReasoningStack::push(ReasoningFrame frame) {
  if (frame.index != frames_.size()) {
    throw Error(ErrorCode::IndexMismatch, "frame index " + std::to_string(frame.index) +
                                              " pushed onto stack of length " + std::to_string(frames_.size()));
  }
  frames_.push_back(std::move(frame));
}

const ReasoningFrame& ReasoningStack::top() const {
  if (frames_.empty()) throw Error(ErrorCode::Precondition, "top() of an empty reasoning stack");
  return frames_.back();
}

std::span<const ReasoningFrame> ReasoningStack::window(std::size_t k) const {
  if (k == 0) throw Error(ErrorCode::Precondition, "window size must be >= 1");
  const std::size_t n = std::min(k, frames_.size());
  return std::span<const ReasoningFrame>(frames_).last(n);
}

ReasoningStack ReasoningStack::prefix(std::size_t length) const {
  ReasoningStack out(origin_, branch_id_);
  const std::size_t n = std::min(length, frames_.size());
  out.frames_.assign(frames_.begin(), frames_.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

std::size_t ReasoningStack::total_tokens() const noexcept {
  std::size_t total = 0;
  for (const auto& f : frames_) total += f.token_count;
  return total;
}

ReasoningStack push(ReasoningStack stack, ReasoningFrame frame) {
  stack.push(std::move(frame));
  return stack;
}

StackPool branch(const ReasoningStack& stack, std::span<const ToolCall> candidates, std::size_t max_width) {
  if (candidates.size() < 2) {
    throw Error(ErrorCode::TooFewCandidates,
                "branching needs at least 2 candidates, got " + std::to_string(candidates.size()));
  }
  if (stack.empty()) throw Error(ErrorCode::Precondition, "cannot branch an empty stack");
  if (max_width == 0) throw Error(ErrorCode::Precondition, "max_width must be >= 1");

  StackPool pool;
  pool.max_width = max_width;
  const std::size_t width = std::min(candidates.size(), max_width);
  const ReasoningFrame& top = stack.top();
  for (std::size_t i = 0; i < width; ++i) {
    ReasoningStack copy = stack.prefix(stack.size() - 1);
    copy.set_branch_id(static_cast<BranchId>(i));
    ReasoningFrame frame = top;
    frame.match = candidates[i];
    frame.evidence.reset();
    frame.token_count = ReasoningFrame::count_tokens(frame.decision, frame.evidence);
    copy.push(std::move(frame));
    pool.branches.push_back(std::move(copy));
  }
  return pool;
}

ReasoningStack prune(const StackPool& pool, const std::map<BranchId, double>& scores) {
  if (pool.branches.empty() || scores.empty()) throw Error(ErrorCode::EmptyPool, "nothing to prune");
  const ReasoningStack* best = nullptr;
  double best_score = 0.0;
  for (const auto& b : pool.branches) {
    auto it = scores.find(b.branch_id());
    if (it == scores.end()) {
      throw Error(ErrorCode::Precondition, "branch " + std::to_string(b.branch_id()) + " has no score");
    }
    const bool better = best == nullptr || it->second > best_score ||
                        (it->second == best_score && b.branch_id() < best->branch_id());
    if (better) {
      best = &b;
      best_score = it->second;
    }
  }
  ReasoningStack kept = *best;
  kept.set_score(best_score);
  return kept;
}

std::optional<ReasoningFrame> pop_discoverable(ReasoningStack& stack) {
  for (std::size_t i = stack.frames_.size(); i-- > 0;) {
    if (!stack.frames_[i].discover_state.empty()) {
      stack.frames_.resize(i + 1);
      return stack.frames_[i];
    }
  }
  return std::nullopt;
}

void to_json(json& j, const ReasoningFrame& frame) {
  j = json{{"index", frame.index},
           {"decision", frame.decision},
           {"match", frame.match ? json(*frame.match) : json(nullptr)},
           {"evidence", frame.evidence ? json(*frame.evidence) : json(nullptr)},
           {"discover_state", frame.discover_state},
           {"token_count", frame.token_count}};
}

void from_json(const json& j, ReasoningFrame& frame) {
  frame.index = j.at("index").get<std::size_t>();
  frame.decision = j.at("decision").get<std::string>();
  frame.match.reset();
  frame.evidence.reset();
  if (const auto& m = j.at("match"); !m.is_null()) frame.match = m.get<ToolCall>();
  if (const auto& e = j.at("evidence"); !e.is_null()) frame.evidence = e.get<Evidence>();
  frame.discover_state = j.value("discover_state", std::vector<ToolCall>{});
  frame.token_count = j.value("token_count", std::size_t{0});
}

void to_json(json& j, const ReasoningStack& stack) {
  j = json{{"origin",
            {{"query", stack.origin().query},
             {"image_ref", stack.origin().image_ref},
             {"caption", stack.origin().caption}}},
           {"branch_id", stack.branch_id()},
           {"score", stack.score() ? json(*stack.score()) : json(nullptr)},
           {"frames", json::array()}};
  for (const auto& f : stack.frames()) j["frames"].push_back(f);
}

ReasoningStack stack_from_json(const json& j) {
  const auto& o = j.at("origin");
  ReasoningStack stack(Origin{o.value("query", std::string{}), o.value("image_ref", std::string{}),
                              o.value("caption", std::string{})},
                       j.value("branch_id", BranchId{0}));
  if (auto s = j.find("score"); s != j.end() && !s->is_null()) stack.set_score(s->get<double>());
  for (const auto& f : j.at("frames")) stack.push(f.get<ReasoningFrame>());
  return stack;
}

}  // namespace vicot
