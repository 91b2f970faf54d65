// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vicot/reasoning_stack.hpp"
#include "vicot/tokens.hpp"

namespace vicot {

enum class Role { system, user, assistant, tool };

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);

struct Turn {
  Role role = Role::user;
  std::string content;

  friend bool operator==(const Turn&, const Turn&) = default;
};

/// A backend-agnostic request. The first turn is the single system turn.
struct PromptBundle {
  std::vector<Turn> turns;
  /// Images attached to the user turns, in order.
  std::vector<std::string> image_refs;

  const std::string& system_text() const;
  /// Sum of per-turn estimates.
  std::size_t estimated_tokens() const;
  /// Role-tagged rendering used for hashing and debugging.
  std::string transcript() const;
  /// FNV-1a 64 over transcript() and image refs.
  std::uint64_t hash() const;

  friend bool operator==(const PromptBundle&, const PromptBundle&) = default;
};

struct ModelTurn {
  std::string text;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  std::chrono::microseconds latency{0};
  std::string backend_id;
};

/// Which queue a request draws from: Think turns, or the two Vision description modes.
enum class Channel { think, rough, detailed };

std::string_view to_string(Channel channel);

class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  virtual std::string backend_id() const = 0;
  virtual ModelTurn complete(Channel channel, const PromptBundle& bundle) = 0;
};

/// Canned responses keyed by (channel, call index). Running past the script throws
/// BackendExhausted; an entry carrying a prompt hash throws PromptDrift when the request differs.
class ScriptedBackend final : public ModelBackend {
 public:
  explicit ScriptedBackend(std::string id = "scripted") : id_(std::move(id)) {}

  void add(Channel channel, std::string text, std::optional<std::uint64_t> prompt_hash = std::nullopt);

  /// {"think":[...], "vision":{"rough":[...], "detailed":[...]}}. Entries are strings or
  /// {"text": ..., "prompt_hash": "<16 hex digits>"}.
  static std::shared_ptr<ScriptedBackend> from_json(const json& script, std::string id = "scripted");

  /// Sleeps this long per prompt token to model endpoint latency.
  void set_latency_per_token(std::chrono::nanoseconds per_token) { latency_per_token_ = per_token; }

  std::string backend_id() const override { return id_; }
  ModelTurn complete(Channel channel, const PromptBundle& bundle) override;

  std::size_t consumed(Channel channel) const;
  std::size_t remaining(Channel channel) const;

 private:
  struct Entry {
    std::string text;
    std::optional<std::uint64_t> prompt_hash;
  };

  std::string id_;
  mutable std::mutex mutex_;
  std::map<std::pair<Channel, std::size_t>, Entry> entries_;
  std::map<Channel, std::size_t> added_;
  std::map<Channel, std::size_t> next_;
  std::chrono::nanoseconds latency_per_token_{0};
};

struct HttpChatConfig {
  /// http://host[:port]/path of a chat-completions endpoint.
  std::string endpoint;
  std::string model;
  /// Environment variable holding a bearer token; empty for none.
  std::string token_env;
  double temperature = 0.0;
  std::chrono::seconds timeout{120};
};

/// Generic JSON chat-completions adapter. Images are inlined as base64 data URLs.
class HttpChatBackend final : public ModelBackend {
 public:
  explicit HttpChatBackend(HttpChatConfig config);

  std::string backend_id() const override { return "http_chat:" + config_.model; }
  ModelTurn complete(Channel channel, const PromptBundle& bundle) override;

  /// The request body sent for `bundle`.
  json request_body(const PromptBundle& bundle) const;

 private:
  HttpChatConfig config_;
  std::string scheme_host_;
  std::string path_;
};

/// Prompt texts with {name} placeholders.
struct Templates {
  std::string system;
  std::string rough_description;
  std::string detailed_description;
  std::string user_turn;
  std::string integration;
  std::string bench_system;

  /// The templates shipped in prompts/, compiled into the library.
  static const Templates& defaults();
  /// Defaults overridden by any "<name>.txt" present in `dir`.
  static Templates load(const std::filesystem::path& dir);
};

/// Replaces every {key} in `text`. Unknown placeholders are left as they are.
std::string fill(std::string_view text, const std::map<std::string, std::string>& values);

/// Think turn. Token counts come from the backend.
ModelTurn think(ModelBackend& backend, const PromptBundle& bundle);

enum class DescribeMode { rough, detailed };

/// Vision turn on `image_ref`. Throws Precondition when the image file does not exist.
ModelTurn describe(ModelBackend& backend, const std::string& image_ref, DescribeMode mode, std::string_view context,
                   const Templates& templates = Templates::defaults());

/// describe() without the file check, for tool outputs that may live on the server side.
ModelTurn describe_unchecked(ModelBackend& backend, const std::string& image_ref, DescribeMode mode,
                             std::string_view context, const Templates& templates = Templates::defaults());

/// The origin rendered as the first user turn.
std::string render_origin(const Origin& origin, const Templates& templates);

/// Turns for one frame: the decision as an assistant turn, then its evidence as a tool turn
/// (or as a user turn when it is host feedback on a turn without a parsed call).
std::vector<Turn> render_frame(const ReasoningFrame& frame);

/// System turn (template with tools_xml, or `system_override` verbatim), the origin, then the
/// last k frames.
PromptBundle assemble_context(const ReasoningStack& stack, std::size_t k, const Templates& templates,
                              std::string_view tools_xml, const std::optional<std::string>& system_override = {});

/// Same layout with every frame of the stack.
PromptBundle assemble_full_context(const ReasoningStack& stack, const Templates& templates, std::string_view tools_xml,
                                   const std::optional<std::string>& system_override = {});

}  // namespace vicot
