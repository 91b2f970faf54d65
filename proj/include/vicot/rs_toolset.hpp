// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "vicot/tool_types.hpp"

namespace vicot {

inline constexpr const char* kVisionServer = "mcp_vision_server";
inline constexpr const char* kTextServer = "mcp_text_server";

/// The ten remote-sensing tools (8 vision, 2 text) as the reference servers advertise them.
std::vector<ToolDescriptor> rs_tool_descriptors(const std::string& vision_server = kVisionServer,
                                                const std::string& text_server = kTextServer);

}  // namespace vicot
