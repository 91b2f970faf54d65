// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string_view>

namespace vicot {

/// Token estimate without a tokenizer: ceil(bytes / 4). Monotone in length.
constexpr std::size_t estimate_tokens(std::string_view text) noexcept {
  return (text.size() + 3) / 4;
}

}  // namespace vicot
