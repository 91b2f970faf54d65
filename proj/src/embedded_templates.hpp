// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

namespace vicot::detail {

/// Contents of prompts/*.txt keyed by file stem. Generated at configure time.
const std::map<std::string, std::string>& embedded_templates();

}  // namespace vicot::detail
